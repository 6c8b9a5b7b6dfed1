#pragma once

#include <cstdint>
#include <vector>

#include "ast/tensor.hpp"

namespace ast {

// Greedy max-min farthest point sampling over positions (n x 3), squared
// Euclidean distances at 64-bit. The first pick is start_index; every later
// pick maximizes the distance to the chosen set, ties broken by smallest
// index. Deterministic. Requires 1 <= k <= n.
std::vector<int32_t> fps(const Tensor<double>& positions, int64_t k, int64_t start_index);

// Default start rule: index whose key (owning-cell Morton key) is smallest,
// ties by smallest index.
int64_t fps_start_by_key(const std::vector<uint64_t>& keys);

namespace ref {
// Brute-force greedy oracle: recomputes all chosen-set distances per pick.
std::vector<int32_t> fps_greedy(const Tensor<double>& positions, int64_t k, int64_t start_index);
}  // namespace ref

}  // namespace ast
