#pragma once

#include <array>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ast/kernels.hpp"
#include "ast/morton.hpp"
#include "ast/tensor.hpp"

namespace ast {

// Per-frame octree over a point set in [-1,1]^3. Only levels
// [min_level, leaf_level] are materialized; within a level cells are sorted
// by Morton key, which makes the structure independent of input point order.
class CellSet {
 public:
  struct Level {
    std::vector<uint64_t> keys;  // ascending
    std::vector<CellCoord> coords;
    Tensor<double> centers;  // n_cells x 3, geometric box centers
    std::unordered_map<uint64_t, int32_t> key_to_index;

    int64_t size() const { return static_cast<int64_t>(keys.size()); }
  };

  int32_t leaf_level = 0;
  int32_t min_level = 0;
  std::vector<Level> levels;          // levels[l - min_level]
  std::vector<int32_t> node_to_cell;  // leaf cell index per input point
  Csr cell_to_nodes;                  // points grouped by leaf cell

  const Level& level(int32_t l) const {
    require(l >= min_level && l <= leaf_level, "cell_set", "level not materialized");
    return levels[static_cast<size_t>(l - min_level)];
  }

  int64_t cells_at(int32_t l) const { return level(l).size(); }
  const Level& leaf() const { return level(leaf_level); }
};

// Build the cell hierarchy for positions (n x 3, all inside [-1,1]^3).
// leaf_level >= min_level >= 0; the point set must be non-empty.
CellSet build_cell_set(const Tensor<double>& positions, int32_t leaf_level, int32_t min_level);

// Cell at P_l + offset if non-empty, otherwise nullopt (read as zero
// features by sparse convolution).
std::optional<int32_t> neighbor_lookup(const CellSet& cs, int32_t l, int32_t cell_index,
                                       const std::array<int32_t, 3>& offset);

}  // namespace ast
