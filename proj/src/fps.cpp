#include "ast/fps.hpp"

#include <limits>

#include "ast/error.hpp"
#include "ast/parallel.hpp"

namespace ast {

namespace {

double dist2(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::vector<int32_t> fps(const Tensor<double>& positions, int64_t k, int64_t start_index) {
  const int64_t n = positions.rows();
  require(n > 0, "fps", "empty input");
  require(k >= 1 && k <= n, "fps", "k out of range");
  require(start_index >= 0 && start_index < n, "fps", "start index out of range");

  std::vector<int32_t> order;
  order.reserve(static_cast<size_t>(k));
  std::vector<char> chosen(static_cast<size_t>(n), 0);
  std::vector<double> min_d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());

  int64_t current = start_index;
  order.push_back(static_cast<int32_t>(current));
  chosen[static_cast<size_t>(current)] = 1;

  for (int64_t step = 1; step < k; ++step) {
    const double* pc = positions.row_ptr(current);
    parallel_for(n, [&](int64_t i) {
      const double d = dist2(positions.row_ptr(i), pc);
      if (d < min_d2[static_cast<size_t>(i)]) min_d2[static_cast<size_t>(i)] = d;
    });
    int64_t best = -1;
    double best_d = -1;
    for (int64_t i = 0; i < n; ++i) {
      if (chosen[static_cast<size_t>(i)]) continue;
      if (min_d2[static_cast<size_t>(i)] > best_d) {
        best_d = min_d2[static_cast<size_t>(i)];
        best = i;
      }
    }
    current = best;
    order.push_back(static_cast<int32_t>(current));
    chosen[static_cast<size_t>(current)] = 1;
  }
  return order;
}

int64_t fps_start_by_key(const std::vector<uint64_t>& keys) {
  require(!keys.empty(), "fps", "empty key list");
  int64_t best = 0;
  for (int64_t i = 1; i < static_cast<int64_t>(keys.size()); ++i)
    if (keys[static_cast<size_t>(i)] < keys[static_cast<size_t>(best)]) best = i;
  return best;
}

namespace ref {

std::vector<int32_t> fps_greedy(const Tensor<double>& positions, int64_t k, int64_t start_index) {
  const int64_t n = positions.rows();
  require(n > 0 && k >= 1 && k <= n, "fps_greedy", "bad arguments");
  std::vector<int32_t> order{static_cast<int32_t>(start_index)};
  std::vector<char> chosen(static_cast<size_t>(n), 0);
  chosen[static_cast<size_t>(start_index)] = 1;
  while (static_cast<int64_t>(order.size()) < k) {
    int64_t best = -1;
    double best_d = -1;
    for (int64_t i = 0; i < n; ++i) {
      if (chosen[static_cast<size_t>(i)]) continue;
      double d = std::numeric_limits<double>::infinity();
      for (int32_t c : order) d = std::min(d, dist2(positions.row_ptr(i), positions.row_ptr(c)));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    order.push_back(static_cast<int32_t>(best));
    chosen[static_cast<size_t>(best)] = 1;
  }
  return order;
}

}  // namespace ref
}  // namespace ast
