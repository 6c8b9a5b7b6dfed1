#include "ast/octree.hpp"

#include <algorithm>

#include "ast/parallel.hpp"

namespace ast {

CellSet build_cell_set(const Tensor<double>& positions, int32_t leaf_level, int32_t min_level) {
  const int64_t n = positions.rows();
  require(n > 0, "build_cell_set", "empty point set");
  require(positions.cols() == 3, "build_cell_set", "positions must be n x 3");
  require(leaf_level >= min_level && min_level >= 0, "build_cell_set", "bad level range");

  CellSet cs;
  cs.leaf_level = leaf_level;
  cs.min_level = min_level;
  cs.levels.resize(static_cast<size_t>(leaf_level - min_level) + 1);

  std::vector<uint64_t> point_keys(static_cast<size_t>(n));
  parallel_for(n, [&](int64_t i) {
    point_keys[static_cast<size_t>(i)] = morton_encode(cell_coord(positions.row_ptr(i), leaf_level));
  });

  // Canonical leaf order: unique keys ascending.
  std::vector<uint64_t> keys = point_keys;
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  auto fill_level = [&](int32_t l, std::vector<uint64_t> level_keys) {
    CellSet::Level& lev = cs.levels[static_cast<size_t>(l - min_level)];
    lev.keys = std::move(level_keys);
    const int64_t m = lev.size();
    lev.coords.resize(static_cast<size_t>(m));
    lev.centers = Tensor<double>::zeros({m, 3});
    lev.key_to_index.reserve(static_cast<size_t>(m) * 2);
    const double side = cell_side(l);
    for (int64_t i = 0; i < m; ++i) {
      const CellCoord c = morton_decode(lev.keys[static_cast<size_t>(i)], l);
      lev.coords[static_cast<size_t>(i)] = c;
      lev.centers.at(i, 0) = -1.0 + (c.x + 0.5) * side;
      lev.centers.at(i, 1) = -1.0 + (c.y + 0.5) * side;
      lev.centers.at(i, 2) = -1.0 + (c.z + 0.5) * side;
      lev.key_to_index.emplace(lev.keys[static_cast<size_t>(i)], static_cast<int32_t>(i));
    }
  };

  fill_level(leaf_level, keys);
  for (int32_t l = leaf_level - 1; l >= min_level; --l) {
    // Parent key drops one octal digit.
    std::vector<uint64_t> parents = cs.levels[static_cast<size_t>(l + 1 - min_level)].keys;
    for (auto& k : parents) k >>= 3;
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    fill_level(l, std::move(parents));
  }

  const CellSet::Level& leaf = cs.leaf();
  cs.node_to_cell.resize(static_cast<size_t>(n));
  parallel_for(n, [&](int64_t i) {
    cs.node_to_cell[static_cast<size_t>(i)] =
        leaf.key_to_index.at(point_keys[static_cast<size_t>(i)]);
  });
  cs.cell_to_nodes = group_by(cs.node_to_cell, leaf.size());
  return cs;
}

std::optional<int32_t> neighbor_lookup(const CellSet& cs, int32_t l, int32_t cell_index,
                                       const std::array<int32_t, 3>& offset) {
  const CellSet::Level& lev = cs.level(l);
  require(cell_index >= 0 && cell_index < lev.size(), "neighbor_lookup", "cell index out of range");
  const CellCoord& c = lev.coords[static_cast<size_t>(cell_index)];
  const int64_t hi = int64_t(1) << l;
  const int64_t nx = c.x + offset[0], ny = c.y + offset[1], nz = c.z + offset[2];
  if (nx < 0 || ny < 0 || nz < 0 || nx >= hi || ny >= hi || nz >= hi) return std::nullopt;
  CellCoord q{l, static_cast<int32_t>(nx), static_cast<int32_t>(ny), static_cast<int32_t>(nz)};
  auto it = lev.key_to_index.find(morton_encode(q));
  if (it == lev.key_to_index.end()) return std::nullopt;
  return it->second;
}

}  // namespace ast
