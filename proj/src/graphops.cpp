#include "ast/graphops.hpp"

namespace ast {

ConvPlan build_conv_plan(const CellSet& cs, int32_t from_level, int32_t to_level) {
  require(from_level >= to_level, "conv_plan", "from_level must be the finer level");
  const CellSet::Level& from = cs.level(from_level);
  const CellSet::Level& to = cs.level(to_level);
  const int32_t s = from_level - to_level;
  const int64_t hi = int64_t(1) << from_level;

  ConvPlan plan;
  plan.from_level = from_level;
  plan.to_level = to_level;
  plan.n_out = to.size();
  plan.n_in = from.size();
  plan.nbr.assign(static_cast<size_t>(plan.n_out) * 27, -1);
  parallel_for(plan.n_out, [&](int64_t i) {
    const CellCoord& c = to.coords[static_cast<size_t>(i)];
    const int64_t ax = static_cast<int64_t>(c.x) << s;
    const int64_t ay = static_cast<int64_t>(c.y) << s;
    const int64_t az = static_cast<int64_t>(c.z) << s;
    int32_t k = 0;
    for (int32_t dx = -1; dx <= 1; ++dx)
      for (int32_t dy = -1; dy <= 1; ++dy)
        for (int32_t dz = -1; dz <= 1; ++dz, ++k) {
          const int64_t nx = ax + dx, ny = ay + dy, nz = az + dz;
          if (nx < 0 || ny < 0 || nz < 0 || nx >= hi || ny >= hi || nz >= hi) continue;
          const uint64_t key = morton_encode(
              {from_level, static_cast<int32_t>(nx), static_cast<int32_t>(ny),
               static_cast<int32_t>(nz)});
          auto it = from.key_to_index.find(key);
          if (it != from.key_to_index.end())
            plan.nbr[static_cast<size_t>(i * 27 + k)] = it->second;
        }
  });
  return plan;
}

ConvPlan build_transposed_plan(const CellSet& cs, int32_t coarse_level, int32_t fine_level) {
  require(fine_level >= coarse_level, "conv_plan", "fine level must be >= coarse level");
  const CellSet::Level& fine = cs.level(fine_level);
  const CellSet::Level& coarse = cs.level(coarse_level);
  const int32_t s = fine_level - coarse_level;
  const int64_t hi = int64_t(1) << coarse_level;

  ConvPlan plan;
  plan.from_level = coarse_level;
  plan.to_level = fine_level;
  plan.n_out = fine.size();
  plan.n_in = coarse.size();
  plan.nbr.assign(static_cast<size_t>(plan.n_out) * 27, -1);
  parallel_for(plan.n_out, [&](int64_t j) {
    const CellCoord& c = fine.coords[static_cast<size_t>(j)];
    int32_t k = 0;
    for (int32_t dx = -1; dx <= 1; ++dx)
      for (int32_t dy = -1; dy <= 1; ++dy)
        for (int32_t dz = -1; dz <= 1; ++dz, ++k) {
          // forward offset k at coarse i hits fine j iff 2^s * P_i + d == P_j
          const int64_t rx = static_cast<int64_t>(c.x) - dx;
          const int64_t ry = static_cast<int64_t>(c.y) - dy;
          const int64_t rz = static_cast<int64_t>(c.z) - dz;
          if (rx < 0 || ry < 0 || rz < 0) continue;
          const int64_t mask = (int64_t(1) << s) - 1;
          if ((rx & mask) || (ry & mask) || (rz & mask)) continue;
          const int64_t ix = rx >> s, iy = ry >> s, iz = rz >> s;
          if (ix >= hi || iy >= hi || iz >= hi) continue;
          const uint64_t key = morton_encode(
              {coarse_level, static_cast<int32_t>(ix), static_cast<int32_t>(iy),
               static_cast<int32_t>(iz)});
          auto it = coarse.key_to_index.find(key);
          if (it != coarse.key_to_index.end())
            plan.nbr[static_cast<size_t>(j * 27 + k)] = it->second;
        }
  });
  return plan;
}

}  // namespace ast
