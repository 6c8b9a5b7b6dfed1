#include "ast/morton.hpp"

#include <cmath>

#include "ast/error.hpp"

namespace ast {

double cell_side(int32_t level) { return std::ldexp(2.0, -level); }

namespace {

uint64_t spread_bits(uint64_t v) {
  v &= 0x1fffffULL;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

uint64_t compact_bits(uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffffULL;
  return v;
}

}  // namespace

uint64_t morton_encode(const CellCoord& c) {
  require(c.level >= 0 && c.level <= 21, "morton", "level out of range");
  const int64_t n = int64_t(1) << c.level;
  require(c.x >= 0 && c.x < n && c.y >= 0 && c.y < n && c.z >= 0 && c.z < n, "morton",
          "coordinate out of range for level");
  return spread_bits(static_cast<uint64_t>(c.x)) | (spread_bits(static_cast<uint64_t>(c.y)) << 1) |
         (spread_bits(static_cast<uint64_t>(c.z)) << 2);
}

CellCoord morton_decode(uint64_t key, int32_t level) {
  require(level >= 0 && level <= 21, "morton", "level out of range");
  CellCoord c;
  c.level = level;
  c.x = static_cast<int32_t>(compact_bits(key));
  c.y = static_cast<int32_t>(compact_bits(key >> 1));
  c.z = static_cast<int32_t>(compact_bits(key >> 2));
  const int64_t n = int64_t(1) << level;
  require(c.x < n && c.y < n && c.z < n, "morton", "key out of range for level");
  return c;
}

CellCoord cell_coord(const double* p, int32_t level) {
  CellCoord c;
  c.level = level;
  const int64_t hi = (int64_t(1) << level) - 1;
  const double scale = std::ldexp(1.0, level - 1);  // 2^(l-1)
  int32_t* out[3] = {&c.x, &c.y, &c.z};
  for (int a = 0; a < 3; ++a) {
    require(p[a] >= -1.0 && p[a] <= 1.0, "cell_coord", "position outside unit cell");
    int64_t idx = static_cast<int64_t>(std::floor((p[a] + 1.0) * scale));
    if (idx < 0) idx = 0;
    if (idx > hi) idx = hi;
    *out[a] = static_cast<int32_t>(idx);
  }
  return c;
}

}  // namespace ast
