#pragma once

#include <cstdint>

namespace ast {

// Integer cell address in the level-l uniform grid over [-1,1]^3.
// Valid coordinates satisfy 0 <= x,y,z < 2^level.
struct CellCoord {
  int32_t level = 0;
  int32_t x = 0, y = 0, z = 0;

  bool operator==(const CellCoord&) const = default;
};

// Side length of a level-l cell: 2^(1-l) (the level-0 cell spans [-1,1]).
double cell_side(int32_t level);

// Shuffled-key (Morton) encoding with x in the lowest bit of each triplet.
// Injective per level; supports levels up to 21 (63 key bits).
uint64_t morton_encode(const CellCoord& c);
CellCoord morton_decode(uint64_t key, int32_t level);

// Grid index of a position along all three axes:
// clamp(floor((p + 1) * 2^(l-1)), 0, 2^l - 1) per axis.
// p must lie inside [-1,1]^3.
CellCoord cell_coord(const double* p, int32_t level);

}  // namespace ast
