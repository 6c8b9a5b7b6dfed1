#pragma once

#include <array>
#include <string>
#include <vector>

#include "ast/tensor.hpp"

namespace ast {

struct Box3 {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
};

enum class NodeType : int32_t { Interior = 0, Boundary = 1, Obstacle = 2 };

// Nodes whose motion is prescribed externally (and therefore masked out of
// the loss and overwritten during rollout).
inline bool is_scripted(int32_t node_type) { return node_type != 0; }

enum class Regime { QuasiStatic, Dynamic };

// Feature vocabulary for dataset schemas.
enum class Field {
  NodeType,       // one-hot, width 3
  Material,       // width 1
  Displacement,   // x_t - x_0, width 3
  Velocity,       // x_t - x_{t-1}, width 3 (needs history >= 1)
  Stress,         // width 1
  DeltaPosition,  // target: x_{t+1} - x_t, width 3
  Acceleration,   // target: x_{t+1} - 2 x_t + x_{t-1}, width 3
  StressNext,     // target: stress at t+1, width 1
};

int64_t field_width(Field f);
const char* field_name(Field f);
Field parse_field(const std::string& name);

struct Schema {
  Regime regime = Regime::QuasiStatic;
  int32_t history = 0;
  std::vector<Field> mesh_input, elem_input, mesh_target, elem_target;

  static int64_t width(const std::vector<Field>& fs) {
    int64_t w = 0;
    for (Field f : fs) w += field_width(f);
    return w;
  }
  int64_t mesh_input_width() const { return width(mesh_input); }
  int64_t elem_input_width() const { return width(elem_input); }
  int64_t mesh_target_width() const { return width(mesh_target); }
  int64_t elem_target_width() const { return width(elem_target); }
  bool has_elem_head() const { return !elem_target.empty(); }
};

// One trajectory. Topology (counts and edge lists) is shared by all frames;
// positions and stress are stored frame-major. Immutable after construction.
struct Sequence {
  int64_t n_mesh = 0, n_elem = 0, n_frames = 0;
  Tensor<float> positions;         // [n_frames * n_mesh, 3]
  std::vector<int32_t> node_type;  // n_mesh, values from NodeType
  Tensor<float> mesh_material;     // [n_mesh, 1] or empty
  Tensor<float> elem_material;     // [n_elem, 1] or empty
  Tensor<float> stress;            // [n_frames * n_elem, 1] or empty
  std::vector<int32_t> m2m_send, m2m_recv;  // directed mesh edges
  std::vector<int32_t> e2m_send, e2m_recv;  // element -> mesh incidence

  Tensor<double> positions_at(int64_t t) const {
    Tensor<double> out({n_mesh, 3});
    for (int64_t i = 0; i < n_mesh; ++i)
      for (int64_t j = 0; j < 3; ++j)
        out.at(i, j) = static_cast<double>(positions.at(t * n_mesh + i, j));
    return out;
  }

  double stress_at(int64_t t, int64_t e) const {
    return static_cast<double>(stress.at(t * n_elem + e, 0));
  }

  int64_t pair_count(int32_t history) const {
    const int64_t n = n_frames - 1 - history;
    return n > 0 ? n : 0;
  }
};

struct SequenceDataset {
  Schema schema;
  Box3 domain_box;
  double margin = 0.05;
  std::vector<Sequence> seqs;

  int64_t total_pairs() const {
    int64_t n = 0;
    for (const auto& s : seqs) n += s.pair_count(schema.history);
    return n;
  }
};

// Prescribed positions of the scripted (boundary/obstacle) nodes for every
// frame of one sequence.
struct BoundaryScript {
  std::vector<int32_t> nodes;  // ascending
  Tensor<double> positions;    // [n_frames * nodes.size(), 3]
  int64_t n_frames = 0;

  const double* at(int64_t t, int64_t k) const {
    return positions.row_ptr(t * static_cast<int64_t>(nodes.size()) + k);
  }
};

BoundaryScript make_boundary_script(const Sequence& seq);

// Isotropic map into the unit cell: p' = scale * p + shift.
struct UnitCellAffine {
  double scale = 1;
  std::array<double, 3> shift{0, 0, 0};

  void apply(double* p) const {
    for (int a = 0; a < 3; ++a) p[a] = scale * p[a] + shift[a];
  }
  void invert(double* p) const {
    for (int a = 0; a < 3; ++a) p[a] = (p[a] - shift[a]) / scale;
  }
};

// Affine that maps box (inflated about its center by `margin`) into [-1,1]^3.
UnitCellAffine unit_cell_affine(const Box3& box, double margin);

// Maps every stored position of every frame through the affine derived from
// ds.domain_box. Fails if any position lies outside the box.
SequenceDataset normalize_to_unit_cell(const SequenceDataset& ds, UnitCellAffine* affine_out);

// Full invariant check (edge ranges, incidence coverage, schema presence).
void validate_dataset(const SequenceDataset& ds);

}  // namespace ast
