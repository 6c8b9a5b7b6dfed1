#include "ast/heterograph.hpp"

#include <algorithm>
#include <cmath>

#include "ast/error.hpp"

namespace ast {

int64_t field_width(Field f) {
  switch (f) {
    case Field::NodeType: return 3;
    case Field::Material: return 1;
    case Field::Displacement: return 3;
    case Field::Velocity: return 3;
    case Field::Stress: return 1;
    case Field::DeltaPosition: return 3;
    case Field::Acceleration: return 3;
    case Field::StressNext: return 1;
  }
  fail("schema", "unknown field");
}

const char* field_name(Field f) {
  switch (f) {
    case Field::NodeType: return "node_type";
    case Field::Material: return "material";
    case Field::Displacement: return "displacement";
    case Field::Velocity: return "velocity";
    case Field::Stress: return "stress";
    case Field::DeltaPosition: return "delta_position";
    case Field::Acceleration: return "acceleration";
    case Field::StressNext: return "stress_next";
  }
  fail("schema", "unknown field");
}

Field parse_field(const std::string& name) {
  for (Field f : {Field::NodeType, Field::Material, Field::Displacement, Field::Velocity,
                  Field::Stress, Field::DeltaPosition, Field::Acceleration, Field::StressNext})
    if (name == field_name(f)) return f;
  fail("schema", "unknown field name '" + name + "'");
}

BoundaryScript make_boundary_script(const Sequence& seq) {
  BoundaryScript bs;
  bs.n_frames = seq.n_frames;
  for (int64_t i = 0; i < seq.n_mesh; ++i)
    if (is_scripted(seq.node_type[static_cast<size_t>(i)]))
      bs.nodes.push_back(static_cast<int32_t>(i));
  const int64_t k = static_cast<int64_t>(bs.nodes.size());
  bs.positions = Tensor<double>::zeros({seq.n_frames * k, 3});
  for (int64_t t = 0; t < seq.n_frames; ++t)
    for (int64_t j = 0; j < k; ++j)
      for (int64_t a = 0; a < 3; ++a)
        bs.positions.at(t * k + j, a) =
            static_cast<double>(seq.positions.at(t * seq.n_mesh + bs.nodes[static_cast<size_t>(j)], a));
  return bs;
}

UnitCellAffine unit_cell_affine(const Box3& box, double margin) {
  double extent = 0;
  for (int a = 0; a < 3; ++a) {
    require(box.hi[a] > box.lo[a], "normalize", "degenerate domain box");
    extent = std::max(extent, (box.hi[a] - box.lo[a]) * (1.0 + margin));
  }
  UnitCellAffine aff;
  aff.scale = 2.0 / extent;
  for (int a = 0; a < 3; ++a) {
    const double center = 0.5 * (box.lo[a] + box.hi[a]);
    aff.shift[a] = -center * aff.scale;
  }
  return aff;
}

SequenceDataset normalize_to_unit_cell(const SequenceDataset& ds, UnitCellAffine* affine_out) {
  const UnitCellAffine aff = unit_cell_affine(ds.domain_box, ds.margin);
  SequenceDataset out = ds;
  for (auto& seq : out.seqs) {
    for (int64_t r = 0; r < seq.positions.rows(); ++r) {
      double p[3];
      for (int a = 0; a < 3; ++a) {
        p[a] = static_cast<double>(seq.positions.at(r, a));
        require(p[a] >= ds.domain_box.lo[a] - 1e-12 && p[a] <= ds.domain_box.hi[a] + 1e-12,
                "normalize", "position outside domain_box");
      }
      aff.apply(p);
      for (int a = 0; a < 3; ++a) seq.positions.at(r, a) = static_cast<float>(p[a]);
    }
  }
  for (int a = 0; a < 3; ++a) {
    out.domain_box.lo[a] = aff.scale * ds.domain_box.lo[a] + aff.shift[a];
    out.domain_box.hi[a] = aff.scale * ds.domain_box.hi[a] + aff.shift[a];
  }
  if (affine_out) *affine_out = aff;
  return out;
}

void validate_dataset(const SequenceDataset& ds) {
  require(!ds.seqs.empty(), "dataset", "empty sequence list");
  require(ds.schema.history >= 0, "dataset", "negative history");
  for (size_t si = 0; si < ds.seqs.size(); ++si) {
    const Sequence& s = ds.seqs[si];
    const std::string tag = "dataset(seq " + std::to_string(si) + ")";
    require(s.n_mesh > 0 && s.n_frames > 0, tag, "empty sequence");
    require(ds.schema.history < s.n_frames, tag, "history >= frame count");
    require(s.positions.rows() == s.n_frames * s.n_mesh && s.positions.cols() == 3, tag,
            "topology mismatch: positions shape");
    require(static_cast<int64_t>(s.node_type.size()) == s.n_mesh, tag, "node_type length");
    for (int32_t t : s.node_type) require(t >= 0 && t <= 2, tag, "bad node type value");
    require(s.m2m_send.size() == s.m2m_recv.size(), tag, "m2m edge arrays differ");
    require(s.e2m_send.size() == s.e2m_recv.size(), tag, "e2m edge arrays differ");
    for (size_t e = 0; e < s.m2m_send.size(); ++e) {
      require(s.m2m_send[e] >= 0 && s.m2m_send[e] < s.n_mesh, tag, "m2m sender out of range");
      require(s.m2m_recv[e] >= 0 && s.m2m_recv[e] < s.n_mesh, tag, "m2m receiver out of range");
    }
    std::vector<char> covered(static_cast<size_t>(std::max<int64_t>(s.n_elem, 1)), 0);
    for (size_t e = 0; e < s.e2m_send.size(); ++e) {
      require(s.e2m_send[e] >= 0 && s.e2m_send[e] < s.n_elem, tag, "e2m sender out of range");
      require(s.e2m_recv[e] >= 0 && s.e2m_recv[e] < s.n_mesh, tag, "e2m receiver out of range");
      covered[static_cast<size_t>(s.e2m_send[e])] = 1;
    }
    for (int64_t e = 0; e < s.n_elem; ++e)
      require(covered[static_cast<size_t>(e)], tag, "element with no e2m edge");
    if (!s.stress.data.empty())
      require(s.stress.rows() == s.n_frames * s.n_elem, tag, "topology mismatch: stress shape");
    if (!s.mesh_material.data.empty())
      require(s.mesh_material.rows() == s.n_mesh, tag, "mesh material length");
    if (!s.elem_material.data.empty())
      require(s.elem_material.rows() == s.n_elem, tag, "elem material length");

    auto needs = [&](const std::vector<Field>& fs, bool elem_side) {
      for (Field f : fs) {
        if (f == Field::Material) {
          const bool present = elem_side ? !s.elem_material.data.empty()
                                         : !s.mesh_material.data.empty();
          require(present, tag, "schema field absent: material");
        }
        if (f == Field::Stress || f == Field::StressNext)
          require(!s.stress.data.empty(), tag, "schema field absent: stress");
        if (f == Field::Velocity || f == Field::Acceleration)
          require(ds.schema.history >= 1, tag, "schema field absent: needs history >= 1");
      }
    };
    needs(ds.schema.mesh_input, false);
    needs(ds.schema.elem_input, true);
    needs(ds.schema.mesh_target, false);
    needs(ds.schema.elem_target, true);
    if (!ds.schema.elem_input.empty() || ds.schema.has_elem_head())
      require(s.n_elem > 0, tag, "schema needs elements but sequence has none");
  }
}

}  // namespace ast
