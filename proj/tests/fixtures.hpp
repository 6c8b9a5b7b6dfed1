#pragma once

#include "ast/heterograph.hpp"
#include "ast/rng.hpp"

namespace ast::testfix {

// Random valid sequence with positions already inside the unit cell:
// linear per-frame drift, one boundary node, random sparse connectivity.
inline Sequence random_mesh_sequence(int64_t n_mesh, int64_t n_elem, int64_t frames,
                                     uint64_t seed) {
  Rng rng(seed);
  Sequence s;
  s.n_mesh = n_mesh;
  s.n_elem = n_elem;
  s.n_frames = frames;
  Tensor<float> base({n_mesh, 3});
  for (auto& v : base.data) v = static_cast<float>(rng.uniform(-0.8, 0.8));
  Tensor<float> drift({n_mesh, 3});
  for (auto& v : drift.data) v = static_cast<float>(rng.uniform(-0.01, 0.01));
  s.positions = Tensor<float>::zeros({frames * n_mesh, 3});
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t i = 0; i < n_mesh; ++i)
      for (int64_t a = 0; a < 3; ++a)
        s.positions.at(t * n_mesh + i, a) = base.at(i, a) + static_cast<float>(t) * drift.at(i, a);
  s.node_type.assign(static_cast<size_t>(n_mesh), 0);
  s.node_type[0] = 1;
  for (int64_t i = 0; i < n_mesh; ++i)
    for (int r = 0; r < 3; ++r) {
      int64_t j = rng.uniform_index(n_mesh);
      if (j == i) j = (j + 1) % n_mesh;
      s.m2m_send.push_back(static_cast<int32_t>(i));
      s.m2m_recv.push_back(static_cast<int32_t>(j));
      s.m2m_send.push_back(static_cast<int32_t>(j));
      s.m2m_recv.push_back(static_cast<int32_t>(i));
    }
  for (int64_t e = 0; e < n_elem; ++e)
    for (int r = 0; r < 4; ++r) {
      s.e2m_send.push_back(static_cast<int32_t>(e));
      s.e2m_recv.push_back(static_cast<int32_t>(rng.uniform_index(n_mesh)));
    }
  s.stress = Tensor<float>::zeros({frames * n_elem, 1});
  for (auto& v : s.stress.data) v = static_cast<float>(rng.uniform(0, 1));
  return s;
}

inline Schema quasi_static_schema() {
  Schema sc;
  sc.regime = Regime::QuasiStatic;
  sc.history = 0;
  sc.mesh_input = {Field::NodeType, Field::Displacement};
  sc.elem_input = {Field::Displacement};
  sc.mesh_target = {Field::DeltaPosition};
  sc.elem_target = {Field::StressNext};
  return sc;
}

}  // namespace ast::testfix
