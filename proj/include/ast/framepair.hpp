#pragma once

#include <cmath>

#include "ast/heterograph.hpp"
#include "ast/kernels.hpp"
#include "ast/rng.hpp"

namespace ast {

// Assembled per-frame model input. Feature matrices are in the training
// scalar type T; positions stay 64-bit for the spatial structures.
template <class T>
struct HeteroGraph {
  Tensor<T> mesh_feats;  // n_mesh x schema.mesh_input_width
  Tensor<T> elem_feats;  // n_elem x schema.elem_input_width
  Tensor<double> mesh_pos;
  Tensor<double> elem_pos;  // element centroids
  std::vector<int32_t> node_type;
  std::vector<int32_t> m2m_send, m2m_recv;
  std::vector<int32_t> e2m_send, e2m_recv;
  std::vector<int32_t> m2e_send, m2e_recv;  // transpose of e2m
  Tensor<T> m2m_feats, e2m_feats, m2e_feats;

  int64_t n_mesh() const { return mesh_pos.rows(); }
  int64_t n_elem() const { return elem_pos.rows(); }
};

template <class T>
struct TargetFields {
  Tensor<T> mesh;  // n_mesh x schema.mesh_target_width
  Tensor<T> elem;  // n_elem x schema.elem_target_width (empty without head)
};

template <class T>
struct FramePair {
  HeteroGraph<T> input;
  TargetFields<T> target;
};

inline Tensor<double> elem_centroids(const Tensor<double>& mesh_pos,
                                     const std::vector<int32_t>& e2m_send,
                                     const std::vector<int32_t>& e2m_recv, int64_t n_elem) {
  Tensor<double> cent({n_elem, 3});
  std::vector<int32_t> count(static_cast<size_t>(n_elem), 0);
  for (size_t k = 0; k < e2m_send.size(); ++k) {
    const int32_t e = e2m_send[k];
    for (int64_t a = 0; a < 3; ++a) cent.at(e, a) += mesh_pos.at(e2m_recv[k], a);
    count[static_cast<size_t>(e)]++;
  }
  for (int64_t e = 0; e < n_elem; ++e) {
    require(count[static_cast<size_t>(e)] > 0, "assemble", "element with no e2m edge");
    for (int64_t a = 0; a < 3; ++a) cent.at(e, a) /= count[static_cast<size_t>(e)];
  }
  return cent;
}

// Current-state inputs for graph assembly. xprev is required when the schema
// uses velocity/acceleration; stress_t when it uses a stress input.
struct FrameState {
  const Tensor<double>* x0 = nullptr;
  const Tensor<double>* xt = nullptr;
  const Tensor<double>* xprev = nullptr;
  const Tensor<float>* stress_t = nullptr;
};

namespace detail {

// edge feature: p0_s - p0_r | norm | pt_s - pt_r | norm  (8 columns)
template <class T>
Tensor<T> edge_features(const std::vector<int32_t>& send, const std::vector<int32_t>& recv,
                        const Tensor<double>& s0, const Tensor<double>& r0,
                        const Tensor<double>& st, const Tensor<double>& rt) {
  const int64_t e_count = static_cast<int64_t>(send.size());
  Tensor<T> out({e_count, 8});
  parallel_for(e_count, [&](int64_t k) {
    const int32_t s = send[static_cast<size_t>(k)];
    const int32_t r = recv[static_cast<size_t>(k)];
    double d0[3], dt[3], n0 = 0, nt = 0;
    for (int64_t a = 0; a < 3; ++a) {
      d0[a] = s0.at(s, a) - r0.at(r, a);
      dt[a] = st.at(s, a) - rt.at(r, a);
      n0 += d0[a] * d0[a];
      nt += dt[a] * dt[a];
    }
    T* row = out.row_ptr(k);
    for (int64_t a = 0; a < 3; ++a) row[a] = static_cast<T>(d0[a]);
    row[3] = static_cast<T>(std::sqrt(n0));
    for (int64_t a = 0; a < 3; ++a) row[4 + a] = static_cast<T>(dt[a]);
    row[7] = static_cast<T>(std::sqrt(nt));
  });
  return out;
}

template <class T>
void fill_node_fields(Tensor<T>& out, const std::vector<Field>& fields, const Sequence& topo,
                      bool elem_side, const Tensor<double>& p0, const Tensor<double>& pt,
                      const Tensor<double>* pprev, const Tensor<float>* stress_t,
                      const std::vector<int32_t>* node_type) {
  const int64_t n = out.rows();
  int64_t col = 0;
  for (Field f : fields) {
    switch (f) {
      case Field::NodeType:
        require(node_type != nullptr, "assemble", "node_type only defined on mesh nodes");
        for (int64_t i = 0; i < n; ++i)
          out.at(i, col + (*node_type)[static_cast<size_t>(i)]) = T(1);
        break;
      case Field::Material: {
        const Tensor<float>& m = elem_side ? topo.elem_material : topo.mesh_material;
        require(!m.data.empty(), "assemble", "schema field absent: material");
        for (int64_t i = 0; i < n; ++i) out.at(i, col) = static_cast<T>(m.at(i, 0));
        break;
      }
      case Field::Displacement:
        for (int64_t i = 0; i < n; ++i)
          for (int64_t a = 0; a < 3; ++a)
            out.at(i, col + a) = static_cast<T>(pt.at(i, a) - p0.at(i, a));
        break;
      case Field::Velocity:
        require(pprev != nullptr, "assemble", "velocity needs history >= 1");
        for (int64_t i = 0; i < n; ++i)
          for (int64_t a = 0; a < 3; ++a)
            out.at(i, col + a) = static_cast<T>(pt.at(i, a) - pprev->at(i, a));
        break;
      case Field::Stress:
        require(stress_t != nullptr, "assemble", "schema field absent: stress");
        require(elem_side, "assemble", "stress input lives on elements");
        for (int64_t i = 0; i < n; ++i) out.at(i, col) = static_cast<T>(stress_t->at(i, 0));
        break;
      default:
        fail("assemble", "target field used as input");
    }
    col += field_width(f);
  }
}

}  // namespace detail

template <class T>
HeteroGraph<T> assemble_graph(const Sequence& topo, const Schema& schema, const FrameState& st) {
  require(st.x0 && st.xt, "assemble", "missing positions");
  HeteroGraph<T> g;
  g.mesh_pos = *st.xt;
  g.node_type = topo.node_type;
  g.m2m_send = topo.m2m_send;
  g.m2m_recv = topo.m2m_recv;
  g.e2m_send = topo.e2m_send;
  g.e2m_recv = topo.e2m_recv;
  g.m2e_send = topo.e2m_recv;
  g.m2e_recv = topo.e2m_send;

  const Tensor<double> cent0 = elem_centroids(*st.x0, topo.e2m_send, topo.e2m_recv, topo.n_elem);
  g.elem_pos = elem_centroids(*st.xt, topo.e2m_send, topo.e2m_recv, topo.n_elem);
  Tensor<double> cent_prev;
  if (st.xprev) cent_prev = elem_centroids(*st.xprev, topo.e2m_send, topo.e2m_recv, topo.n_elem);

  g.mesh_feats = Tensor<T>::zeros({topo.n_mesh, schema.mesh_input_width()});
  detail::fill_node_fields(g.mesh_feats, schema.mesh_input, topo, false, *st.x0, *st.xt, st.xprev,
                           nullptr, &topo.node_type);
  g.elem_feats = Tensor<T>::zeros({topo.n_elem, schema.elem_input_width()});
  detail::fill_node_fields(g.elem_feats, schema.elem_input, topo, true, cent0, g.elem_pos,
                           st.xprev ? &cent_prev : nullptr, st.stress_t, nullptr);

  g.m2m_feats = detail::edge_features<T>(g.m2m_send, g.m2m_recv, *st.x0, *st.x0, *st.xt, *st.xt);
  g.e2m_feats = detail::edge_features<T>(g.e2m_send, g.e2m_recv, cent0, *st.x0, g.elem_pos, *st.xt);
  g.m2e_feats = detail::edge_features<T>(g.m2e_send, g.m2e_recv, *st.x0, cent0, *st.xt, g.elem_pos);
  return g;
}

// Gaussian position noise on non-scripted mesh nodes.
inline Tensor<double> noisy_positions(const Tensor<double>& xt,
                                      const std::vector<int32_t>& node_type, double scale,
                                      Rng& rng) {
  Tensor<double> out = xt;
  if (scale <= 0) return out;
  for (int64_t i = 0; i < out.rows(); ++i) {
    const bool frozen = is_scripted(node_type[static_cast<size_t>(i)]);
    for (int64_t a = 0; a < 3; ++a) {
      const double eps = rng.normal() * scale;  // draw regardless, for fixed stream layout
      if (!frozen) out.at(i, a) += eps;
    }
  }
  return out;
}

// Builds (input, target) for predicting frame t+1 from frame t. When
// noisy_xt is given it replaces frame t's positions: every position-derived
// input is recomputed from it and delta/acceleration targets absorb the
// correction, so the model learns to denoise.
template <class T>
FramePair<T> build_frame_pair(const Sequence& seq, const Schema& schema, int64_t t,
                              const Tensor<double>* noisy_xt = nullptr) {
  require(t >= schema.history && t < seq.n_frames - 1, "build_frame_pair", "t out of range");
  const Tensor<double> x0 = seq.positions_at(0);
  const Tensor<double> xt_clean = seq.positions_at(t);
  const Tensor<double>& xt = noisy_xt ? *noisy_xt : xt_clean;
  Tensor<double> xprev;
  if (schema.history >= 1) xprev = seq.positions_at(t - 1);

  Tensor<float> stress_t;
  bool use_stress_input = false;
  for (Field f : schema.elem_input) use_stress_input |= f == Field::Stress;
  if (use_stress_input) {
    stress_t = Tensor<float>::zeros({seq.n_elem, 1});
    for (int64_t e = 0; e < seq.n_elem; ++e)
      stress_t.at(e, 0) = static_cast<float>(seq.stress_at(t, e));
  }

  FrameState st;
  st.x0 = &x0;
  st.xt = &xt;
  st.xprev = schema.history >= 1 ? &xprev : nullptr;
  st.stress_t = use_stress_input ? &stress_t : nullptr;

  FramePair<T> pair;
  pair.input = assemble_graph<T>(seq, schema, st);

  const Tensor<double> xnext = seq.positions_at(t + 1);
  pair.target.mesh = Tensor<T>::zeros({seq.n_mesh, schema.mesh_target_width()});
  int64_t col = 0;
  for (Field f : schema.mesh_target) {
    switch (f) {
      case Field::DeltaPosition:
        for (int64_t i = 0; i < seq.n_mesh; ++i)
          for (int64_t a = 0; a < 3; ++a)
            pair.target.mesh.at(i, col + a) = static_cast<T>(xnext.at(i, a) - xt.at(i, a));
        break;
      case Field::Acceleration:
        require(schema.history >= 1, "build_frame_pair", "acceleration needs history >= 1");
        for (int64_t i = 0; i < seq.n_mesh; ++i)
          for (int64_t a = 0; a < 3; ++a)
            pair.target.mesh.at(i, col + a) =
                static_cast<T>(xnext.at(i, a) - 2 * xt.at(i, a) + xprev.at(i, a));
        break;
      default:
        fail("build_frame_pair", "unsupported mesh target field");
    }
    col += field_width(f);
  }

  if (schema.has_elem_head()) {
    pair.target.elem = Tensor<T>::zeros({seq.n_elem, schema.elem_target_width()});
    col = 0;
    for (Field f : schema.elem_target) {
      require(f == Field::StressNext, "build_frame_pair", "unsupported elem target field");
      require(!seq.stress.data.empty(), "build_frame_pair", "schema field absent: stress");
      for (int64_t e = 0; e < seq.n_elem; ++e)
        pair.target.elem.at(e, col) = static_cast<T>(seq.stress_at(t + 1, e));
      col += field_width(f);
    }
  }
  return pair;
}

}  // namespace ast
