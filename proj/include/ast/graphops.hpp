#pragma once

#include <vector>

#include "ast/nn.hpp"
#include "ast/octree.hpp"

namespace ast {

// Heterograph message passing: e'_ij = f_e(e_ij, v_s_i, v_r_j) (edge-free:
// f_e(v_s_i, v_r_j)), v'_j = f_v(v_r_j, sum_i e'_ij). Both update functions
// are two-layer RWF MLPs followed by LayerNorm; no implicit residual.
struct MessagePassP {
  MlpLnP fe, fv;
  bool with_edges = true;
};

template <class T>
MessagePassP message_pass_params(ParamBuilder<T>& b, const std::string& name, int64_t e_width,
                                 int64_t send_width, int64_t recv_width, int64_t hidden,
                                 int64_t out_width) {
  MessagePassP p;
  p.with_edges = e_width > 0;
  p.fe = b.mlp_ln(name + ".fe", e_width + send_width + recv_width, hidden, out_width);
  p.fv = b.mlp_ln(name + ".fv", recv_width + out_width, hidden, out_width);
  return p;
}

inline Csr identity_csr(int64_t n) {
  Csr csr;
  csr.offsets.resize(static_cast<size_t>(n) + 1);
  csr.perm.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i <= n; ++i) csr.offsets[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < n; ++i) csr.perm[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  return csr;
}

// ---- tape path ----

template <class T>
typename Tape<T>::Var message_pass(Tape<T>& tp, const BoundParams<T>& bp, const MessagePassP& p,
                                   const std::vector<int32_t>& send,
                                   const std::vector<int32_t>& recv, const Csr& recv_csr,
                                   typename Tape<T>::Var e_feats, typename Tape<T>::Var v_send,
                                   typename Tape<T>::Var v_recv) {
  require(send.size() == recv.size(), "message_pass", "edge arrays differ");
  require(recv_csr.segments() == tp.val(v_recv).rows(), "message_pass",
          "receiver grouping does not cover receivers");
  auto vs = tp.gather_rows(v_send, send);
  auto vr = tp.gather_rows(v_recv, recv);
  auto x = p.with_edges ? tp.concat_cols(e_feats, tp.concat_cols(vs, vr)) : tp.concat_cols(vs, vr);
  auto e_out = nn::mlp_ln(tp, bp, p.fe, x);
  auto agg = tp.segment_sum(e_out, recv_csr);
  return nn::mlp_ln(tp, bp, p.fv, tp.concat_cols(v_recv, agg));
}

// ---- eval path (no tape; edge MLP evaluated in blocks) ----

template <class T>
Tensor<T> message_pass_fwd(const ParamStore<T>& ps, const MessagePassP& p,
                           const std::vector<int32_t>& send, const std::vector<int32_t>& recv,
                           const Tensor<T>* e_feats, const Tensor<T>& v_send,
                           const Tensor<T>& v_recv, int64_t block = 32768) {
  require(send.size() == recv.size(), "message_pass", "edge arrays differ");
  const int64_t e_count = static_cast<int64_t>(send.size());
  const int64_t ew = p.with_edges ? e_feats->cols() : 0;
  const int64_t sw = v_send.cols(), rw = v_recv.cols();
  const int64_t out_w = ps.values[p.fe.mlp.l2.b].numel();
  Tensor<T> agg = Tensor<T>::zeros({v_recv.rows(), out_w});
  for (int64_t b0 = 0; b0 < e_count; b0 += block) {
    const int64_t b1 = std::min(e_count, b0 + block);
    Tensor<T> x({b1 - b0, ew + sw + rw});
    parallel_for(b1 - b0, [&](int64_t r) {
      const int64_t e = b0 + r;
      T* row = x.row_ptr(r);
      if (p.with_edges) {
        const T* er = e_feats->row_ptr(e);
        for (int64_t j = 0; j < ew; ++j) row[j] = er[j];
      }
      const T* vs = v_send.row_ptr(send[static_cast<size_t>(e)]);
      for (int64_t j = 0; j < sw; ++j) row[ew + j] = vs[j];
      const T* vr = v_recv.row_ptr(recv[static_cast<size_t>(e)]);
      for (int64_t j = 0; j < rw; ++j) row[ew + sw + j] = vr[j];
    });
    Tensor<T> e_out = nn::mlp_ln_fwd(ps, p.fe, x);
    // accumulate in edge order: deterministic for any block size
    for (int64_t r = 0; r < b1 - b0; ++r) {
      T* a = agg.row_ptr(recv[static_cast<size_t>(b0 + r)]);
      const T* er = e_out.row_ptr(r);
      for (int64_t j = 0; j < out_w; ++j) a[j] += er[j];
    }
  }
  Tensor<T> cat({v_recv.rows(), rw + out_w});
  parallel_for(v_recv.rows(), [&](int64_t i) {
    T* row = cat.row_ptr(i);
    const T* vr = v_recv.row_ptr(i);
    for (int64_t j = 0; j < rw; ++j) row[j] = vr[j];
    const T* a = agg.row_ptr(i);
    for (int64_t j = 0; j < out_w; ++j) row[rw + j] = a[j];
  });
  return nn::mlp_ln_fwd(ps, p.fv, cat);
}

// Test surface: message passing with injected update functions.
// fe(e_row_or_null, vs_row, vr_row, out), fv(vr_row, agg_row, out).
template <class T, class FE, class FV>
Tensor<T> message_pass_with(FE fe, FV fv, int64_t e_out_width, int64_t v_out_width,
                            const std::vector<int32_t>& send, const std::vector<int32_t>& recv,
                            const Tensor<T>* e_feats, const Tensor<T>& v_send,
                            const Tensor<T>& v_recv) {
  const int64_t e_count = static_cast<int64_t>(send.size());
  Tensor<T> agg = Tensor<T>::zeros({v_recv.rows(), e_out_width});
  std::vector<T> e_row(static_cast<size_t>(e_out_width));
  for (int64_t e = 0; e < e_count; ++e) {
    fe(e_feats ? e_feats->row_ptr(e) : nullptr, v_send.row_ptr(send[static_cast<size_t>(e)]),
       v_recv.row_ptr(recv[static_cast<size_t>(e)]), e_row.data());
    T* a = agg.row_ptr(recv[static_cast<size_t>(e)]);
    for (int64_t j = 0; j < e_out_width; ++j) a[j] += e_row[static_cast<size_t>(j)];
  }
  Tensor<T> out({v_recv.rows(), v_out_width});
  for (int64_t i = 0; i < v_recv.rows(); ++i)
    fv(v_recv.row_ptr(i), agg.row_ptr(i), out.row_ptr(i));
  return out;
}

// Initial cell features: arithmetic mean of the member mesh nodes.
template <class T>
typename Tape<T>::Var mesh_to_cell_init(Tape<T>& tp, const CellSet& cs,
                                        typename Tape<T>::Var v_mesh) {
  return tp.segment_sum(v_mesh, cs.cell_to_nodes, /*mean=*/true);
}

template <class T>
Tensor<T> mesh_to_cell_init_fwd(const CellSet& cs, const Tensor<T>& v_mesh) {
  Tensor<T> out;
  kern::segment_sum(v_mesh, cs.cell_to_nodes, out, /*mean=*/true);
  return out;
}

// ---- sparse convolution --------------------------------------------------

// Neighbor table for a 3x3x3 kernel from `from_level` (finer or equal) to
// `to_level`: entry [i*27 + k] is the from-level cell index under offset k
// anchored at 2^s * P_i, or -1 when that cell is empty.
struct ConvPlan {
  int32_t from_level = 0, to_level = 0;
  int64_t n_out = 0, n_in = 0;
  std::vector<int32_t> nbr;  // n_out * 27
};

ConvPlan build_conv_plan(const CellSet& cs, int32_t from_level, int32_t to_level);

// Adjoint table: entry [j*27 + k] is the to-level (coarse) cell i such that
// the forward plan's offset k at i lands on fine cell j, or -1.
ConvPlan build_transposed_plan(const CellSet& cs, int32_t coarse_level, int32_t fine_level);

// Weights for one layer: w is [27 * c_in, c_out], bias [c_out].
struct SparseConvP {
  int32_t w = -1, b = -1;
  int64_t c_in = 0, c_out = 0;
};

template <class T>
SparseConvP sparse_conv_params(ParamBuilder<T>& b, const std::string& name, int64_t c_in,
                               int64_t c_out) {
  SparseConvP p;
  p.c_in = c_in;
  p.c_out = c_out;
  // fan-in counts the full kernel footprint
  p.w = b.store.add(name + ".w", glorot_uniform<T>(b.rng, 27 * c_in, c_out));
  p.b = b.store.add(name + ".b", Tensor<T>::zeros({c_out}));
  return p;
}

template <class T>
typename Tape<T>::Var sparse_conv(Tape<T>& tp, const BoundParams<T>& bp, const SparseConvP& p,
                                  const ConvPlan& plan, typename Tape<T>::Var x) {
  require(tp.val(x).rows() == plan.n_in, "sparse_conv", "input cell count mismatch");
  require(tp.val(x).cols() == p.c_in, "sparse_conv", "input width mismatch");
  typename Tape<T>::Var cat;
  for (int32_t k = 0; k < 27; ++k) {
    std::vector<int32_t> idx(static_cast<size_t>(plan.n_out));
    for (int64_t i = 0; i < plan.n_out; ++i)
      idx[static_cast<size_t>(i)] = plan.nbr[static_cast<size_t>(i * 27 + k)];
    auto g = tp.gather_rows(x, idx);
    cat = k == 0 ? g : tp.concat_cols(cat, g);
  }
  return tp.add_bias(tp.matmul(cat, bp[p.w]), bp[p.b]);
}

template <class T>
Tensor<T> sparse_conv_fwd(const ParamStore<T>& ps, const SparseConvP& p, const ConvPlan& plan,
                          const Tensor<T>& x, int64_t block = 8192) {
  require(x.rows() == plan.n_in && x.cols() == p.c_in, "sparse_conv", "input shape mismatch");
  const Tensor<T>& w = ps.values[p.w];
  const Tensor<T>& bias = ps.values[p.b];
  Tensor<T> out({plan.n_out, p.c_out});
  for (int64_t r0 = 0; r0 < plan.n_out; r0 += block) {
    const int64_t r1 = std::min(plan.n_out, r0 + block);
    Tensor<T> cat = Tensor<T>::zeros({r1 - r0, 27 * p.c_in});
    parallel_for(r1 - r0, [&](int64_t r) {
      T* row = cat.row_ptr(r);
      for (int32_t k = 0; k < 27; ++k) {
        const int32_t src = plan.nbr[static_cast<size_t>((r0 + r) * 27 + k)];
        if (src < 0) continue;
        const T* xs = x.row_ptr(src);
        for (int64_t j = 0; j < p.c_in; ++j) row[k * p.c_in + j] = xs[j];
      }
    });
    Tensor<T> y;
    kern::matmul(cat, w, y);
    kern::add_bias(y, bias);
    std::copy(y.ptr(), y.ptr() + y.numel(), out.row_ptr(r0));
  }
  return out;
}

// OCNN: stride-2 3x3x3 sparse convolutions moving features one level up per
// layer, ReLU between layers (linear output on the last).
template <class T>
typename Tape<T>::Var ocnn(Tape<T>& tp, const BoundParams<T>& bp,
                           const std::vector<SparseConvP>& layers,
                           const std::vector<ConvPlan>& plans, typename Tape<T>::Var x) {
  require(layers.size() == plans.size(), "ocnn", "layer/plan count mismatch");
  for (size_t i = 0; i < layers.size(); ++i) {
    x = sparse_conv(tp, bp, layers[i], plans[i], x);
    if (i + 1 < layers.size()) x = tp.relu(x);
  }
  return x;
}

template <class T>
Tensor<T> ocnn_fwd(const ParamStore<T>& ps, const std::vector<SparseConvP>& layers,
                   const std::vector<ConvPlan>& plans, Tensor<T> x) {
  require(layers.size() == plans.size(), "ocnn", "layer/plan count mismatch");
  for (size_t i = 0; i < layers.size(); ++i) {
    x = sparse_conv_fwd(ps, layers[i], plans[i], x);
    if (i + 1 < layers.size())
      for (auto& v : x.data) v = v > T(0) ? v : T(0);
  }
  return x;
}

}  // namespace ast
