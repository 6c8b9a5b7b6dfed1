#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ast/autodiff.hpp"
#include "ast/rng.hpp"

namespace ast {

// Named parameter tensors. Model structs hold indices into the store, the
// optimizer and checkpoints address entries by name.
template <class T>
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor<T>> values;
  std::unordered_map<std::string, int32_t> index;

  int32_t add(const std::string& name, Tensor<T> t) {
    require(!index.count(name), "params", "duplicate parameter " + name);
    names.push_back(name);
    values.push_back(std::move(t));
    index[name] = static_cast<int32_t>(values.size()) - 1;
    return static_cast<int32_t>(values.size()) - 1;
  }

  int32_t find(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), "params", "unknown parameter " + name);
    return it->second;
  }

  size_t count() const { return values.size(); }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& v : values) n += v.numel();
    return n;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (size_t i = 0; i < values.size(); ++i) out.add(names[i], values[i].template cast<U>());
    return out;
  }
};

// Per-tape leaf vars for every store entry.
template <class T>
struct BoundParams {
  std::vector<typename Tape<T>::Var> vars;
  typename Tape<T>::Var operator[](int32_t id) const { return vars[id]; }
};

template <class T>
BoundParams<T> bind_params(Tape<T>& tp, const ParamStore<T>& ps, bool needs_grad = true) {
  BoundParams<T> bp;
  bp.vars.reserve(ps.count());
  for (const auto& v : ps.values) bp.vars.push_back(tp.leaf(v, needs_grad));
  return bp;
}

// ---- parameter structs ------------------------------------------------------

struct LinearP {
  int32_t w = -1;
  int32_t b = -1;  // -1 means bias-free
};

// weight = diag(exp(s)) * v, s initialized to zero.
struct RwfLinearP {
  int32_t s = -1, v = -1, b = -1;
};

struct LayerNormP {
  int32_t gamma = -1, beta = -1;
};

// Two layers, ReLU between, RWF factorization on both weights.
struct MlpP {
  RwfLinearP l1, l2;
};

// Message-passing MLP: LayerNorm on the output.
struct MlpLnP {
  MlpP mlp;
  LayerNormP ln;
};

struct AttnP {
  LinearP wq, wk, wv;  // bias-free
  LinearP wo;          // with bias
  int32_t heads = 1;
  int32_t head_dim = 64;
};

// (GELU(x W) .* (x V)) W2; bias-free per the GEGLU formulation.
struct GegluP {
  int32_t w = -1, v = -1, w2 = -1;
};

struct CrossBlockP {
  LayerNormP ln_q, ln_ctx, ln_ffn;
  AttnP attn;
  GegluP ffn;
};

struct SelfBlockP {
  LayerNormP ln, ln_ffn;
  AttnP attn;
  GegluP ffn;
};

struct PosEmbP {
  LinearP proj;  // fourier width -> feature width
};

// ---- initialization ---------------------------------------------------------

template <class T>
struct ParamBuilder {
  ParamStore<T>& store;
  Rng& rng;

  LinearP linear(const std::string& name, int64_t din, int64_t dout, bool bias) {
    LinearP p;
    p.w = store.add(name + ".w", glorot_uniform<T>(rng, din, dout));
    if (bias) p.b = store.add(name + ".b", Tensor<T>::zeros({dout}));
    return p;
  }

  RwfLinearP rwf_linear(const std::string& name, int64_t din, int64_t dout) {
    RwfLinearP p;
    p.s = store.add(name + ".s", Tensor<T>::zeros({din}));
    p.v = store.add(name + ".v", glorot_uniform<T>(rng, din, dout));
    p.b = store.add(name + ".b", Tensor<T>::zeros({dout}));
    return p;
  }

  MlpP mlp(const std::string& name, int64_t din, int64_t hidden, int64_t dout) {
    MlpP p;
    p.l1 = rwf_linear(name + ".l1", din, hidden);
    p.l2 = rwf_linear(name + ".l2", hidden, dout);
    return p;
  }

  LayerNormP layer_norm(const std::string& name, int64_t d) {
    LayerNormP p;
    p.gamma = store.add(name + ".gamma", Tensor<T>::full({d}, T(1)));
    p.beta = store.add(name + ".beta", Tensor<T>::zeros({d}));
    return p;
  }

  MlpLnP mlp_ln(const std::string& name, int64_t din, int64_t hidden, int64_t dout) {
    MlpLnP p;
    p.mlp = mlp(name, din, hidden, dout);
    p.ln = layer_norm(name + ".ln", dout);
    return p;
  }

  AttnP attention(const std::string& name, int64_t width, int32_t heads, int32_t head_dim) {
    AttnP p;
    p.heads = heads;
    p.head_dim = head_dim;
    const int64_t proj = static_cast<int64_t>(heads) * head_dim;
    p.wq = linear(name + ".wq", width, proj, false);
    p.wk = linear(name + ".wk", width, proj, false);
    p.wv = linear(name + ".wv", width, proj, false);
    p.wo = linear(name + ".wo", proj, width, true);
    return p;
  }

  GegluP geglu(const std::string& name, int64_t width, int64_t hidden) {
    GegluP p;
    p.w = store.add(name + ".w", glorot_uniform<T>(rng, width, hidden));
    p.v = store.add(name + ".v", glorot_uniform<T>(rng, width, hidden));
    p.w2 = store.add(name + ".w2", glorot_uniform<T>(rng, hidden, width));
    return p;
  }

  CrossBlockP cross_block(const std::string& name, int64_t width, int32_t heads, int32_t head_dim,
                          int64_t ffn_hidden) {
    CrossBlockP p;
    p.ln_q = layer_norm(name + ".ln_q", width);
    p.ln_ctx = layer_norm(name + ".ln_ctx", width);
    p.ln_ffn = layer_norm(name + ".ln_ffn", width);
    p.attn = attention(name + ".attn", width, heads, head_dim);
    p.ffn = geglu(name + ".ffn", width, ffn_hidden);
    return p;
  }

  SelfBlockP self_block(const std::string& name, int64_t width, int32_t heads, int32_t head_dim,
                        int64_t ffn_hidden) {
    SelfBlockP p;
    p.ln = layer_norm(name + ".ln", width);
    p.ln_ffn = layer_norm(name + ".ln_ffn", width);
    p.attn = attention(name + ".attn", width, heads, head_dim);
    p.ffn = geglu(name + ".ffn", width, ffn_hidden);
    return p;
  }

  PosEmbP pos_emb(const std::string& name, int64_t fourier_width, int64_t width) {
    PosEmbP p;
    p.proj = linear(name, fourier_width, width, true);
    return p;
  }
};

// ---- forward passes ---------------------------------------------------------

namespace nn {

constexpr int kFourierFreqs = 16;  // 2^0 .. 2^15 per axis, sin and cos

inline int64_t fourier_width(int64_t pos_dims) { return pos_dims * 2 * kFourierFreqs; }

// Deterministic coordinate featurization used by the positional embedding.
template <class T>
Tensor<T> fourier_features(const Tensor<double>& pos) {
  const int64_t n = pos.rows(), d = pos.cols();
  Tensor<T> out({n, fourier_width(d)});
  parallel_for(n, [&](int64_t i) {
    T* oi = out.row_ptr(i);
    int64_t c = 0;
    for (int64_t a = 0; a < d; ++a) {
      double f = 1.0;
      for (int k = 0; k < kFourierFreqs; ++k, f *= 2.0) {
        oi[c++] = static_cast<T>(std::sin(f * pos.at(i, a)));
        oi[c++] = static_cast<T>(std::cos(f * pos.at(i, a)));
      }
    }
  });
  return out;
}

// --- tape versions ---

template <class T>
typename Tape<T>::Var linear(Tape<T>& tp, const BoundParams<T>& bp, const LinearP& p,
                             typename Tape<T>::Var x) {
  auto y = tp.matmul(x, bp[p.w]);
  if (p.b >= 0) y = tp.add_bias(y, bp[p.b]);
  return y;
}

template <class T>
typename Tape<T>::Var rwf_weight(Tape<T>& tp, const BoundParams<T>& bp, const RwfLinearP& p) {
  return tp.row_scale(bp[p.v], tp.exp(bp[p.s]));
}

template <class T>
typename Tape<T>::Var rwf_linear(Tape<T>& tp, const BoundParams<T>& bp, const RwfLinearP& p,
                                 typename Tape<T>::Var x) {
  return tp.add_bias(tp.matmul(x, rwf_weight(tp, bp, p)), bp[p.b]);
}

template <class T>
typename Tape<T>::Var mlp(Tape<T>& tp, const BoundParams<T>& bp, const MlpP& p,
                          typename Tape<T>::Var x) {
  return rwf_linear(tp, bp, p.l2, tp.relu(rwf_linear(tp, bp, p.l1, x)));
}

template <class T>
typename Tape<T>::Var mlp_ln(Tape<T>& tp, const BoundParams<T>& bp, const MlpLnP& p,
                             typename Tape<T>::Var x) {
  return tp.layer_norm(mlp(tp, bp, p.mlp, x), bp[p.ln.gamma], bp[p.ln.beta]);
}

// softmax(q k^T / sqrt(d_k)) v
template <class T>
typename Tape<T>::Var attention(Tape<T>& tp, typename Tape<T>::Var q, typename Tape<T>::Var k,
                                typename Tape<T>::Var v, T dropout_rate = T(0),
                                Rng* rng = nullptr) {
  const int64_t dk = tp.val(k).cols();
  require(tp.val(q).cols() == dk, "attention", "query/key width mismatch");
  require(tp.val(k).rows() == tp.val(v).rows(), "attention", "key/value count mismatch");
  auto scores = tp.scale(tp.matmul_nt(q, k), T(1) / static_cast<T>(std::sqrt(double(dk))));
  auto weights = tp.dropout(tp.softmax_rows(scores), dropout_rate, rng);
  return tp.matmul(weights, v);
}

template <class T>
typename Tape<T>::Var mha(Tape<T>& tp, const BoundParams<T>& bp, const AttnP& p,
                          typename Tape<T>::Var q, typename Tape<T>::Var k,
                          typename Tape<T>::Var v, T dropout_rate = T(0), Rng* rng = nullptr) {
  auto pq = linear(tp, bp, p.wq, q);
  auto pk = linear(tp, bp, p.wk, k);
  auto pv = linear(tp, bp, p.wv, v);
  typename Tape<T>::Var cat;
  for (int32_t h = 0; h < p.heads; ++h) {
    const int64_t c0 = static_cast<int64_t>(h) * p.head_dim, c1 = c0 + p.head_dim;
    auto head = attention(tp, tp.slice_cols(pq, c0, c1), tp.slice_cols(pk, c0, c1),
                          tp.slice_cols(pv, c0, c1), dropout_rate, rng);
    cat = h == 0 ? head : tp.concat_cols(cat, head);
  }
  return linear(tp, bp, p.wo, cat);
}

template <class T>
typename Tape<T>::Var geglu(Tape<T>& tp, const BoundParams<T>& bp, const GegluP& p,
                            typename Tape<T>::Var x, T dropout_rate = T(0), Rng* rng = nullptr) {
  auto hidden = tp.mul(tp.gelu(tp.matmul(x, bp[p.w])), tp.matmul(x, bp[p.v]));
  hidden = tp.dropout(hidden, dropout_rate, rng);
  return tp.matmul(hidden, bp[p.w2]);
}

// Pre-norm residual cross-attention block; output length equals the query.
template <class T>
typename Tape<T>::Var cross_block(Tape<T>& tp, const BoundParams<T>& bp, const CrossBlockP& p,
                                  typename Tape<T>::Var q, typename Tape<T>::Var ctx,
                                  T dropout_rate = T(0), Rng* rng = nullptr) {
  auto qn = tp.layer_norm(q, bp[p.ln_q.gamma], bp[p.ln_q.beta]);
  auto cn = tp.layer_norm(ctx, bp[p.ln_ctx.gamma], bp[p.ln_ctx.beta]);
  auto h = tp.add(q, mha(tp, bp, p.attn, qn, cn, cn, dropout_rate, rng));
  auto hn = tp.layer_norm(h, bp[p.ln_ffn.gamma], bp[p.ln_ffn.beta]);
  return tp.add(h, geglu(tp, bp, p.ffn, hn, dropout_rate, rng));
}

template <class T>
typename Tape<T>::Var self_block(Tape<T>& tp, const BoundParams<T>& bp, const SelfBlockP& p,
                                 typename Tape<T>::Var x, T dropout_rate = T(0),
                                 Rng* rng = nullptr) {
  auto xn = tp.layer_norm(x, bp[p.ln.gamma], bp[p.ln.beta]);
  auto h = tp.add(x, mha(tp, bp, p.attn, xn, xn, xn, dropout_rate, rng));
  auto hn = tp.layer_norm(h, bp[p.ln_ffn.gamma], bp[p.ln_ffn.beta]);
  return tp.add(h, geglu(tp, bp, p.ffn, hn, dropout_rate, rng));
}

// x + Linear(FourierFeatures(pos))
template <class T>
typename Tape<T>::Var pos_emb(Tape<T>& tp, const BoundParams<T>& bp, const PosEmbP& p,
                              typename Tape<T>::Var x, const Tensor<double>& pos) {
  require(tp.val(x).rows() == pos.rows(), "pos_emb", "row count mismatch");
  auto ff = tp.constant(fourier_features<T>(pos));
  return tp.add(x, linear(tp, bp, p.proj, ff));
}

// --- plain (eval) versions; no tape, no dropout ---

template <class T>
Tensor<T> linear_fwd(const ParamStore<T>& ps, const LinearP& p, const Tensor<T>& x) {
  Tensor<T> y;
  kern::matmul(x, ps.values[p.w], y);
  if (p.b >= 0) kern::add_bias(y, ps.values[p.b]);
  return y;
}

template <class T>
Tensor<T> rwf_weight_fwd(const ParamStore<T>& ps, const RwfLinearP& p) {
  const Tensor<T>& s = ps.values[p.s];
  Tensor<T> w = ps.values[p.v];
  for (int64_t i = 0; i < w.rows(); ++i) {
    const T e = std::exp(s[i]);
    T* wi = w.row_ptr(i);
    for (int64_t j = 0; j < w.cols(); ++j) wi[j] *= e;
  }
  return w;
}

template <class T>
Tensor<T> rwf_linear_fwd(const ParamStore<T>& ps, const RwfLinearP& p, const Tensor<T>& x) {
  Tensor<T> y;
  kern::matmul(x, rwf_weight_fwd(ps, p), y);
  kern::add_bias(y, ps.values[p.b]);
  return y;
}

template <class T>
Tensor<T> mlp_fwd(const ParamStore<T>& ps, const MlpP& p, const Tensor<T>& x) {
  Tensor<T> h = rwf_linear_fwd(ps, p.l1, x);
  for (auto& v : h.data) v = v > T(0) ? v : T(0);
  return rwf_linear_fwd(ps, p.l2, h);
}

template <class T>
Tensor<T> mlp_ln_fwd(const ParamStore<T>& ps, const MlpLnP& p, const Tensor<T>& x) {
  Tensor<T> h = mlp_fwd(ps, p.mlp, x);
  Tensor<T> out;
  kern::layernorm_rows(h, ps.values[p.ln.gamma], ps.values[p.ln.beta], out);
  return out;
}

template <class T>
Tensor<T> attention_fwd(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  Tensor<T> scores;
  kern::matmul_nt(q, k, scores);
  const T inv = T(1) / static_cast<T>(std::sqrt(double(k.cols())));
  for (auto& s : scores.data) s *= inv;
  Tensor<T> w;
  kern::softmax_rows(scores, w);
  Tensor<T> out;
  kern::matmul(w, v, out);
  return out;
}

// Heads run sequentially so the transient score matrix stays head-sized.
template <class T>
Tensor<T> mha_fwd(const ParamStore<T>& ps, const AttnP& p, const Tensor<T>& q, const Tensor<T>& k,
                  const Tensor<T>& v) {
  Tensor<T> pq = linear_fwd(ps, p.wq, q);
  Tensor<T> pk = linear_fwd(ps, p.wk, k);
  Tensor<T> pv = linear_fwd(ps, p.wv, v);
  const int64_t proj = static_cast<int64_t>(p.heads) * p.head_dim;
  Tensor<T> cat({q.rows(), proj});
  for (int32_t h = 0; h < p.heads; ++h) {
    const int64_t c0 = static_cast<int64_t>(h) * p.head_dim;
    auto slice = [&](const Tensor<T>& m) {
      Tensor<T> s({m.rows(), p.head_dim});
      parallel_for(m.rows(), [&](int64_t i) {
        for (int64_t j = 0; j < p.head_dim; ++j) s.at(i, j) = m.at(i, c0 + j);
      });
      return s;
    };
    Tensor<T> head = attention_fwd(slice(pq), slice(pk), slice(pv));
    parallel_for(head.rows(), [&](int64_t i) {
      for (int64_t j = 0; j < p.head_dim; ++j) cat.at(i, c0 + j) = head.at(i, j);
    });
  }
  return linear_fwd(ps, p.wo, cat);
}

template <class T>
Tensor<T> geglu_fwd(const ParamStore<T>& ps, const GegluP& p, const Tensor<T>& x,
                    int64_t row_block = 16384) {
  const Tensor<T>& w = ps.values[p.w];
  const Tensor<T>& v = ps.values[p.v];
  const Tensor<T>& w2 = ps.values[p.w2];
  Tensor<T> out({x.rows(), w2.cols()});
  for (int64_t r0 = 0; r0 < x.rows(); r0 += row_block) {
    const int64_t r1 = std::min(x.rows(), r0 + row_block);
    Tensor<T> blk({r1 - r0, x.cols()});
    std::copy(x.row_ptr(r0), x.row_ptr(r0) + (r1 - r0) * x.cols(), blk.ptr());
    Tensor<T> a, b;
    kern::matmul(blk, w, a);
    kern::matmul(blk, v, b);
    parallel_for(a.numel(), [&](int64_t i) { a[i] = kern::gelu_scalar(a[i]) * b[i]; }, 1 << 15);
    Tensor<T> y;
    kern::matmul(a, w2, y);
    std::copy(y.ptr(), y.ptr() + y.numel(), out.row_ptr(r0));
  }
  return out;
}

template <class T>
Tensor<T> cross_block_fwd(const ParamStore<T>& ps, const CrossBlockP& p, const Tensor<T>& q,
                          const Tensor<T>& ctx) {
  Tensor<T> qn, cn;
  kern::layernorm_rows(q, ps.values[p.ln_q.gamma], ps.values[p.ln_q.beta], qn);
  kern::layernorm_rows(ctx, ps.values[p.ln_ctx.gamma], ps.values[p.ln_ctx.beta], cn);
  Tensor<T> h = mha_fwd(ps, p.attn, qn, cn, cn);
  parallel_for(h.numel(), [&](int64_t i) { h[i] += q[i]; }, 1 << 15);
  Tensor<T> hn;
  kern::layernorm_rows(h, ps.values[p.ln_ffn.gamma], ps.values[p.ln_ffn.beta], hn);
  Tensor<T> f = geglu_fwd(ps, p.ffn, hn);
  parallel_for(f.numel(), [&](int64_t i) { f[i] += h[i]; }, 1 << 15);
  return f;
}

template <class T>
Tensor<T> self_block_fwd(const ParamStore<T>& ps, const SelfBlockP& p, const Tensor<T>& x) {
  Tensor<T> xn;
  kern::layernorm_rows(x, ps.values[p.ln.gamma], ps.values[p.ln.beta], xn);
  Tensor<T> h = mha_fwd(ps, p.attn, xn, xn, xn);
  parallel_for(h.numel(), [&](int64_t i) { h[i] += x[i]; }, 1 << 15);
  Tensor<T> hn;
  kern::layernorm_rows(h, ps.values[p.ln_ffn.gamma], ps.values[p.ln_ffn.beta], hn);
  Tensor<T> f = geglu_fwd(ps, p.ffn, hn);
  parallel_for(f.numel(), [&](int64_t i) { f[i] += h[i]; }, 1 << 15);
  return f;
}

template <class T>
Tensor<T> pos_emb_fwd(const ParamStore<T>& ps, const PosEmbP& p, const Tensor<T>& x,
                      const Tensor<double>& pos) {
  Tensor<T> ff = fourier_features<T>(pos);
  Tensor<T> proj = linear_fwd(ps, p.proj, ff);
  parallel_for(proj.numel(), [&](int64_t i) { proj[i] += x[i]; }, 1 << 15);
  return proj;
}

}  // namespace nn
}  // namespace ast
