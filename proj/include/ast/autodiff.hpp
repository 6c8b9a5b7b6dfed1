#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "ast/kernels.hpp"
#include "ast/rng.hpp"
#include "ast/tensor.hpp"

namespace ast {

// Reverse-mode tape. Nodes are appended in evaluation order (a Wengert list),
// so walking the list backwards is a valid topological order. Gradients are
// dense tensors allocated on first touch; ops parallelize over output rows
// only, which keeps every run bit-identical for any thread count.
template <class T>
class Tape {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  const Tensor<T>& val(Var v) const { return nodes_[v.id].value; }

  // Gradient of v after backward(); zero tensor if v never received one.
  Tensor<T> grad_of(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.numel() == 0) return Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  Var leaf(Tensor<T> value, bool needs_grad = false) { return push(std::move(value), needs_grad); }

  Var constant(Tensor<T> value) { return push(std::move(value), false); }

  void backward(Var loss) {
    require(val(loss).numel() == 1, "backward", "loss must be a scalar");
    require(val(loss).all_finite(), "backward", "non-finite loss");
    grad(loss.id)[0] = T(1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs || !n.back || n.grad.numel() == 0) continue;
      n.back(*this, n.grad);
    }
  }

  size_t size() const { return nodes_.size(); }
  bool needs(Var v) const { return nodes_[v.id].needs; }

  // ---- ops ----------------------------------------------------------------

  Var add(Var a, Var b) {
    require(val(a).same_shape(val(b)), "add", "shape mismatch");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    parallel_for(out.numel(), [&](int64_t i) { out[i] += vb[i]; }, 1 << 15);
    Var o = push(std::move(out), needs(a) || needs(b));
    set_back(o, [a, b](Tape& tp, const Tensor<T>& g) {
      tp.accum(a, g);
      tp.accum(b, g);
    });
    return o;
  }

  Var sub(Var a, Var b) {
    require(val(a).same_shape(val(b)), "sub", "shape mismatch");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    parallel_for(out.numel(), [&](int64_t i) { out[i] -= vb[i]; }, 1 << 15);
    Var o = push(std::move(out), needs(a) || needs(b));
    set_back(o, [a, b](Tape& tp, const Tensor<T>& g) {
      tp.accum(a, g);
      tp.accum_scaled(b, g, T(-1));
    });
    return o;
  }

  Var mul(Var a, Var b) {
    require(val(a).same_shape(val(b)), "mul", "shape mismatch");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    parallel_for(out.numel(), [&](int64_t i) { out[i] *= vb[i]; }, 1 << 15);
    Var o = push(std::move(out), needs(a) || needs(b));
    set_back(o, [a, b](Tape& tp, const Tensor<T>& g) {
      tp.accum_mul(a, g, tp.val(b));
      tp.accum_mul(b, g, tp.val(a));
    });
    return o;
  }

  Var scale(Var a, T c) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v *= c;
    Var o = push(std::move(out), needs(a));
    set_back(o, [a, c](Tape& tp, const Tensor<T>& g) { tp.accum_scaled(a, g, c); });
    return o;
  }

  Var matmul(Var a, Var b) {
    Tensor<T> out;
    kern::matmul(val(a), val(b), out);
    Var o = push(std::move(out), needs(a) || needs(b));
    set_back(o, [a, b](Tape& tp, const Tensor<T>& g) {
      if (tp.needs(a)) {
        Tensor<T> ga;
        kern::matmul_nt(g, tp.val(b), ga);
        tp.accum(a, ga);
      }
      if (tp.needs(b)) {
        Tensor<T> gb;
        kern::matmul_tn(tp.val(a), g, gb);
        tp.accum(b, gb);
      }
    });
    return o;
  }

  // out = a * b^T
  Var matmul_nt(Var a, Var b) {
    Tensor<T> out;
    kern::matmul_nt(val(a), val(b), out);
    Var o = push(std::move(out), needs(a) || needs(b));
    set_back(o, [a, b](Tape& tp, const Tensor<T>& g) {
      if (tp.needs(a)) {
        Tensor<T> ga;
        kern::matmul(g, tp.val(b), ga);
        tp.accum(a, ga);
      }
      if (tp.needs(b)) {
        Tensor<T> gb;
        kern::matmul_tn(g, tp.val(a), gb);
        tp.accum(b, gb);
      }
    });
    return o;
  }

  Var add_bias(Var x, Var bias) {
    Tensor<T> out = val(x);
    kern::add_bias(out, val(bias));
    Var o = push(std::move(out), needs(x) || needs(bias));
    set_back(o, [x, bias](Tape& tp, const Tensor<T>& g) {
      tp.accum(x, g);
      if (tp.needs(bias)) {
        Tensor<T> gb = Tensor<T>::zeros({g.cols()});
        for (int64_t i = 0; i < g.rows(); ++i)
          for (int64_t j = 0; j < g.cols(); ++j) gb[j] += g.at(i, j);
        tp.accum(bias, gb);
      }
    });
    return o;
  }

  Var relu(Var x) {
    Tensor<T> out;
    kern::pointwise(val(x), out, [](T v) { return v > T(0) ? v : T(0); });
    Var o = push(std::move(out), needs(x));
    set_back(o, [x](Tape& tp, const Tensor<T>& g) {
      const Tensor<T>& vx = tp.val(x);
      Tensor<T>& gx = tp.grad(x.id);
      parallel_for(g.numel(), [&](int64_t i) { gx[i] += vx[i] > T(0) ? g[i] : T(0); }, 1 << 15);
    });
    return o;
  }

  Var gelu(Var x) {
    Tensor<T> out;
    kern::pointwise(val(x), out, [](T v) { return kern::gelu_scalar(v); });
    Var o = push(std::move(out), needs(x));
    set_back(o, [x](Tape& tp, const Tensor<T>& g) {
      const Tensor<T>& vx = tp.val(x);
      Tensor<T>& gx = tp.grad(x.id);
      parallel_for(g.numel(), [&](int64_t i) { gx[i] += g[i] * kern::gelu_grad_scalar(vx[i]); },
                   1 << 14);
    });
    return o;
  }

  Var exp(Var x) {
    Tensor<T> out;
    kern::pointwise(val(x), out, [](T v) { return std::exp(v); });
    Var o = push(std::move(out), needs(x));
    set_back(o, [x, o](Tape& tp, const Tensor<T>& g) {
      const Tensor<T>& y = tp.val(o);
      Tensor<T>& gx = tp.grad(x.id);
      parallel_for(g.numel(), [&](int64_t i) { gx[i] += g[i] * y[i]; }, 1 << 15);
    });
    return o;
  }

  // out[i, j] = v[i, j] * s[i]  (per-row scale; grads to both inputs)
  Var row_scale(Var v, Var s) {
    const Tensor<T>& vv = val(v);
    const Tensor<T>& vs = val(s);
    require(vs.numel() == vv.rows(), "row_scale", "scale length != rows");
    Tensor<T> out = vv;
    parallel_for(vv.rows(), [&](int64_t i) {
      T* oi = out.row_ptr(i);
      for (int64_t j = 0; j < vv.cols(); ++j) oi[j] *= vs[i];
    });
    Var o = push(std::move(out), needs(v) || needs(s));
    set_back(o, [v, s](Tape& tp, const Tensor<T>& g) {
      const Tensor<T>& vv = tp.val(v);
      const Tensor<T>& vs = tp.val(s);
      if (tp.needs(v)) {
        Tensor<T>& gv = tp.grad(v.id);
        parallel_for(g.rows(), [&](int64_t i) {
          for (int64_t j = 0; j < g.cols(); ++j) gv.at(i, j) += g.at(i, j) * vs[i];
        });
      }
      if (tp.needs(s)) {
        Tensor<T>& gs = tp.grad(s.id);
        parallel_for(g.rows(), [&](int64_t i) {
          T acc = 0;
          for (int64_t j = 0; j < g.cols(); ++j) acc += g.at(i, j) * vv.at(i, j);
          gs[i] += acc;
        });
      }
    });
    return o;
  }

  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    Tensor<T> out, mean, rstd;
    kern::layernorm_rows(val(x), val(gamma), val(beta), out, &mean, &rstd, eps);
    Var o = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
    set_back(o, [x, gamma, beta, mean, rstd](Tape& tp, const Tensor<T>& g) {
      const Tensor<T>& vx = tp.val(x);
      const Tensor<T>& vgamma = tp.val(gamma);
      const int64_t n = vx.rows(), d = vx.cols();
      if (tp.needs(gamma) || tp.needs(beta)) {
        Tensor<T> ggamma = Tensor<T>::zeros({d}), gbeta = Tensor<T>::zeros({d});
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j) {
            const T xhat = (vx.at(i, j) - mean[i]) * rstd[i];
            ggamma[j] += g.at(i, j) * xhat;
            gbeta[j] += g.at(i, j);
          }
        if (tp.needs(gamma)) tp.accum(gamma, ggamma);
        if (tp.needs(beta)) tp.accum(beta, gbeta);
      }
      if (tp.needs(x)) {
        Tensor<T>& gx = tp.grad(x.id);
        parallel_for(n, [&](int64_t i) {
          T mean_h = 0, mean_hx = 0;
          for (int64_t j = 0; j < d; ++j) {
            const T xhat = (vx.at(i, j) - mean[i]) * rstd[i];
            const T h = g.at(i, j) * vgamma[j];
            mean_h += h;
            mean_hx += h * xhat;
          }
          mean_h /= T(d);
          mean_hx /= T(d);
          for (int64_t j = 0; j < d; ++j) {
            const T xhat = (vx.at(i, j) - mean[i]) * rstd[i];
            const T h = g.at(i, j) * vgamma[j];
            gx.at(i, j) += rstd[i] * (h - mean_h - xhat * mean_hx);
          }
        });
      }
    });
    return o;
  }

  Var softmax_rows(Var x) {
    Tensor<T> out;
    kern::softmax_rows(val(x), out);
    Var o = push(std::move(out), needs(x));
    set_back(o, [x, o](Tape& tp, const Tensor<T>& g) {
      const Tensor<T>& y = tp.val(o);
      Tensor<T>& gx = tp.grad(x.id);
      parallel_for(y.rows(), [&](int64_t i) {
        T dot = 0;
        for (int64_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (int64_t j = 0; j < y.cols(); ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      });
    });
    return o;
  }

  // Inverted dropout; rate <= 0 or a null rng disables it.
  Var dropout(Var x, T rate, Rng* rng) {
    if (rate <= T(0) || rng == nullptr) return x;
    const T keep = T(1) - rate;
    Tensor<T> mask(val(x).shape);
    for (auto& m : mask.data) m = rng->uniform() < static_cast<double>(keep) ? T(1) / keep : T(0);
    return mul(x, constant(std::move(mask)));
  }

  Var concat_cols(Var a, Var b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    require(va.rows() == vb.rows(), "concat_cols", "row count mismatch");
    const int64_t n = va.rows(), da = va.cols(), db = vb.cols();
    Tensor<T> out({n, da + db});
    parallel_for(n, [&](int64_t i) {
      T* oi = out.row_ptr(i);
      const T* ai = va.row_ptr(i);
      const T* bi = vb.row_ptr(i);
      for (int64_t j = 0; j < da; ++j) oi[j] = ai[j];
      for (int64_t j = 0; j < db; ++j) oi[da + j] = bi[j];
    });
    Var o = push(std::move(out), needs(a) || needs(b));
    set_back(o, [a, b, da, db](Tape& tp, const Tensor<T>& g) {
      if (tp.needs(a)) {
        Tensor<T>& ga = tp.grad(a.id);
        parallel_for(g.rows(), [&](int64_t i) {
          for (int64_t j = 0; j < da; ++j) ga.at(i, j) += g.at(i, j);
        });
      }
      if (tp.needs(b)) {
        Tensor<T>& gb = tp.grad(b.id);
        parallel_for(g.rows(), [&](int64_t i) {
          for (int64_t j = 0; j < db; ++j) gb.at(i, j) += g.at(i, da + j);
        });
      }
    });
    return o;
  }

  Var slice_cols(Var x, int64_t c0, int64_t c1) {
    const Tensor<T>& vx = val(x);
    require(0 <= c0 && c0 < c1 && c1 <= vx.cols(), "slice_cols", "bad column range");
    Tensor<T> out({vx.rows(), c1 - c0});
    parallel_for(vx.rows(), [&](int64_t i) {
      for (int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = vx.at(i, j);
    });
    Var o = push(std::move(out), needs(x));
    set_back(o, [x, c0](Tape& tp, const Tensor<T>& g) {
      Tensor<T>& gx = tp.grad(x.id);
      parallel_for(g.rows(), [&](int64_t i) {
        for (int64_t j = 0; j < g.cols(); ++j) gx.at(i, c0 + j) += g.at(i, j);
      });
    });
    return o;
  }

  // Row gather; -1 entries read as zero rows. The backward scatter groups
  // output rows by source so grad accumulation stays deterministic.
  Var gather_rows(Var x, const std::vector<int32_t>& idx) {
    Tensor<T> out;
    kern::gather_rows(val(x), idx, out);
    Var o = push(std::move(out), needs(x));
    if (needs(x)) {
      const int64_t n_src = val(x).rows();
      std::vector<int32_t> keys, pos;
      keys.reserve(idx.size());
      pos.reserve(idx.size());
      for (size_t i = 0; i < idx.size(); ++i)
        if (idx[i] >= 0) {
          keys.push_back(idx[i]);
          pos.push_back(static_cast<int32_t>(i));
        }
      Csr csr = group_by(keys, n_src);
      set_back(o, [x, csr = std::move(csr), pos = std::move(pos)](Tape& tp, const Tensor<T>& g) {
        Tensor<T>& gx = tp.grad(x.id);
        const int64_t d = g.cols();
        parallel_for(csr.segments(), [&](int64_t s) {
          T* gs = gx.row_ptr(s);
          for (int64_t e = csr.offsets[s]; e < csr.offsets[s + 1]; ++e) {
            const T* ge = g.row_ptr(pos[csr.perm[e]]);
            for (int64_t j = 0; j < d; ++j) gs[j] += ge[j];
          }
        });
      });
    }
    return o;
  }

  // Segment reduction over rows of x grouped by csr.
  Var segment_sum(Var x, const Csr& csr, bool mean = false) {
    Tensor<T> out;
    kern::segment_sum(val(x), csr, out, mean);
    Var o = push(std::move(out), needs(x));
    if (needs(x)) {
      set_back(o, [x, csr, mean](Tape& tp, const Tensor<T>& g) {
        Tensor<T>& gx = tp.grad(x.id);
        const int64_t d = g.cols();
        parallel_for(csr.segments(), [&](int64_t k) {
          const int64_t lo = csr.offsets[k], hi = csr.offsets[k + 1];
          const T w = (mean && hi > lo) ? T(1) / T(hi - lo) : T(1);
          const T* gk = g.row_ptr(k);
          for (int64_t e = lo; e < hi; ++e) {
            T* gr = gx.row_ptr(csr.perm[e]);
            for (int64_t j = 0; j < d; ++j) gr[j] += w * gk[j];
          }
        });
      });
    }
    return o;
  }

  Var sum_all(Var x) {
    T acc = 0;
    for (T v : val(x).data) acc += v;
    Tensor<T> out({1});
    out[0] = acc;
    Var o = push(std::move(out), needs(x));
    set_back(o, [x](Tape& tp, const Tensor<T>& g) {
      if (!tp.needs(x)) return;
      Tensor<T>& gx = tp.grad(x.id);
      const T c = g[0];
      for (auto& v : gx.data) v += c;
    });
    return o;
  }

  Tensor<T>& grad(int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&, const Tensor<T>&)> back;
    bool needs = false;
  };

  std::vector<Node> nodes_;

  Var push(Tensor<T> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  template <class F>
  void set_back(Var o, F f) {
    if (!nodes_[o.id].needs) return;
    nodes_[o.id].back = std::move(f);
  }

  void accum(Var v, const Tensor<T>& g) {
    if (!needs(v)) return;
    Tensor<T>& gv = grad(v.id);
    parallel_for(g.numel(), [&](int64_t i) { gv[i] += g[i]; }, 1 << 15);
  }

  void accum_scaled(Var v, const Tensor<T>& g, T c) {
    if (!needs(v)) return;
    Tensor<T>& gv = grad(v.id);
    parallel_for(g.numel(), [&](int64_t i) { gv[i] += c * g[i]; }, 1 << 15);
  }

  void accum_mul(Var v, const Tensor<T>& g, const Tensor<T>& other) {
    if (!needs(v)) return;
    Tensor<T>& gv = grad(v.id);
    parallel_for(g.numel(), [&](int64_t i) { gv[i] += g[i] * other[i]; }, 1 << 15);
  }
};

}  // namespace ast
