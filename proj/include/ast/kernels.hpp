#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ast/parallel.hpp"
#include "ast/tensor.hpp"

namespace ast {

// Edge list grouped by segment key (receiver node, owning cell, ...).
// perm holds edge indices sorted stably by key; offsets[k]..offsets[k+1]
// delimit segment k. Stable order keeps every reduction bit-reproducible.
struct Csr {
  std::vector<int64_t> offsets;
  std::vector<int32_t> perm;
  int64_t segments() const { return static_cast<int64_t>(offsets.size()) - 1; }
};

inline Csr group_by(const std::vector<int32_t>& keys, int64_t n_segments) {
  Csr csr;
  csr.offsets.assign(static_cast<size_t>(n_segments) + 1, 0);
  for (int32_t k : keys) {
    require(k >= 0 && k < n_segments, "group_by", "segment key out of range");
    csr.offsets[static_cast<size_t>(k) + 1]++;
  }
  for (int64_t i = 0; i < n_segments; ++i) csr.offsets[i + 1] += csr.offsets[i];
  csr.perm.resize(keys.size());
  std::vector<int64_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
  for (size_t e = 0; e < keys.size(); ++e) csr.perm[static_cast<size_t>(cursor[keys[e]]++)] = static_cast<int32_t>(e);
  return csr;
}

namespace kern {

// C[N x M] = A[N x K] * B[K x M]; parallel over rows of C.
template <class T>
void matmul(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  const int64_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul", "inner dimensions differ");
  out = Tensor<T>::zeros({n, m});
  parallel_for(
      n,
      [&](int64_t i) {
        T* ci = out.row_ptr(i);
        const T* ai = a.row_ptr(i);
        for (int64_t p = 0; p < k; ++p) {
          const T aip = ai[p];
          const T* bp = b.row_ptr(p);
          for (int64_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
      },
      std::max<int64_t>(int64_t(1), 16384 / std::max<int64_t>(int64_t(1), k * m)));
}

// C[N x K] = A[N x M] * B[K x M]^T
template <class T>
void matmul_nt(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  const int64_t n = a.rows(), m = a.cols(), k = b.rows();
  require(b.cols() == m, "matmul_nt", "inner dimensions differ");
  out = Tensor<T>::zeros({n, k});
  parallel_for(
      n,
      [&](int64_t i) {
        const T* ai = a.row_ptr(i);
        T* ci = out.row_ptr(i);
        for (int64_t j = 0; j < k; ++j) {
          const T* bj = b.row_ptr(j);
          T acc = 0;
          for (int64_t p = 0; p < m; ++p) acc += ai[p] * bj[p];
          ci[j] = acc;
        }
      },
      std::max<int64_t>(int64_t(1), 16384 / std::max<int64_t>(int64_t(1), m * k)));
}

// C[K x M] = A[N x K]^T * G[N x M]
template <class T>
void matmul_tn(const Tensor<T>& a, const Tensor<T>& g, Tensor<T>& out) {
  const int64_t n = a.rows(), k = a.cols(), m = g.cols();
  require(g.rows() == n, "matmul_tn", "inner dimensions differ");
  out = Tensor<T>::zeros({k, m});
  parallel_for(
      k,
      [&](int64_t j) {
        T* cj = out.row_ptr(j);
        for (int64_t i = 0; i < n; ++i) {
          const T aij = a.at(i, j);
          const T* gi = g.row_ptr(i);
          for (int64_t p = 0; p < m; ++p) cj[p] += aij * gi[p];
        }
      },
      std::max<int64_t>(int64_t(1), 16384 / std::max<int64_t>(int64_t(1), n * m)));
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> out({a.cols(), a.rows()});
  parallel_for(a.rows(), [&](int64_t i) {
    for (int64_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  });
  return out;
}

// out[i, :] = x[i, :] + bias
template <class T>
void add_bias(Tensor<T>& x, const Tensor<T>& bias) {
  const int64_t d = x.cols();
  require(bias.numel() == d, "add_bias", "bias width mismatch");
  parallel_for(x.rows(), [&](int64_t i) {
    T* xi = x.row_ptr(i);
    for (int64_t j = 0; j < d; ++j) xi[j] += bias[j];
  });
}

template <class T, class F>
void pointwise(const Tensor<T>& x, Tensor<T>& out, F f) {
  out.shape = x.shape;
  out.data.resize(x.data.size());
  parallel_for(x.numel(), [&](int64_t i) { out[i] = f(x[i]); }, 1 << 15);
}

template <class T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

template <class T>
T gelu_grad_scalar(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
  const T pdf = T(0.3989422804014326779) * std::exp(T(-0.5) * x * x);
  return cdf + x * pdf;
}

// Numerically-stable row softmax.
template <class T>
void softmax_rows(const Tensor<T>& x, Tensor<T>& out) {
  const int64_t d = x.cols();
  out.shape = x.shape;
  out.data.resize(x.data.size());
  parallel_for(
      x.rows(),
      [&](int64_t i) {
        const T* xi = x.row_ptr(i);
        T* yi = out.row_ptr(i);
        T mx = xi[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xi[j]);
        T sum = 0;
        for (int64_t j = 0; j < d; ++j) {
          yi[j] = std::exp(xi[j] - mx);
          sum += yi[j];
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < d; ++j) yi[j] *= inv;
      },
      std::max<int64_t>(int64_t(1), 4096 / std::max<int64_t>(int64_t(1), d)));
}

// y = (x - mean) * rstd * gamma + beta, per row; eps matches the contract.
template <class T>
void layernorm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& out, Tensor<T>* mean = nullptr, Tensor<T>* rstd = nullptr,
                    T eps = T(1e-5)) {
  const int64_t n = x.rows(), d = x.cols();
  require(d > 0, "layer_norm", "zero feature width");
  require(gamma.numel() == d && beta.numel() == d, "layer_norm", "affine width mismatch");
  out.shape = x.shape;
  out.data.resize(x.data.size());
  if (mean) *mean = Tensor<T>::zeros({n});
  if (rstd) *rstd = Tensor<T>::zeros({n});
  parallel_for(
      n,
      [&](int64_t i) {
        const T* xi = x.row_ptr(i);
        T* yi = out.row_ptr(i);
        T mu = 0;
        for (int64_t j = 0; j < d; ++j) mu += xi[j];
        mu /= T(d);
        T var = 0;
        for (int64_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= T(d);
        const T r = T(1) / std::sqrt(var + eps);
        for (int64_t j = 0; j < d; ++j) yi[j] = (xi[j] - mu) * r * gamma[j] + beta[j];
        if (mean) (*mean)[i] = mu;
        if (rstd) (*rstd)[i] = r;
      },
      std::max<int64_t>(int64_t(1), 4096 / d));
}

// out[i, :] = x[idx[i], :]; idx[i] == -1 produces a zero row.
template <class T>
void gather_rows(const Tensor<T>& x, const std::vector<int32_t>& idx, Tensor<T>& out) {
  const int64_t d = x.cols();
  out = Tensor<T>::zeros({static_cast<int64_t>(idx.size()), d});
  parallel_for(
      static_cast<int64_t>(idx.size()),
      [&](int64_t i) {
        const int32_t s = idx[static_cast<size_t>(i)];
        if (s < 0) return;
        const T* xs = x.row_ptr(s);
        T* oi = out.row_ptr(i);
        for (int64_t j = 0; j < d; ++j) oi[j] = xs[j];
      },
      std::max<int64_t>(int64_t(1), 4096 / std::max<int64_t>(int64_t(1), d)));
}

// out[k, :] = sum of x rows in segment k (fixed order within the segment).
template <class T>
void segment_sum(const Tensor<T>& x, const Csr& csr, Tensor<T>& out, bool mean = false) {
  const int64_t d = x.cols();
  out = Tensor<T>::zeros({csr.segments(), d});
  parallel_for(
      csr.segments(),
      [&](int64_t k) {
        T* ok = out.row_ptr(k);
        const int64_t lo = csr.offsets[k], hi = csr.offsets[k + 1];
        for (int64_t e = lo; e < hi; ++e) {
          const T* xe = x.row_ptr(csr.perm[e]);
          for (int64_t j = 0; j < d; ++j) ok[j] += xe[j];
        }
        if (mean && hi > lo) {
          const T inv = T(1) / T(hi - lo);
          for (int64_t j = 0; j < d; ++j) ok[j] *= inv;
        }
      },
      std::max<int64_t>(int64_t(1), 4096 / std::max<int64_t>(int64_t(1), d)));
}

// Backward of gather_rows: accumulate row grads onto their source rows.
// src_csr groups gather positions by source row.
template <class T>
void scatter_rows_add(const Tensor<T>& g, const Csr& src_csr, Tensor<T>& out_accum) {
  const int64_t d = g.cols();
  parallel_for(
      src_csr.segments(),
      [&](int64_t s) {
        T* os = out_accum.row_ptr(s);
        for (int64_t e = src_csr.offsets[s]; e < src_csr.offsets[s + 1]; ++e) {
          const T* ge = g.row_ptr(src_csr.perm[e]);
          for (int64_t j = 0; j < d; ++j) os[j] += ge[j];
        }
      },
      std::max<int64_t>(int64_t(1), 4096 / std::max<int64_t>(int64_t(1), d)));
}

}  // namespace kern

// Serial reference kernels. These are the independent implementations that
// unit tests and the kernel benchmark compare against; keep them boring.
namespace ref {

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor<T> out({n, m});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  return out;
}

template <class T>
Tensor<T> segment_sum(const Tensor<T>& x, const Csr& csr, bool mean = false) {
  Tensor<T> out({csr.segments(), x.cols()});
  for (int64_t k = 0; k < csr.segments(); ++k) {
    for (int64_t e = csr.offsets[k]; e < csr.offsets[k + 1]; ++e)
      for (int64_t j = 0; j < x.cols(); ++j) out.at(k, j) += x.at(csr.perm[e], j);
    const int64_t cnt = csr.offsets[k + 1] - csr.offsets[k];
    if (mean && cnt > 0) {
      const T inv = T(1) / T(cnt);
      for (int64_t j = 0; j < x.cols(); ++j) out.at(k, j) *= inv;
    }
  }
  return out;
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int32_t>& idx) {
  Tensor<T> out({static_cast<int64_t>(idx.size()), x.cols()});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    for (int64_t j = 0; j < x.cols(); ++j) out.at(static_cast<int64_t>(i), j) = x.at(idx[i], j);
  }
  return out;
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Tensor<T> out({x.rows(), x.cols()});
  for (int64_t i = 0; i < x.rows(); ++i) {
    T mx = x.at(i, 0);
    for (int64_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
    T sum = 0;
    for (int64_t j = 0; j < x.cols(); ++j) {
      out.at(i, j) = std::exp(x.at(i, j) - mx);
      sum += out.at(i, j);
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < x.cols(); ++j) out.at(i, j) *= inv;
  }
  return out;
}

template <class T>
Tensor<T> layernorm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps = T(1e-5)) {
  Tensor<T> out({x.rows(), x.cols()});
  const int64_t d = x.cols();
  for (int64_t i = 0; i < x.rows(); ++i) {
    T mu = 0, var = 0;
    for (int64_t j = 0; j < d; ++j) mu += x.at(i, j);
    mu /= T(d);
    for (int64_t j = 0; j < d; ++j) var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
    var /= T(d);
    const T r = T(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j) out.at(i, j) = (x.at(i, j) - mu) * r * gamma[j] + beta[j];
  }
  return out;
}

}  // namespace ref
}  // namespace ast
