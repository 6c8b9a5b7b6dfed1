#pragma once

#include <cmath>
#include <vector>

#include "ast/nn.hpp"
#include "ast/tensor.hpp"

namespace ast {

template <class T>
struct Adam {
  T beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);
  int64_t t = 0;
  std::vector<Tensor<T>> m, v;

  void init(const ParamStore<T>& ps) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto& p : ps.values) {
      m.push_back(Tensor<T>::zeros(p.shape));
      v.push_back(Tensor<T>::zeros(p.shape));
    }
  }

  void step(ParamStore<T>& ps, const std::vector<Tensor<T>>& grads, T lr) {
    require(grads.size() == ps.count(), "adam", "gradient count mismatch");
    for (const auto& g : grads)
      require(g.all_finite(), "adam", "diverged");
    ++t;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), double(t)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), double(t)));
    for (size_t k = 0; k < grads.size(); ++k) {
      Tensor<T>& p = ps.values[k];
      Tensor<T>& mk = m[k];
      Tensor<T>& vk = v[k];
      require(grads[k].same_shape(p), "adam", "gradient shape mismatch");
      for (int64_t i = 0; i < p.numel(); ++i) {
        const T g = grads[k][i];
        mk[i] = beta1 * mk[i] + (T(1) - beta1) * g;
        vk[i] = beta2 * vk[i] + (T(1) - beta2) * g * g;
        const T mhat = mk[i] / bc1;
        const T vhat = vk[i] / bc2;
        p[i] -= lr * mhat / (static_cast<T>(std::sqrt(static_cast<double>(vhat))) + eps);
      }
    }
  }
};

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (T v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (T& v : g.data) v *= s;
  }
  return norm;
}

}  // namespace ast
