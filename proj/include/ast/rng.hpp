#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "ast/tensor.hpp"

namespace ast {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for a (master seed, purpose) pair.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed2701ULL));
}

// mt19937_64 with explicit uniform/normal transforms so draws are
// platform-stable and the full state (engine + Box-Muller cache) can be
// checkpointed.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // 53-bit uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  int64_t uniform_index(int64_t n) {  // [0, n)
    return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::string serialize() const {
    std::ostringstream ss;
    ss << eng_ << " " << (has_spare_ ? 1 : 0) << " ";
    ss.precision(17);
    ss << std::scientific << spare_;
    return ss.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream ss(s);
    int spare_flag = 0;
    ss >> eng_ >> spare_flag >> spare_;
    has_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0;
};

template <class T>
Tensor<T> glorot_uniform(Rng& rng, int64_t fan_in, int64_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> w({fan_in, fan_out});
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

template <class T>
Tensor<T> normal_tensor(Rng& rng, std::vector<int64_t> shape, double std_dev) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * std_dev);
  return t;
}

}  // namespace ast
