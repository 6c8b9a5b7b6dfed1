#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ast/autodiff.hpp"
#include "ast/rng.hpp"

namespace ast {

struct GradCheckReport {
  double max_rel_err = 0;
  int64_t probes = 0;
};

// Central-difference verification of reverse-mode gradients at 64-bit.
// `make_loss` builds the computation on a fresh tape from leafed inputs and
// returns a scalar Var; it must be pure. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8). When max_probes_per_tensor > 0 only a
// deterministic random subset of each tensor's elements is probed (needed for
// whole-model checks, where every element would mean millions of forwards).
template <class MakeLoss>
GradCheckReport grad_check(MakeLoss make_loss, std::vector<Tensor<double>> inputs,
                           double delta = 1e-5, int64_t max_probes_per_tensor = 0,
                           uint64_t probe_seed = 1234) {
  auto eval = [&](const std::vector<Tensor<double>>& xs, bool needs_grad, Tape<double>** tape_out,
                  std::vector<Tape<double>::Var>* var_out) -> double {
    auto* tp = new Tape<double>();
    std::vector<Tape<double>::Var> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tp->leaf(x, needs_grad));
    auto loss = make_loss(*tp, vars);
    require(tp->val(loss).numel() == 1, "grad_check", "loss must be scalar");
    const double value = tp->val(loss).data[0];
    require(std::isfinite(value), "grad_check", "non-finite output");
    if (needs_grad) {
      tp->backward(loss);
      *tape_out = tp;
      *var_out = vars;
    } else {
      delete tp;
    }
    return value;
  };

  Tape<double>* tape = nullptr;
  std::vector<Tape<double>::Var> vars;
  eval(inputs, true, &tape, &vars);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto v : vars) analytic.push_back(tape->grad_of(v));
  delete tape;

  Rng rng(probe_seed);
  GradCheckReport report;
  for (size_t t = 0; t < inputs.size(); ++t) {
    const int64_t n = inputs[t].numel();
    std::vector<int64_t> probe_idx;
    if (max_probes_per_tensor > 0 && n > max_probes_per_tensor) {
      for (int64_t k = 0; k < max_probes_per_tensor; ++k) probe_idx.push_back(rng.uniform_index(n));
      std::sort(probe_idx.begin(), probe_idx.end());
      probe_idx.erase(std::unique(probe_idx.begin(), probe_idx.end()), probe_idx.end());
    } else {
      probe_idx.resize(static_cast<size_t>(n));
      for (int64_t k = 0; k < n; ++k) probe_idx[static_cast<size_t>(k)] = k;
    }
    for (int64_t i : probe_idx) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + delta;
      const double fp = eval(inputs, false, nullptr, nullptr);
      inputs[t][i] = saved - delta;
      const double fm = eval(inputs, false, nullptr, nullptr);
      inputs[t][i] = saved;
      const double numeric = (fp - fm) / (2 * delta);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.probes;
    }
  }
  return report;
}

}  // namespace ast
