#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wfen/rng.hpp"
#include "wfen/tensor.hpp"

namespace wfen {

struct GradCheckOptions {
  double eps = 1e-5;
  double atol = 1e-7;
  double rtol = 1e-4;
  // 0 checks every coordinate; otherwise a deterministic subsample per tensor.
  int64_t max_probes_per_param = 0;
  uint64_t probe_seed = 0x5eedf00dcafe1234ull;
};

struct GradCheckResult {
  bool passed = true;
  int64_t probes = 0;
  // worst ratio |analytic - numeric| / (atol + rtol * max(|analytic|, |numeric|));
  // passing means every ratio is at most 1.
  double max_err_ratio = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Accumulated over all probed coordinates, for a whole-gradient error view
  // that is robust to individually tiny coordinates.
  double sum_sq_analytic = 0.0;
  double sum_sq_diff = 0.0;

  double vector_rel_err() const {
    if (sum_sq_analytic <= 0.0) return sum_sq_diff > 0.0 ? 1.0 : 0.0;
    return std::sqrt(sum_sq_diff / sum_sq_analytic);
  }
};

// Central-difference check of reverse-mode gradients. The callable must build
// the scalar loss from the given parameter tensors; it runs once under a
// recording graph and twice per probe for the finite differences.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(Graph<T>&)>& f,
                           const std::vector<std::pair<std::string, Tensor<T>>>& params,
                           const GradCheckOptions& opt = {}) {
  check(!params.empty(), "grad_check: no parameters");
  std::vector<std::vector<T>> analytic;
  {
    Graph<T> g;
    for (const auto& [name, t] : params) {
      Tensor<T> alias = t;
      g.watch(alias);
    }
    Tensor<T> loss = f(g);
    g.backward(loss);
    for (const auto& [name, t] : params) analytic.push_back(g.grad(t).vec());
  }
  auto eval = [&f]() -> double {
    Graph<T> g;
    Tensor<T> loss = f(g);
    check(loss.numel() == 1, "grad_check: loss must be a single element");
    return static_cast<double>(loss.at(0));
  };
  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T> t = params[pi].second;
    const int64_t n = t.numel();
    std::vector<int64_t> probes;
    if (opt.max_probes_per_param <= 0 || opt.max_probes_per_param >= n) {
      probes.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) probes[static_cast<size_t>(i)] = i;
    } else {
      SplitMix64 rng(opt.probe_seed, static_cast<uint64_t>(pi));
      std::vector<char> taken(static_cast<size_t>(n), 0);
      while (static_cast<int64_t>(probes.size()) < opt.max_probes_per_param) {
        const int64_t i = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n));
        if (!taken[static_cast<size_t>(i)]) {
          taken[static_cast<size_t>(i)] = 1;
          probes.push_back(i);
        }
      }
      std::sort(probes.begin(), probes.end());
    }
    T* vals = t.data();
    for (int64_t i : probes) {
      const T old = vals[i];
      vals[i] = old + static_cast<T>(opt.eps);
      const double up = eval();
      vals[i] = old - static_cast<T>(opt.eps);
      const double down = eval();
      vals[i] = old;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double a = static_cast<double>(analytic[pi][static_cast<size_t>(i)]);
      const double scale = opt.atol + opt.rtol * std::max(std::fabs(a), std::fabs(numeric));
      const double ratio = std::fabs(a - numeric) / scale;
      res.probes++;
      res.sum_sq_analytic += a * a;
      res.sum_sq_diff += (a - numeric) * (a - numeric);
      if (ratio > res.max_err_ratio) {
        res.max_err_ratio = ratio;
        res.worst_param = params[pi].first;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  res.passed = res.max_err_ratio <= 1.0;
  return res;
}

}  // namespace wfen
