#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "wfen/model.hpp"
#include "wfen/nn.hpp"
#include "wfen/ops.hpp"
#include "wfen/rng.hpp"

namespace wfen {

// Mean absolute difference over all elements. The gradient at exact ties is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  check(pred.shape() == target.shape(),
        "l1: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  return mean_all(abs(sub(pred, target)));
}

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig cfg;
  int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update. `grads` must align one-to-one with the
// store's entry order; moment accumulators are kept in double so f32 and f64
// models share the same update rule.
template <typename T>
void adam_step(ParameterStore<T>& store, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state) {
  auto& entries = store.entries();
  check(grads.size() == entries.size(),
        "adam: got " + std::to_string(grads.size()) + " gradients for " +
            std::to_string(entries.size()) + " parameters");
  if (state.t == 0) {
    state.m.resize(entries.size());
    state.v.resize(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
      state.m[i].assign(static_cast<size_t>(entries[i].tensor.numel()), 0.0);
      state.v[i].assign(static_cast<size_t>(entries[i].tensor.numel()), 0.0);
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < entries.size(); ++i) {
    auto& entry = entries[i];
    check(grads[i].defined(), "adam: missing gradient for parameter '" + entry.name + "'");
    check(grads[i].shape() == entry.tensor.shape(),
          "adam: gradient shape mismatch for parameter '" + entry.name + "'");
    T* theta = entry.tensor.data();
    const T* g = grads[i].cdata();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    const int64_t n = entry.tensor.numel();
    for (int64_t k = 0; k < n; ++k) {
      const double gk = static_cast<double>(g[k]);
      m[static_cast<size_t>(k)] = state.cfg.beta1 * m[static_cast<size_t>(k)] +
                                  (1.0 - state.cfg.beta1) * gk;
      v[static_cast<size_t>(k)] = state.cfg.beta2 * v[static_cast<size_t>(k)] +
                                  (1.0 - state.cfg.beta2) * gk * gk;
      const double mhat = m[static_cast<size_t>(k)] / c1;
      const double vhat = v[static_cast<size_t>(k)] / c2;
      theta[k] = static_cast<T>(static_cast<double>(theta[k]) -
                                state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
    }
  }
}

// Degrade-then-restore input pair: bicubic downscale by `factor`, bicubic
// upscale back to the original extents. Returns {degraded, original}.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_training_pair(const Tensor<T>& hr, int64_t factor = 8) {
  check(hr.rank() == 4, "pair: expected a rank-4 batch, got " + shape_str(hr.shape()));
  check(factor >= 2, "pair: factor must be at least 2");
  const int64_t h = hr.extent(2);
  const int64_t w = hr.extent(3);
  check(h % factor == 0 && w % factor == 0,
        "pair: extents " + std::to_string(h) + "x" + std::to_string(w) +
            " are not divisible by factor " + std::to_string(factor));
  Tensor<T> small = bicubic_resize(hr, h / factor, w / factor);
  Tensor<T> up = bicubic_resize(small, h, w);
  return {up, hr};
}

enum class DataSource { synthetic, directory };

inline const char* data_source_name(DataSource s) {
  return s == DataSource::synthetic ? "synthetic" : "directory";
}

inline DataSource parse_data_source(const std::string& s) {
  if (s == "synthetic") return DataSource::synthetic;
  if (s == "directory") return DataSource::directory;
  throw std::invalid_argument("unknown data source '" + s + "' (valid: synthetic, directory)");
}

struct TrainConfig {
  int64_t steps = 400;
  int64_t batch_size = 4;
  uint64_t seed = 7;
  double lr = 2e-4;
  DataSource source = DataSource::synthetic;
  int64_t dataset_size = 4;
  int64_t sr_factor = 8;
  int64_t report_every = 50;

  std::vector<std::string> violations() const {
    std::vector<std::string> bad;
    if (steps < 1) bad.push_back("train.steps must be positive");
    if (batch_size < 1) bad.push_back("train.batch_size must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) bad.push_back("train.lr must be finite and >= 0");
    if (dataset_size < 1) bad.push_back("train.dataset_size must be positive");
    if (sr_factor < 2) bad.push_back("train.sr_factor must be at least 2");
    if (report_every < 1) bad.push_back("train.report_every must be positive");
    return bad;
  }
};

struct TrainReport {
  std::vector<double> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  uint64_t batch_hash = fnv1a_init();
  double wall_seconds = 0.0;
  int64_t param_count = 0;
};

// Runs the optimization loop. `sample_hr` maps a dataset index to one 1x3xSxS
// ground-truth tensor; batches draw indices deterministically from the seed.
// Emits `step <n> loss <value>` lines every report_every steps when a log
// stream is given. A non-finite loss aborts with the step index and the
// statistics of the most extreme parameter.
template <typename T>
TrainReport train_loop(WfenModel<T>& model, const TrainConfig& tc,
                       const std::function<Tensor<T>(int64_t)>& sample_hr,
                       std::ostream* log = nullptr) {
  {
    const auto bad = tc.violations();
    if (!bad.empty()) {
      std::string msg = "train config:";
      for (const auto& b : bad) msg += " " + b + ";";
      throw std::invalid_argument(msg);
    }
  }
  TrainReport report;
  report.param_count = model.params.param_count();
  AdamState<T> state;
  state.cfg.lr = tc.lr;
  const auto t0 = std::chrono::steady_clock::now();
  uint64_t draw = 0;
  for (int64_t step = 0; step < tc.steps; ++step) {
    Tensor<T> hr_batch;
    for (int64_t s = 0; s < tc.batch_size; ++s) {
      const uint64_t idx =
          SplitMix64(tc.seed, draw++).next_u64() % static_cast<uint64_t>(tc.dataset_size);
      report.batch_hash = fnv1a_add(report.batch_hash, idx);
      Tensor<T> one = sample_hr(static_cast<int64_t>(idx));
      check(one.rank() == 4 && one.extent(0) == 1 && one.extent(1) == 3,
            "train: sample must be a 1x3xSxS tensor, got " + shape_str(one.shape()));
      hr_batch = hr_batch.defined() ? concat<T>({hr_batch, one}, 0) : one;
    }
    auto pair = make_training_pair(hr_batch, tc.sr_factor);
    Graph<T> g;
    model.params.watch_all(g);
    Tensor<T> restored = model.forward(pair.first);
    Tensor<T> loss = l1_loss(restored, pair.second);
    const double lv = static_cast<double>(loss.at(0));
    if (!std::isfinite(lv)) {
      std::string worst_name = "?";
      double worst_mag = -1.0;
      for (const auto& e : model.params.entries()) {
        double mx = 0.0;
        for (int64_t i = 0; i < e.tensor.numel(); ++i) {
          mx = std::max(mx, std::abs(static_cast<double>(e.tensor.at(i))));
        }
        if (mx > worst_mag) {
          worst_mag = mx;
          worst_name = e.name;
        }
      }
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step + 1) +
                               "; largest parameter '" + worst_name + "' has max |value| " +
                               std::to_string(worst_mag));
    }
    report.losses.push_back(lv);
    g.backward(loss);
    std::vector<Tensor<T>> grads;
    grads.reserve(model.params.entries().size());
    for (const auto& e : model.params.entries()) grads.push_back(g.grad(e.tensor));
    adam_step(model.params, grads, state);
    if (log && (step % tc.report_every == 0 || step == tc.steps - 1)) {
      (*log) << "step " << (step + 1) << " loss " << lv << "\n";
    }
  }
  report.initial_loss = report.losses.front();
  report.final_loss = report.losses.back();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace wfen
