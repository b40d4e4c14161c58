#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "wfen/synth.hpp"
#include "wfen/train.hpp"

using wfen::Graph;
using wfen::ImageBuffer;
using wfen::ParameterStore;
using wfen::Shape;
using wfen::Tensor;
using wfen::TrainConfig;
using wfen::WfenConfig;
using wfen::WfenModel;

namespace {

using TD = Tensor<double>;

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.cdata(), b.cdata(), sizeof(T) * static_cast<size_t>(a.numel())) == 0;
}

WfenConfig micro_config() {
  WfenConfig cfg;
  cfg.base_channels = 8;
  cfg.encoder_blocks = {1, 1, 1};
  cfg.bottleneck_blocks = 1;
  cfg.decoder_blocks = {1, 1, 1};
  cfg.input_size = 16;
  return cfg;
}

template <typename T>
std::function<Tensor<T>(int64_t)> synth_provider(uint64_t seed, int64_t size) {
  return [seed, size](int64_t index) {
    return wfen::image_to_tensor<T>(wfen::synth_sample(seed, static_cast<uint64_t>(index), size));
  };
}

}  // namespace

TEST_CASE("l1 loss oracles") {
  TD a({1, 1, 1, 2}, {0.0, 1.0});
  TD b({1, 1, 1, 2}, {1.0, 1.0});
  CHECK(wfen::l1_loss(a, b).at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(wfen::l1_loss(a, a).at(0) == 0.0);
  TD a3({1, 1, 1, 2}, {0.0, 3.0});
  TD b3({1, 1, 1, 2}, {3.0, 3.0});
  CHECK(wfen::l1_loss(a3, b3).at(0) == doctest::Approx(3.0 * 0.5).epsilon(1e-12));
  TD wrong({1, 1, 2, 1}, {0.0, 1.0});
  CHECK_THROWS_AS(wfen::l1_loss(a, wrong), std::invalid_argument);
}

TEST_CASE("l1 gradient signs, zero at ties") {
  TD pred({1, 1, 1, 3}, {2.0, -1.0, 5.0});
  TD target({1, 1, 1, 3}, {1.0, 0.0, 5.0});
  Graph<double> g;
  g.watch(pred);
  TD loss = wfen::l1_loss(pred, target);
  g.backward(loss);
  TD gr = g.grad(pred);
  CHECK(gr.at(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(gr.at(1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(gr.at(2) == 0.0);
}

TEST_CASE("adam first step magnitude is the learning rate") {
  ParameterStore<double> store(1);
  store.add("theta", TD({1}, {0.0}));
  wfen::AdamState<double> state;
  std::vector<TD> grads{TD({1}, {5.0})};
  wfen::adam_step(store, grads, state);
  CHECK(std::abs(store.at("theta").at(0) - (-2e-4)) < 1e-7);
  CHECK(state.t == 1);
}

TEST_CASE("adam two constant-gradient steps move about twice the rate") {
  ParameterStore<double> store(1);
  store.add("theta", TD({1}, {0.0}));
  wfen::AdamState<double> state;
  std::vector<TD> grads{TD({1}, {-3.0})};
  wfen::adam_step(store, grads, state);
  wfen::adam_step(store, grads, state);
  const double moved = store.at("theta").at(0);
  CHECK(moved > 0.0);
  CHECK(std::abs(moved - 4e-4) < 0.02 * 4e-4);
}

TEST_CASE("adam opposes the gradient sign per coordinate") {
  ParameterStore<double> store(1);
  store.add("theta", TD({4}, {1.0, 1.0, 1.0, 1.0}));
  wfen::AdamState<double> state;
  std::vector<TD> grads{TD({4}, {2.5, -0.3, 0.0, 7.0})};
  wfen::adam_step(store, grads, state);
  const TD& t = store.at("theta");
  CHECK(t.at(0) < 1.0);
  CHECK(t.at(1) > 1.0);
  CHECK(t.at(2) == 1.0);
  CHECK(t.at(3) < 1.0);
}

TEST_CASE("adam zero gradient with fresh state leaves parameters alone") {
  ParameterStore<double> store(1);
  store.add("theta", TD({3}, {0.25, -0.5, 4.0}));
  TD before = store.at("theta").clone();
  wfen::AdamState<double> state;
  std::vector<TD> grads{TD(Shape{3})};
  wfen::adam_step(store, grads, state);
  CHECK(same_bits(before, store.at("theta")));
}

TEST_CASE("adam rejects a missing gradient by name") {
  ParameterStore<double> store(1);
  store.add("theta", TD({2}, {0.0, 0.0}));
  wfen::AdamState<double> state;
  std::vector<TD> grads{TD()};
  std::string msg;
  try {
    wfen::adam_step(store, grads, state);
  } catch (const std::invalid_argument& e) {
    msg = e.what();
  }
  CHECK(msg.find("theta") != std::string::npos);
}

TEST_CASE("training pair keeps a constant image constant") {
  TD hr = TD::full({1, 3, 16, 16}, 0.37);
  auto pair = wfen::make_training_pair(hr, 8);
  CHECK(pair.first.shape() == hr.shape());
  for (int64_t i = 0; i < pair.first.numel(); ++i) {
    CHECK(std::abs(pair.first.at(i) - 0.37) < 1e-12);
  }
  CHECK(same_bits(pair.second, hr));
}

TEST_CASE("training pair rejects non-divisible extents") {
  TD hr = TD::full({1, 3, 30, 30}, 0.5);
  CHECK_THROWS_AS(wfen::make_training_pair(hr, 8), std::invalid_argument);
}

TEST_CASE("training pair washes out a period-2 checkerboard") {
  const int64_t s = 16;
  TD hr({1, 1, s, s});
  for (int64_t i = 0; i < s; ++i) {
    for (int64_t j = 0; j < s; ++j) hr.set(i * s + j, ((i + j) % 2 == 0) ? 1.0 : 0.0);
  }
  auto pair = wfen::make_training_pair(hr, 2);
  // Pixels at least 5 from the border only see taps whose source pixels are
  // themselves untouched by edge clamping, so the washout there is exact.
  double interior_dev = 0.0;
  double global_dev = 0.0;
  for (int64_t i = 0; i < s; ++i) {
    for (int64_t j = 0; j < s; ++j) {
      const double d = std::abs(pair.first.at(i * s + j) - 0.5);
      global_dev = std::max(global_dev, d);
      if (i >= 5 && i < s - 5 && j >= 5 && j < s - 5) interior_dev = std::max(interior_dev, d);
    }
  }
  CHECK(interior_dev < 1e-12);
  CHECK(global_dev < 0.2);
}

TEST_CASE("synthetic samples are deterministic and in range") {
  ImageBuffer a = wfen::synth_sample(5, 9, 32);
  ImageBuffer b = wfen::synth_sample(5, 9, 32);
  REQUIRE(a.values.size() == b.values.size());
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
  for (double v : a.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  ImageBuffer c = wfen::synth_sample(6, 9, 32);
  CHECK(std::memcmp(a.values.data(), c.values.data(), a.values.size() * sizeof(double)) != 0);
}

TEST_CASE("synthetic samples with distinct indices differ visibly") {
  const int64_t size = 32;
  for (uint64_t i = 0; i < 100; ++i) {
    ImageBuffer a = wfen::synth_sample(11, i, size);
    ImageBuffer b = wfen::synth_sample(11, i + 1, size);
    int64_t moved = 0;
    for (size_t k = 0; k < a.values.size(); ++k) {
      if (std::abs(a.values[k] - b.values[k]) > 0.05) ++moved;
    }
    CHECK(moved >= static_cast<int64_t>(a.values.size() / 100));
  }
}

TEST_CASE("synthetic sample rejects bad sizes") {
  CHECK_THROWS_AS(wfen::synth_sample(1, 0, 12), std::invalid_argument);
  CHECK_THROWS_AS(wfen::synth_sample(1, 0, 0), std::invalid_argument);
}

TEST_CASE("short training run is bit-reproducible") {
  TrainConfig tc;
  tc.steps = 6;
  tc.batch_size = 2;
  tc.seed = 13;
  tc.dataset_size = 3;
  tc.report_every = 2;

  WfenModel<float> m1(micro_config(), tc.seed);
  std::ostringstream log1;
  auto r1 = wfen::train_loop<float>(m1, tc, synth_provider<float>(tc.seed, 16), &log1);

  WfenModel<float> m2(micro_config(), tc.seed);
  std::ostringstream log2;
  auto r2 = wfen::train_loop<float>(m2, tc, synth_provider<float>(tc.seed, 16), &log2);

  CHECK(r1.losses == r2.losses);
  CHECK(r1.batch_hash == r2.batch_hash);
  CHECK(log1.str() == log2.str());
  CHECK(r1.param_count == m1.params.param_count());
  auto& e1 = m1.params.entries();
  auto& e2 = m2.params.entries();
  REQUIRE(e1.size() == e2.size());
  for (size_t i = 0; i < e1.size(); ++i) CHECK(same_bits(e1[i].tensor, e2[i].tensor));
  CHECK(log1.str().rfind("step 1 loss ", 0) == 0);
  CHECK(r1.losses.size() == 6);
}

TEST_CASE("zero learning rate leaves the model at its initialization") {
  TrainConfig tc;
  tc.steps = 3;
  tc.batch_size = 1;
  tc.seed = 17;
  tc.dataset_size = 2;
  tc.lr = 0.0;
  WfenModel<float> trained(micro_config(), tc.seed);
  WfenModel<float> reference(micro_config(), tc.seed);
  wfen::train_loop<float>(trained, tc, synth_provider<float>(tc.seed, 16), nullptr);
  auto& ta = trained.params.entries();
  auto& ra = reference.params.entries();
  REQUIRE(ta.size() == ra.size());
  for (size_t i = 0; i < ta.size(); ++i) CHECK(same_bits(ta[i].tensor, ra[i].tensor));
}

TEST_CASE("non-finite loss aborts with step and parameter statistics") {
  TrainConfig tc;
  tc.steps = 2;
  tc.batch_size = 1;
  tc.seed = 19;
  tc.dataset_size = 1;
  WfenModel<float> m(micro_config(), tc.seed);
  m.params.at("shallow.weight").set(0, std::numeric_limits<float>::quiet_NaN());
  std::string msg;
  try {
    wfen::train_loop<float>(m, tc, synth_provider<float>(tc.seed, 16), nullptr);
  } catch (const std::runtime_error& e) {
    msg = e.what();
  }
  CHECK(msg.find("step 1") != std::string::npos);
  CHECK(msg.find("max |value|") != std::string::npos);
}

TEST_CASE("training config violations are collected") {
  TrainConfig tc;
  tc.steps = 0;
  tc.batch_size = 0;
  tc.lr = -1.0;
  auto bad = tc.violations();
  CHECK(bad.size() == 3);
}
