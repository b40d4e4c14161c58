#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "wfen/gradcheck.hpp"
#include "wfen/nn.hpp"
#include "wfen/rng.hpp"

using wfen::Conv2d;
using wfen::FeedForward;
using wfen::Graph;
using wfen::ParameterStore;
using wfen::ResidualBlock;
using wfen::Shape;
using wfen::Tensor;

namespace {

using TD = Tensor<double>;

TD random_tensor(Shape shape, wfen::Rng& rng, double lo = -1.0, double hi = 1.0) {
  TD t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

void zero_fill(TD& t) {
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, 0.0);
}

bool same_bits(const TD& a, const TD& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.cdata(), b.cdata(), sizeof(double) * static_cast<size_t>(a.numel())) == 0;
}

std::vector<std::pair<std::string, TD>> as_params(ParameterStore<double>& store) {
  std::vector<std::pair<std::string, TD>> out;
  for (auto& e : store.entries()) out.emplace_back(e.name, e.tensor);
  return out;
}

}  // namespace

TEST_CASE("parameter store names are unique and ordered") {
  ParameterStore<double> store(7);
  store.add("a.weight", TD({2, 2}));
  store.add("a.bias", TD({2}));
  CHECK_THROWS(store.add("a.weight", TD({1})));
  CHECK_THROWS(store.add("", TD({1})));
  CHECK(store.has("a.bias"));
  CHECK_FALSE(store.has("b"));
  CHECK_THROWS(store.at("missing"));
  CHECK(store.entries()[0].name == "a.weight");
  CHECK(store.entries()[1].name == "a.bias");
  CHECK(store.param_count() == 6);
  CHECK(ParameterStore<double>().param_count() == 0);
}

TEST_CASE("conv module parameter count for 3 to 40 channels") {
  ParameterStore<double> store(1);
  wfen::Rng rng(1);
  Conv2d<double> conv(store, "c", 3, 40, 3, 1, 1, 1, rng);
  CHECK(store.param_count() == 3 * 40 * 9 + 40);
}

TEST_CASE("initialization is deterministic and respects the fan-in bound") {
  auto build = [](uint64_t seed) {
    ParameterStore<double> store(seed);
    wfen::Rng rng(seed);
    Conv2d<double> conv(store, "c", 8, 16, 3, 1, 1, 1, rng);
    FeedForward<double> ffn(store, "f", 8, rng);
    return store;
  };
  ParameterStore<double> s1 = build(42);
  ParameterStore<double> s2 = build(42);
  ParameterStore<double> s3 = build(43);
  REQUIRE(s1.entries().size() == s2.entries().size());
  bool all_same = true;
  bool any_diff_seed = false;
  for (size_t i = 0; i < s1.entries().size(); ++i) {
    if (!same_bits(s1.entries()[i].tensor, s2.entries()[i].tensor)) all_same = false;
    if (!same_bits(s1.entries()[i].tensor, s3.entries()[i].tensor)) any_diff_seed = true;
  }
  CHECK(all_same);
  CHECK(any_diff_seed);

  const double bound = std::sqrt(6.0 / (8.0 * 9.0));
  const TD& w = s1.at("c.weight");
  for (int64_t i = 0; i < w.numel(); ++i) {
    CHECK(std::fabs(w.at(i)) < bound);
  }
  const TD& b = s1.at("c.bias");
  for (int64_t i = 0; i < b.numel(); ++i) CHECK(b.at(i) == 0.0);
  const TD& gamma = s1.at("f.norm.gamma");
  for (int64_t i = 0; i < gamma.numel(); ++i) CHECK(gamma.at(i) == 1.0);
}

TEST_CASE("residual block zero branch is the identity") {
  ParameterStore<double> store(5);
  wfen::Rng rng(5);
  ResidualBlock<double> block(store, "rb", 4, 4, rng);
  for (auto& e : store.entries()) zero_fill(e.tensor);
  wfen::Rng drng(6);
  TD x = random_tensor({2, 4, 5, 5}, drng, 0.1, 1.0);
  TD y = block.forward(x);
  CHECK(same_bits(x, y));
}

TEST_CASE("residual block with centered unit kernels doubles nonnegative input") {
  ParameterStore<double> store(5);
  wfen::Rng rng(5);
  ResidualBlock<double> block(store, "rb", 1, 1, rng);
  for (auto& e : store.entries()) zero_fill(e.tensor);
  store.at("rb.conv1.weight").set(4, 1.0);  // center of the 3x3 kernel
  store.at("rb.conv2.weight").set(4, 1.0);
  TD x({1, 1, 2, 2}, {0.5, 1.0, 0.0, 2.0});
  TD y = block.forward(x);
  for (int64_t i = 0; i < 4; ++i) CHECK(y.at(i) == doctest::Approx(2.0 * x.at(i)));
}

TEST_CASE("residual block projects channels") {
  ParameterStore<double> store(9);
  wfen::Rng rng(9);
  ResidualBlock<double> block(store, "rb", 12, 4, rng);
  CHECK(store.has("rb.skip.weight"));
  TD x({1, 12, 8, 8});
  TD y = block.forward(x);
  CHECK(y.shape() == Shape{1, 4, 8, 8});
}

TEST_CASE("residual block gradients") {
  ParameterStore<double> store(13);
  wfen::Rng rng(13);
  ResidualBlock<double> block(store, "rb", 3, 5, rng);
  wfen::Rng drng(14);
  TD x = random_tensor({1, 3, 4, 4}, drng);
  auto params = as_params(store);
  params.emplace_back("x", x);
  auto f = [&](Graph<double>&) {
    TD y = block.forward(x);
    return wfen::sum_all(wfen::mul(y, y));
  };
  wfen::GradCheckOptions opt;
  opt.rtol = 1e-5;
  opt.atol = 1e-8;
  auto res = wfen::grad_check<double>(f, params, opt);
  INFO(res.worst_param, " idx ", res.worst_index, " analytic ", res.worst_analytic, " numeric ",
       res.worst_numeric);
  CHECK(res.passed);
}

TEST_CASE("feed forward zero projection is the identity") {
  ParameterStore<double> store(17);
  wfen::Rng rng(17);
  FeedForward<double> ffn(store, "f", 6, rng);
  zero_fill(store.at("f.project.weight"));
  zero_fill(store.at("f.project.bias"));
  wfen::Rng drng(18);
  TD x = random_tensor({1, 6, 4, 4}, drng, 0.1, 1.0);
  TD y = ffn.forward(x);
  CHECK(same_bits(x, y));
}

TEST_CASE("feed forward preserves shape") {
  ParameterStore<double> store(19);
  wfen::Rng rng(19);
  FeedForward<double> ffn(store, "f", 40, rng);
  TD x({1, 40, 16, 16});
  CHECK(ffn.forward(x).shape() == Shape{1, 40, 16, 16});
}

TEST_CASE("feed forward gradients") {
  ParameterStore<double> store(23);
  wfen::Rng rng(23);
  FeedForward<double> ffn(store, "f", 4, rng);
  wfen::Rng drng(24);
  TD x = random_tensor({1, 4, 4, 4}, drng);
  auto params = as_params(store);
  params.emplace_back("x", x);
  auto f = [&](Graph<double>&) {
    TD y = ffn.forward(x);
    return wfen::sum_all(wfen::mul(y, y));
  };
  wfen::GradCheckOptions opt;
  opt.rtol = 1e-5;
  opt.atol = 1e-8;
  auto res = wfen::grad_check<double>(f, params, opt);
  INFO(res.worst_param, " idx ", res.worst_index, " analytic ", res.worst_analytic, " numeric ",
       res.worst_numeric);
  CHECK(res.passed);
}
