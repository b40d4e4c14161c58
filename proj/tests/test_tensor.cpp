#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "wfen/gradcheck.hpp"
#include "wfen/ops.hpp"
#include "wfen/parallel.hpp"
#include "wfen/rng.hpp"
#include "wfen/tensor.hpp"

using wfen::Graph;
using wfen::GradCheckOptions;
using wfen::Shape;
using wfen::Tensor;

namespace {

using TD = Tensor<double>;

TD random_tensor(Shape shape, wfen::Rng& rng, double lo = -1.0, double hi = 1.0) {
  TD t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

bool same_bits(const TD& a, const TD& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.cdata(), b.cdata(), sizeof(double) * static_cast<size_t>(a.numel())) == 0;
}

}  // namespace

TEST_CASE("tensor shape validation") {
  CHECK_NOTHROW(TD({2, 3}));
  CHECK_THROWS(TD(Shape{}));
  CHECK_THROWS(TD({2, 0, 3}));
  CHECK_THROWS(TD({1, 1, 1, 1, 1}));
  CHECK_THROWS(TD({2, 2}, std::vector<double>{1.0, 2.0, 3.0}));
}

TEST_CASE("tensor copies share the buffer, detach and clone behave") {
  TD a({2, 2}, {1, 2, 3, 4});
  TD b = a;
  b.set(0, 7.0);
  CHECK(a.at(0) == 7.0);
  TD d = a.detach();
  d.set(1, 9.0);
  CHECK(a.at(1) == 9.0);  // detach shares values, drops graph linkage
  TD c = a.clone();
  c.set(2, 5.0);
  CHECK(a.at(2) == 3.0);
}

TEST_CASE("graph watch, backward, grad basics") {
  TD x({3}, {-1.0, 0.0, 2.0});
  Graph<double> g;
  g.watch(x);
  TD y = wfen::relu(x);
  TD loss = wfen::sum_all(y);
  g.backward(loss);
  TD gx = g.grad(x);
  CHECK(gx.at(0) == 0.0);
  CHECK(gx.at(1) == 0.0);  // relu slope at zero defined as zero
  CHECK(gx.at(2) == 1.0);
  CHECK_THROWS_AS(g.backward(loss), std::runtime_error);
}

TEST_CASE("grad accumulates across multiple uses") {
  TD x({2}, {3.0, -4.0});
  Graph<double> g;
  g.watch(x);
  TD loss = wfen::sum_all(wfen::add(x, x));
  g.backward(loss);
  TD gx = g.grad(x);
  CHECK(gx.at(0) == 2.0);
  CHECK(gx.at(1) == 2.0);
}

TEST_CASE("grad of square via mul") {
  TD x({1}, {3.0});
  Graph<double> g;
  g.watch(x);
  TD loss = wfen::sum_all(wfen::mul(x, x));
  g.backward(loss);
  CHECK(g.grad(x).at(0) == doctest::Approx(6.0));
}

TEST_CASE("unreached watched tensor yields zero grad") {
  TD x({2}, {1.0, 2.0});
  TD z({2}, {5.0, 5.0});
  Graph<double> g;
  g.watch(x);
  g.watch(z);
  TD loss = wfen::sum_all(x);
  g.backward(loss);
  TD gz = g.grad(z);
  CHECK(gz.at(0) == 0.0);
  CHECK(gz.at(1) == 0.0);
}

TEST_CASE("loss must be scalar and attached") {
  TD x({2}, {1.0, 2.0});
  Graph<double> g;
  g.watch(x);
  TD y = wfen::relu(x);
  CHECK_THROWS(g.backward(y));
  TD other({1}, {1.0});
  CHECK_THROWS(g.backward(other));
}

TEST_CASE("operands from different graphs are rejected") {
  TD x({2}, {1.0, 2.0});
  TD y({2}, {3.0, 4.0});
  Graph<double> g1;
  Graph<double> g2;
  g1.watch(x);
  g2.watch(y);
  CHECK_THROWS(wfen::add(x, y));
}

TEST_CASE("watching the same tensor on a second live graph is rejected") {
  TD x({2}, {1.0, 2.0});
  Graph<double> g1;
  g1.watch(x);
  Graph<double> g2;
  CHECK_THROWS(g2.watch(x));
}

TEST_CASE("abs forward and backward") {
  TD x({3}, {-2.0, 0.0, 1.5});
  Graph<double> g;
  g.watch(x);
  TD y = wfen::abs(x);
  CHECK(y.at(0) == 2.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == 1.5);
  g.backward(wfen::sum_all(y));
  TD gx = g.grad(x);
  CHECK(gx.at(0) == -1.0);
  CHECK(gx.at(1) == 0.0);
  CHECK(gx.at(2) == 1.0);
}

TEST_CASE("mean_all and scalar ops") {
  TD x({4}, {1.0, 2.0, 3.0, 4.0});
  Graph<double> g;
  g.watch(x);
  TD m = wfen::mean_all(wfen::add_scalar(wfen::scalar_mul(x, 2.0), 1.0));
  CHECK(m.at(0) == doctest::Approx(6.0));
  g.backward(m);
  TD gx = g.grad(x);
  for (int64_t i = 0; i < 4; ++i) CHECK(gx.at(i) == doctest::Approx(0.5));
}

TEST_CASE("mul_scalar_tensor routes gradient to both operands") {
  TD x({3}, {1.0, -2.0, 3.0});
  TD s({1}, {0.5});
  Graph<double> g;
  g.watch(x);
  g.watch(s);
  TD loss = wfen::sum_all(wfen::mul_scalar_tensor(x, s));
  g.backward(loss);
  CHECK(g.grad(s).at(0) == doctest::Approx(2.0));  // sum of x
  CHECK(g.grad(x).at(1) == doctest::Approx(0.5));
}

TEST_CASE("reciprocal matches finite differences") {
  wfen::Rng rng(11);
  TD x = random_tensor({5}, rng, 0.5, 2.0);
  auto f = [&](Graph<double>&) {
    return wfen::sum_all(wfen::mul(wfen::reciprocal(x), wfen::reciprocal(x)));
  };
  auto res = wfen::grad_check<double>(f, {{"x", x}});
  CHECK(res.passed);
}

TEST_CASE("conv2d all-ones 3x3 kernel with padding sums the neighborhood") {
  TD x({1, 1, 2, 2}, {1, 2, 3, 4});
  TD w({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  TD y = wfen::conv2d(x, w, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  // every output sees the full 2x2 input through zero padding
  for (int64_t i = 0; i < 4; ++i) CHECK(y.at(i) == 10.0);
}

TEST_CASE("conv2d identity kernel reproduces the input") {
  wfen::Rng rng(3);
  TD x = random_tensor({2, 3, 4, 5}, rng);
  TD w({3, 3, 1, 1});
  for (int64_t o = 0; o < 3; ++o) w.set(o * 3 + o, 1.0);
  TD y = wfen::conv2d(x, w);
  CHECK(same_bits(x, y));
}

TEST_CASE("conv2d stride and shape arithmetic") {
  TD x({1, 1, 5, 7});
  TD w({2, 1, 3, 3});
  TD y = wfen::conv2d(x, w, 2, 1);
  CHECK(y.shape() == Shape{1, 2, 3, 4});
}

TEST_CASE("conv2d rejects malformed geometry") {
  TD x({1, 4, 4, 4});
  TD w({4, 2, 3, 3});
  CHECK_THROWS(wfen::conv2d(x, w, 1, 1, 1));   // weight expects cin 2
  CHECK_NOTHROW(wfen::conv2d(x, w, 1, 1, 2));  // grouped it matches
  CHECK_THROWS(wfen::conv2d(x, w, 1, 1, 3));   // groups must divide channels
  TD wb({3, 4, 3, 3});
  CHECK_THROWS(wfen::conv2d(x, wb, 1, 1, 2));  // cout not divisible by groups
  TD bias({3});
  CHECK_THROWS(wfen::conv2d(x, w, bias, 1, 1, 2));  // bias length mismatch
}

TEST_CASE("conv2d gradients: grouped strided biased") {
  wfen::Rng rng(17);
  TD x = random_tensor({2, 4, 5, 6}, rng);
  TD w = random_tensor({6, 2, 3, 3}, rng, -0.5, 0.5);
  TD b = random_tensor({6}, rng, -0.2, 0.2);
  auto f = [&](Graph<double>&) {
    TD y = wfen::conv2d(x, w, b, 2, 1, 2);
    return wfen::sum_all(wfen::mul(y, y));
  };
  auto res = wfen::grad_check<double>(f, {{"x", x}, {"w", w}, {"b", b}});
  INFO(res.worst_param, " idx ", res.worst_index, " analytic ", res.worst_analytic, " numeric ",
       res.worst_numeric);
  CHECK(res.passed);
}

TEST_CASE("conv2d gradients: depthwise") {
  wfen::Rng rng(23);
  TD x = random_tensor({1, 3, 4, 4}, rng);
  TD w = random_tensor({3, 1, 3, 3}, rng, -0.5, 0.5);
  auto f = [&](Graph<double>&) {
    TD y = wfen::conv2d(x, w, 1, 1, 3);
    return wfen::sum_all(wfen::mul(y, y));
  };
  auto res = wfen::grad_check<double>(f, {{"x", x}, {"w", w}});
  CHECK(res.passed);
}

TEST_CASE("conv2d forward is identical under any thread cap") {
  wfen::Rng rng(29);
  TD x = random_tensor({2, 8, 9, 11}, rng);
  TD w = random_tensor({12, 8, 3, 3}, rng, -0.3, 0.3);
  wfen::set_thread_cap(1);
  TD y1 = wfen::conv2d(x, w, 1, 1);
  wfen::set_thread_cap(5);
  TD y5 = wfen::conv2d(x, w, 1, 1);
  wfen::set_thread_cap(1);
  CHECK(same_bits(y1, y5));
}

TEST_CASE("matmul oracle and gradients") {
  TD a({2, 2}, {1, 2, 3, 4});
  TD b({2, 1}, {1, 1});
  TD y = wfen::matmul(a, b);
  CHECK(y.shape() == Shape{2, 1});
  CHECK(y.at(0) == 3.0);
  CHECK(y.at(1) == 7.0);

  wfen::Rng rng(31);
  TD p = random_tensor({3, 2, 4}, rng);
  TD q = random_tensor({3, 4, 5}, rng);
  auto f = [&](Graph<double>&) {
    TD z = wfen::matmul(p, q);
    return wfen::sum_all(wfen::mul(z, z));
  };
  auto res = wfen::grad_check<double>(f, {{"p", p}, {"q", q}});
  CHECK(res.passed);
}

TEST_CASE("matmul rejects mismatched operands") {
  CHECK_THROWS(wfen::matmul(TD({2, 3}), TD({4, 2})));
  CHECK_THROWS(wfen::matmul(TD({2, 2, 3}), TD({3, 3, 4})));
  CHECK_THROWS(wfen::matmul(TD({6}), TD({6})));
}

TEST_CASE("layer_norm_channel normalizes each pixel across channels") {
  TD x({1, 2, 1, 1}, {1.0, 3.0});
  TD gamma({2}, {1.0, 1.0});
  TD beta({2}, {0.0, 0.0});
  TD y = wfen::layer_norm_channel(x, gamma, beta);
  CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm_channel gradients") {
  wfen::Rng rng(37);
  TD x = random_tensor({2, 3, 2, 2}, rng);
  TD gamma = random_tensor({3}, rng, 0.5, 1.5);
  TD beta = random_tensor({3}, rng, -0.3, 0.3);
  auto f = [&](Graph<double>&) {
    TD y = wfen::layer_norm_channel(x, gamma, beta);
    return wfen::sum_all(wfen::mul(y, y));
  };
  auto res = wfen::grad_check<double>(f, {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  INFO(res.worst_param, " idx ", res.worst_index, " analytic ", res.worst_analytic, " numeric ",
       res.worst_numeric);
  CHECK(res.passed);
}

TEST_CASE("reshape and permute round trips") {
  wfen::Rng rng(41);
  TD x = random_tensor({2, 3, 4}, rng);
  TD r = wfen::reshape(x, {4, 6});
  CHECK(r.shape() == Shape{4, 6});
  CHECK(same_bits(x, wfen::reshape(r, {2, 3, 4})));
  CHECK_THROWS(wfen::reshape(x, {5, 5}));

  TD p = wfen::permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  // element oracle: p[i][j][k] == x[j][k][i]
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 2; ++j) {
      for (int64_t k = 0; k < 3; ++k) {
        CHECK(p.at((i * 2 + j) * 3 + k) == x.at((j * 3 + k) * 4 + i));
      }
    }
  }
  TD back = wfen::permute(p, {1, 2, 0});
  CHECK(same_bits(x, back));
  CHECK_THROWS(wfen::permute(x, {0, 0, 1}));
}

TEST_CASE("permute gradients") {
  wfen::Rng rng(43);
  TD x = random_tensor({2, 3, 2, 4}, rng);
  auto f = [&](Graph<double>&) {
    TD y = wfen::permute(x, {0, 2, 1, 3});
    return wfen::sum_all(wfen::mul(y, y));
  };
  CHECK(wfen::grad_check<double>(f, {{"x", x}}).passed);
}

TEST_CASE("concat and split are inverse") {
  wfen::Rng rng(47);
  TD a = random_tensor({2, 2, 2, 3}, rng);
  TD b = random_tensor({2, 5, 2, 3}, rng);
  TD cat = wfen::concat<double>({a, b}, 1);
  CHECK(cat.shape() == Shape{2, 7, 2, 3});
  auto parts = wfen::split(cat, 1, {2, 5});
  CHECK(same_bits(a, parts[0]));
  CHECK(same_bits(b, parts[1]));
  CHECK_THROWS(wfen::split(cat, 1, {3, 3}));
  CHECK_THROWS(wfen::concat<double>({a, TD({2, 2, 2, 4})}, 1));
}

TEST_CASE("concat and split gradients") {
  wfen::Rng rng(53);
  TD a = random_tensor({1, 2, 2, 2}, rng);
  TD b = random_tensor({1, 3, 2, 2}, rng);
  auto f = [&](Graph<double>&) {
    TD cat = wfen::concat<double>({a, b}, 1);
    auto parts = wfen::split(cat, 1, {1, 4});
    return wfen::sum_all(wfen::mul(parts[1], parts[1]));
  };
  auto res = wfen::grad_check<double>(f, {{"a", a}, {"b", b}});
  CHECK(res.passed);
}

TEST_CASE("window partition layout and merge inverse") {
  // 1x1x4x4 image with distinct values, windows of 2
  std::vector<double> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<size_t>(i)] = i;
  TD x({1, 1, 4, 4}, vals);
  TD wins = wfen::window_partition(x, 2);
  CHECK(wins.shape() == Shape{4, 1, 2, 2});
  // first window is the top-left block
  CHECK(wins.at(0) == 0.0);
  CHECK(wins.at(1) == 1.0);
  CHECK(wins.at(2) == 4.0);
  CHECK(wins.at(3) == 5.0);
  // windows are row-major over the grid: second window is top-right
  CHECK(wins.at(4) == 2.0);
  TD back = wfen::window_merge(wins, 1, 4, 4);
  CHECK(same_bits(x, back));
  CHECK_THROWS(wfen::window_partition(x, 3));
}

TEST_CASE("window ops gradients") {
  wfen::Rng rng(59);
  TD x = random_tensor({2, 3, 4, 4}, rng);
  auto f = [&](Graph<double>&) {
    TD wins = wfen::window_partition(x, 2);
    TD y = wfen::window_merge(wins, 2, 4, 4);
    return wfen::sum_all(wfen::mul(y, y));
  };
  CHECK(wfen::grad_check<double>(f, {{"x", x}}).passed);
}

TEST_CASE("cyclic shift wraps and inverts") {
  std::vector<double> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<size_t>(i)] = i;
  TD x({1, 1, 4, 4}, vals);
  TD s = wfen::cyclic_shift(x, 1);
  // out[0][0] reads x[-1 mod 4][-1 mod 4] = x[3][3]
  CHECK(s.at(0) == 15.0);
  CHECK(s.at(5) == 0.0);  // out[1][1] = x[0][0]
  TD back = wfen::cyclic_shift(s, -1);
  CHECK(same_bits(x, back));
  wfen::Rng rng(61);
  TD z = random_tensor({1, 2, 4, 6}, rng);
  auto f = [&](Graph<double>&) {
    TD y = wfen::cyclic_shift(z, 2);
    return wfen::sum_all(wfen::mul(y, y));
  };
  CHECK(wfen::grad_check<double>(f, {{"z", z}}).passed);
}

TEST_CASE("channel permute and head shuffle") {
  TD x({1, 4, 1, 1}, {10.0, 11.0, 12.0, 13.0});
  TD y = wfen::shuffle_heads(x, 2);
  // channels regroup as 0,2,1,3
  CHECK(y.at(0) == 10.0);
  CHECK(y.at(1) == 12.0);
  CHECK(y.at(2) == 11.0);
  CHECK(y.at(3) == 13.0);
  CHECK_THROWS(wfen::shuffle_heads(x, 3));
  wfen::Rng rng(67);
  TD z = random_tensor({2, 6, 2, 2}, rng);
  auto f = [&](Graph<double>&) {
    TD s = wfen::shuffle_heads(z, 3);
    return wfen::sum_all(wfen::mul(s, s));
  };
  CHECK(wfen::grad_check<double>(f, {{"z", z}}).passed);
}

TEST_CASE("avgpool2 oracle and gradients") {
  TD x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  TD y = wfen::avgpool2(x);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.at(0) == 2.5);
  CHECK_THROWS(wfen::avgpool2(TD({1, 1, 3, 2})));
  wfen::Rng rng(71);
  TD z = random_tensor({2, 2, 4, 6}, rng);
  auto f = [&](Graph<double>&) {
    TD p = wfen::avgpool2(z);
    return wfen::sum_all(wfen::mul(p, p));
  };
  CHECK(wfen::grad_check<double>(f, {{"z", z}}).passed);
}

TEST_CASE("bicubic kernel properties") {
  CHECK(wfen::bicubic_kernel_weight(0.0) == 1.0);
  CHECK(wfen::bicubic_kernel_weight(1.0) == 0.0);
  CHECK(wfen::bicubic_kernel_weight(2.0) == 0.0);
  CHECK(wfen::bicubic_kernel_weight(2.5) == 0.0);
  // half-pixel taps
  CHECK(wfen::bicubic_kernel_weight(1.5) == doctest::Approx(-0.0625));
  CHECK(wfen::bicubic_kernel_weight(0.5) == doctest::Approx(0.5625));
  // partition of unity for any phase
  for (double frac : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9}) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += wfen::bicubic_kernel_weight(frac + 1.0 - k);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bicubic downscale of a linear ramp stays linear away from edges") {
  const int64_t w = 16;
  TD x({1, 1, 2, w});
  for (int64_t i = 0; i < 2; ++i) {
    for (int64_t j = 0; j < w; ++j) x.set(i * w + j, static_cast<double>(j));
  }
  TD y = wfen::bicubic_resize(x, 1, w / 2);
  // target pixel centers map to source coordinate 2*o + 0.5
  for (int64_t o = 2; o < w / 2 - 2; ++o) {
    CHECK(y.at(o) == doctest::Approx(2.0 * static_cast<double>(o) + 0.5).epsilon(1e-9));
  }
}

TEST_CASE("bicubic resize constant image is preserved exactly up to rounding") {
  TD x = TD::full({1, 2, 6, 8}, 0.37);
  TD y = wfen::bicubic_resize(x, 3, 4);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("bicubic resize gradients") {
  wfen::Rng rng(73);
  TD x = random_tensor({1, 2, 6, 8}, rng);
  auto f = [&](Graph<double>&) {
    TD y = wfen::bicubic_resize(x, 3, 4);
    return wfen::sum_all(wfen::mul(y, y));
  };
  CHECK(wfen::grad_check<double>(f, {{"x", x}}).passed);
  auto fu = [&](Graph<double>&) {
    TD y = wfen::bicubic_resize(x, 12, 16);
    return wfen::sum_all(wfen::mul(y, y));
  };
  CHECK(wfen::grad_check<double>(fu, {{"x", x}}).passed);
}

TEST_CASE("gradcheck flags a broken gradient") {
  TD x({2}, {0.7, -0.3});
  auto f = [&](Graph<double>&) {
    // one factor detached: forward value is sum(x*x) but the recorded
    // pullback only sees one factor, so the analytic grad is x, not 2x
    return wfen::sum_all(wfen::mul(x.detach(), x));
  };
  auto res = wfen::grad_check<double>(f, {{"x", x}});
  CHECK_FALSE(res.passed);
}
