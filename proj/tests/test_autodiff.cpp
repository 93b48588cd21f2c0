#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "emdr/autodiff.hpp"
#include "emdr/params.hpp"

using namespace emdr;
using ad::Tensor;

namespace {

// Fresh ParamSet with one leaf per (name, shape), values from N(0, 1).
struct Leaves {
  ParamSet set;
  std::mt19937_64 rng{12345};

  Tensor make(const std::string& name, std::vector<int> shape,
              double scale = 1.0, double shift = 0.0) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng) * scale + shift;
    return set.add(name, std::move(shape), std::move(v));
  }
};

double check(Leaves& lv, const std::function<Tensor()>& loss_fn) {
  return grad_check(loss_fn, {&lv.set}, 1e-5);
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("add, sub, mul, scale gradients") {
  Leaves lv;
  Tensor a = lv.make("a", {3, 4});
  Tensor b = lv.make("b", {3, 4});
  CHECK(check(lv, [&] { return ad::sum(ad::add(a, b)); }) < kTol);
  CHECK(check(lv, [&] { return ad::sum(ad::sub(a, b)); }) < kTol);
  CHECK(check(lv, [&] { return ad::sum(ad::mul(a, b)); }) < kTol);
  CHECK(check(lv, [&] { return ad::sum(ad::scale(a, -2.5)); }) < kTol);
}

TEST_CASE("broadcast row-vector add gradient") {
  Leaves lv;
  Tensor a = lv.make("a", {3, 4});
  Tensor r = lv.make("r", {4});
  CHECK(check(lv, [&] { return ad::sum(ad::mul(ad::add(a, r), a)); }) < kTol);
}

TEST_CASE("matmul and matmul_bt gradients and values") {
  Leaves lv;
  Tensor a = lv.make("a", {2, 3});
  Tensor b = lv.make("b", {3, 4});
  Tensor c = lv.make("c", {4, 3});
  CHECK(check(lv, [&] { return ad::sum(ad::matmul(a, b)); }) < kTol);
  CHECK(check(lv, [&] {
          return ad::sum(ad::mul(ad::matmul_bt(a, c), ad::matmul_bt(a, c)));
        }) < kTol);
  // matmul_bt(a, c) == matmul(a, c^T) elementwise
  auto bt = ad::matmul_bt(a, c).values();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = 0.0;
      for (int k = 0; k < 3; ++k)
        want += a.values()[i * 3 + k] * c.values()[j * 3 + k];
      CHECK(bt[i * 4 + j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("gather_rows accumulates over repeated ids") {
  Leaves lv;
  Tensor t = lv.make("t", {5, 3});
  std::vector<int> ids{1, 3, 1, 1};
  CHECK(check(lv, [&] {
          Tensor g = ad::gather_rows(t, ids);
          return ad::sum(ad::mul(g, g));
        }) < kTol);
}

TEST_CASE("softmax rows: normalization, temperature, gradient") {
  Leaves lv;
  Tensor x = lv.make("x", {2, 5});
  Tensor w = lv.make("w", {2, 5});
  auto p = ad::softmax_rows(x, 0.7).values();
  for (int r = 0; r < 2; ++r) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) s += p[r * 5 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  // manual oracle for one entry
  double denom = 0.0;
  for (int c = 0; c < 5; ++c) denom += std::exp(x.values()[c] / 0.7);
  CHECK(p[0] == doctest::Approx(std::exp(x.values()[0] / 0.7) / denom)
                    .epsilon(1e-12));
  CHECK(check(lv, [&] {
          return ad::sum(ad::mul(ad::softmax_rows(x, 0.7), w));
        }) < kTol);
  CHECK(check(lv, [&] {
          return ad::sum(ad::mul(ad::log_softmax_rows(x), w));
        }) < kTol);
}

TEST_CASE("log_softmax equals log of softmax") {
  Leaves lv;
  Tensor x = lv.make("x", {1, 6});
  auto lp = ad::log_softmax_rows(x).values();
  auto p = ad::softmax_rows(x).values();
  for (int i = 0; i < 6; ++i)
    CHECK(lp[i] == doctest::Approx(std::log(p[i])).epsilon(1e-10));
}

TEST_CASE("logsumexp value and gradient; large-input stability") {
  Leaves lv;
  Tensor x = lv.make("x", {1, 4});
  double m = *std::max_element(x.values().begin(), x.values().end());
  double want = 0.0;
  for (double v : x.values()) want += std::exp(v - m);
  want = m + std::log(want);
  CHECK(ad::logsumexp(x).scalar() == doctest::Approx(want).epsilon(1e-12));
  CHECK(check(lv, [&] { return ad::logsumexp(x); }) < kTol);

  Tensor big = ad::constant({1, 3}, {1000.0, 999.0, 998.0});
  CHECK(std::isfinite(ad::logsumexp(big).scalar()));
  CHECK(ad::logsumexp(big).scalar() ==
        doctest::Approx(1000.0 + std::log(1 + std::exp(-1.0) +
                                          std::exp(-2.0)))
            .epsilon(1e-12));
}

TEST_CASE("vlog, vexp, relu gradients") {
  Leaves lv;
  Tensor pos = lv.make("pos", {2, 3}, 0.5, 3.0);  // bounded away from 0
  Tensor x = lv.make("x", {2, 3}, 1.0, 0.37);     // bounded away from kink
  CHECK(check(lv, [&] { return ad::sum(ad::vlog(pos)); }) < kTol);
  CHECK(check(lv, [&] { return ad::sum(ad::vexp(x)); }) < kTol);
  CHECK(check(lv, [&] { return ad::sum(ad::mul(ad::relu(x), x)); }) < kTol);
}

TEST_CASE("layer_norm: row statistics and gradient") {
  Leaves lv;
  Tensor x = lv.make("x", {3, 8});
  Tensor gain = lv.make("gain", {8}, 0.2, 1.0);
  Tensor bias = lv.make("bias", {8}, 0.2, 0.0);
  Tensor w = lv.make("w", {3, 8});
  // with unit gain and zero bias rows have mean 0, variance ~1
  Tensor ones = ad::constant({8}, std::vector<double>(8, 1.0));
  Tensor zeros = ad::constant({8}, std::vector<double>(8, 0.0));
  auto y = ad::layer_norm(x, ones, zeros).values();
  for (int r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 8; ++c) mean += y[r * 8 + c];
    mean /= 8;
    for (int c = 0; c < 8; ++c) var += (y[r * 8 + c] - mean) * (y[r * 8 + c] - mean);
    var /= 8;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
  }
  CHECK(check(lv, [&] {
          return ad::sum(ad::mul(ad::layer_norm(x, gain, bias), w));
        }) < kTol);
}

TEST_CASE("concat and slice gradients") {
  Leaves lv;
  Tensor a = lv.make("a", {2, 3});
  Tensor b = lv.make("b", {4, 3});
  Tensor c = lv.make("c", {2, 5});
  CHECK(check(lv, [&] {
          Tensor cat = ad::concat_rows({a, b});
          return ad::sum(ad::mul(cat, cat));
        }) < kTol);
  CHECK(check(lv, [&] {
          Tensor cat = ad::concat_cols({a, c});
          return ad::sum(ad::mul(cat, cat));
        }) < kTol);
  CHECK(check(lv, [&] {
          Tensor s = ad::slice_rows(b, 1, 3);
          return ad::sum(ad::mul(s, s));
        }) < kTol);
  CHECK(check(lv, [&] {
          Tensor s = ad::slice_cols(c, 1, 4);
          return ad::sum(ad::mul(s, s));
        }) < kTol);
}

TEST_CASE("sum, mean, dot, pick_rowwise gradients") {
  Leaves lv;
  Tensor a = lv.make("a", {3, 4});
  Tensor u = lv.make("u", {5});
  Tensor v = lv.make("v", {5});
  CHECK(check(lv, [&] { return ad::mean(ad::mul(a, a)); }) < kTol);
  CHECK(check(lv, [&] { return ad::dot(u, v); }) < kTol);
  std::vector<int> ids{2, 0, 3};
  CHECK(check(lv, [&] {
          Tensor p = ad::pick_rowwise(a, ids);
          return ad::sum(ad::mul(p, p));
        }) < kTol);
}

TEST_CASE("stop_gradient blocks flow but keeps values") {
  Leaves lv;
  Tensor a = lv.make("a", {2, 2});
  Tensor b = lv.make("b", {2, 2});
  Tensor sg = ad::stop_gradient(a);
  for (size_t i = 0; i < 4; ++i) CHECK(sg.values()[i] == a.values()[i]);

  lv.set.zero_grad();
  Tensor loss = ad::sum(ad::mul(sg, b));
  ad::backward(loss);
  for (double g : a.grad()) CHECK(g == 0.0);
  bool b_nonzero = false;
  for (double g : b.grad())
    if (g != 0.0) b_nonzero = true;
  CHECK(b_nonzero);
  lv.set.zero_grad();
}

TEST_CASE("stop-gradient product: grad is value(a), not 2 value(a)") {
  Leaves lv;
  Tensor a = lv.make("a", {1, 4});
  lv.set.zero_grad();
  ad::backward(ad::sum(ad::mul(ad::stop_gradient(a), a)));
  for (size_t i = 0; i < 4; ++i)
    CHECK(a.grad()[i] == doctest::Approx(a.values()[i]).epsilon(1e-15));
  lv.set.zero_grad();
}

TEST_CASE("stop-gradient backward equals frozen-constant backward exactly") {
  Leaves lv;
  Tensor a = lv.make("a", {2, 3});
  Tensor b = lv.make("b", {2, 3});
  Tensor frozen = ad::constant({2, 3}, ad::vexp(a).values());

  lv.set.zero_grad();
  ad::backward(ad::sum(ad::mul(ad::stop_gradient(ad::vexp(a)), ad::mul(a, b))));
  auto ga = a.grad(), gb = b.grad();
  lv.set.zero_grad();
  ad::backward(ad::sum(ad::mul(frozen, ad::mul(a, b))));
  for (size_t i = 0; i < 6; ++i) {
    CHECK(a.grad()[i] == ga[i]);
    CHECK(b.grad()[i] == gb[i]);
  }
  lv.set.zero_grad();
}

TEST_CASE("stop_gradient is idempotent") {
  Leaves lv;
  Tensor a = lv.make("a", {1, 3});
  Tensor once = ad::stop_gradient(a);
  Tensor twice = ad::stop_gradient(once);
  for (size_t i = 0; i < 3; ++i) CHECK(twice.values()[i] == a.values()[i]);
  lv.set.zero_grad();
  ad::backward(ad::sum(ad::mul(twice, a)));
  auto g2 = a.grad();
  lv.set.zero_grad();
  ad::backward(ad::sum(ad::mul(once, a)));
  for (size_t i = 0; i < 3; ++i) CHECK(a.grad()[i] == g2[i]);
  lv.set.zero_grad();
}

TEST_CASE("scaled_dot_attention: gradient, causal mask") {
  Leaves lv;
  Tensor q = lv.make("q", {3, 4});
  Tensor k = lv.make("k", {5, 4});
  Tensor v = lv.make("v", {5, 4});
  Tensor w = lv.make("w", {3, 4});
  CHECK(check(lv, [&] {
          return ad::sum(ad::mul(ad::scaled_dot_attention(q, k, v, false), w));
        }) < kTol);

  Leaves lv2;
  Tensor q2 = lv2.make("q", {4, 4});
  Tensor k2 = lv2.make("k", {4, 4});
  Tensor v2 = lv2.make("v", {4, 4});
  Tensor w2 = lv2.make("w", {4, 4});
  CHECK(check(lv2, [&] {
          return ad::sum(
              ad::mul(ad::scaled_dot_attention(q2, k2, v2, true), w2));
        }) < kTol);
  // causal row 0 attends only to key 0: output row 0 == v row 0
  auto out = ad::scaled_dot_attention(q2, k2, v2, true).values();
  for (int c = 0; c < 4; ++c)
    CHECK(out[c] == doctest::Approx(v2.values()[c]).epsilon(1e-12));
}

TEST_CASE("gradient accumulation across backward calls") {
  Leaves lv;
  Tensor a = lv.make("a", {2, 2});
  lv.set.zero_grad();
  ad::backward(ad::sum(a));
  ad::backward(ad::sum(a));
  for (double g : a.grad()) CHECK(g == doctest::Approx(2.0).epsilon(1e-15));
  lv.set.zero_grad();
  for (double g : a.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar and non-finite losses") {
  Leaves lv;
  Tensor a = lv.make("a", {2, 2});
  CHECK_THROWS_AS(ad::backward(a), std::invalid_argument);
  Tensor inf = ad::constant_scalar(std::numeric_limits<double>::infinity());
  CHECK_THROWS(ad::backward(ad::add(ad::sum(a), inf)));
}

TEST_CASE("chained composite expression matches finite differences") {
  Leaves lv;
  Tensor x = lv.make("x", {3, 6});
  Tensor w1 = lv.make("w1", {6, 6});
  Tensor g = lv.make("g", {6}, 0.1, 1.0);
  Tensor b = lv.make("b", {6}, 0.1, 0.0);
  CHECK(check(lv, [&] {
          Tensor h = ad::relu(ad::matmul(x, w1));
          Tensor n = ad::layer_norm(h, g, b);
          Tensor att = ad::scaled_dot_attention(n, n, n, true);
          Tensor lp = ad::log_softmax_rows(att);
          return ad::logsumexp(ad::mul(lp, x));
        }) < 1e-5);
}
