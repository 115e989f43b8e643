// tests/tensor_test.cc

// Copyright 2026  The dakws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dakws/tensor.h"

using namespace dakws;
using TD = Tensor<double>;

namespace {

std::mt19937_64 g_rng(1234);

template <typename T = double>
Tensor<T> Rand(const Shape &shape, double lo = -1, double hi = 1, bool param = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(NumElements(shape));
  for (auto &x : v) x = T(u(g_rng));
  return param ? Tensor<T>::Param(shape, v) : Tensor<T>::FromData(shape, v);
}

// Random projection to a scalar so every output coordinate matters.
double CheckOp(const std::function<TD()> &op, const std::vector<TD> &params) {
  TD probe;
  auto f = [&]() {
    TD y = op();
    if (!probe.defined()) probe = Rand(y.shape(), -1, 1, false);
    return Sum(Mul(y, probe));
  };
  return GradCheck(f, params, 1e-4, 300, 7);
}

// Direct 6-loop convolution in the [B, T, F, C] layout.
std::vector<double> NaiveConv(const TD &x, const TD &w, const TD &b, const Conv2dOptions &o, Shape *out_shape) {
  const int bs = x.dim(0), tin = x.dim(1), fin = x.dim(2), cin = x.dim(3);
  const int cout = w.dim(0), kt = w.dim(1), kf = w.dim(2);
  const int tout = (tin + o.pad_t - kt) / o.stride_t + 1, fout = (fin + 2 * o.pad_f - kf) / o.stride_f + 1;
  *out_shape = {bs, tout, fout, cout};
  std::vector<double> y(size_t(bs) * tout * fout * cout);
  for (int n = 0; n < bs; ++n)
    for (int t = 0; t < tout; ++t)
      for (int f = 0; f < fout; ++f)
        for (int co = 0; co < cout; ++co) {
          double acc = b.defined() ? b.data()[co] : 0;
          for (int i = 0; i < kt; ++i)
            for (int j = 0; j < kf; ++j)
              for (int ci = 0; ci < cin; ++ci) {
                const int ti = t * o.stride_t + i - o.pad_t, fi = f * o.stride_f + j - o.pad_f;
                if (ti < 0 || ti >= tin || fi < 0 || fi >= fin) continue;
                acc += w.data()[((co * kt + i) * kf + j) * cin + ci] * x.data()[((n * tin + ti) * fin + fi) * cin + ci];
              }
          y[((n * tout + t) * fout + f) * cout + co] = acc;
        }
  return y;
}

double MaxDiff(const std::vector<double> &a, const std::vector<double> &b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d matches the direct sum") {
  const Conv2dOptions opts[] = {{1, 1, 0, 0}, {2, 2, 2, 1}, {1, 2, 1, 0}, {2, 1, 0, 2}};
  for (const auto &o : opts) {
    TD x = Rand({2, 9, 11, 3}), w = Rand({4, 3, 3, 3}), b = Rand({4});
    Shape s;
    auto want = NaiveConv(x, w, b, o, &s);
    TD y = Conv2d(x, w, b, o);
    CHECK(y.shape() == s);
    CHECK(MaxDiff(y.data(), want) <= 1e-10);
    CHECK(MaxDiff(Conv2d(x, w, TD(), o).data(), NaiveConv(x, w, TD(), o, &s)) <= 1e-10);
  }
  CHECK_THROWS_AS(Conv2d(Rand({1, 4, 4, 2}), Rand({3, 3, 3, 5}), TD(), {}), std::invalid_argument);
  CHECK_THROWS(Conv2d(Rand({1, 1, 4, 2}), Rand({3, 3, 3, 2}), TD(), {}));
}

TEST_CASE("complex conv with unit and imaginary kernels") {
  TD xr = Rand({2, 5, 6, 1}), xi = Rand({2, 5, 6, 1});
  ComplexTensor<double> x{xr, xi};
  ComplexTensor<double> one{TD::FromData({1, 1, 1, 1}, {1.0}), TD::FromData({1, 1, 1, 1}, {0.0})};
  auto y = ComplexConv2d(x, one, {}, {});
  CHECK(y.re.data() == xr.data());
  CHECK(y.im.data() == xi.data());
  ComplexTensor<double> j{TD::FromData({1, 1, 1, 1}, {0.0}), TD::FromData({1, 1, 1, 1}, {1.0})};
  auto z = ComplexConv2d(x, j, {}, {});
  for (size_t i = 0; i < xr.data().size(); ++i) {
    CHECK(z.re.data()[i] == -xi.data()[i]);
    CHECK(z.im.data()[i] == xr.data()[i]);
  }
}

TEST_CASE("complex conv equals the conv-of-parts identity") {
  const Conv2dOptions o{2, 2, 2, 1};
  TD xr = Rand({2, 7, 9, 2}), xi = Rand({2, 7, 9, 2});
  TD wr = Rand({3, 3, 3, 2}), wi = Rand({3, 3, 3, 2}), br = Rand({3}), bi = Rand({3});
  auto y = ComplexConv2d<double>({xr, xi}, {wr, wi}, {br, bi}, o);
  Shape s;
  auto rr = NaiveConv(xr, wr, br, o, &s), ii = NaiveConv(xi, wi, TD(), o, &s);
  auto ri = NaiveConv(xi, wr, bi, o, &s), ir = NaiveConv(xr, wi, TD(), o, &s);
  std::vector<double> re(rr.size()), im(rr.size());
  for (size_t i = 0; i < rr.size(); ++i) re[i] = rr[i] - ii[i], im[i] = ri[i] + ir[i];
  CHECK(MaxDiff(y.re.data(), re) <= 1e-10);
  CHECK(MaxDiff(y.im.data(), im) <= 1e-10);
  // Packed output keeps real channels first.
  TD packed = ComplexConv2dPacked<double>(PackComplex<double>({xr, xi}), {wr, wi}, {br, bi}, o);
  CHECK(packed.dim(3) == 6);
  auto un = UnpackComplex(packed);
  CHECK(un.re.data() == y.re.data());
}

TEST_CASE("depthwise conv is causal and matches the direct sum") {
  const int k = 5, d = 4, pad = (k - 1) * d;
  TD x = Rand({2, 30, 3}), w = Rand({3, k}), b = Rand({3});
  TD y = DepthwiseConv1d(x, w, b, d, pad);
  CHECK(y.shape() == Shape{2, 30, 3});
  for (int n = 0; n < 2; ++n)
    for (int t = 0; t < 30; ++t)
      for (int c = 0; c < 3; ++c) {
        double acc = b.data()[c];
        for (int j = 0; j < k; ++j) {
          const int ti = t - (k - 1 - j) * d;
          if (ti >= 0) acc += w.data()[c * k + j] * x.data()[(n * 30 + ti) * 3 + c];
        }
        REQUIRE(std::abs(y.data()[(n * 30 + t) * 3 + c] - acc) < 1e-12);
      }
  for (int t0 : {0, 7, 29}) {
    TD x2 = x.Detach();
    for (int c = 0; c < 3; ++c) x2.data()[(0 * 30 + t0) * 3 + c] += 1.0;
    TD y2 = DepthwiseConv1d(x2, w, b, d, pad);
    for (int t = 0; t < 30; ++t)
      for (int c = 0; c < 3; ++c) {
        const size_t i = (0 * 30 + t) * 3 + c;
        if (t < t0) REQUIRE(y2.data()[i] == y.data()[i]);
      }
  }
  // Without padding the output is the valid part only.
  CHECK(DepthwiseConv1d(x, w, b, d, 0).dim(1) == 30 - pad);
  CHECK_THROWS(DepthwiseConv1d(Rand({1, 10, 3}), w, b, d, 0));
}

TEST_CASE("every op passes a finite-difference check") {
  std::uniform_int_distribution<int> dim(1, 4);
  for (int trial = 0; trial < 3; ++trial) {
    const int b = dim(g_rng), t = dim(g_rng) + 4, f = dim(g_rng) + 4, c = dim(g_rng);
    TD a = Rand({b, t, c}), a2 = Rand({b, t, c}), bias = Rand({c}), e = Rand({b, c});
    CHECK(CheckOp([&] { return Add(a, a2); }, {a, a2}) <= 1e-4);
    CHECK(CheckOp([&] { return Sub(a, a2); }, {a, a2}) <= 1e-4);
    CHECK(CheckOp([&] { return Mul(a, a2); }, {a, a2}) <= 1e-4);
    CHECK(CheckOp([&] { return Scale(a, 1.7); }, {a}) <= 1e-4);
    CHECK(CheckOp([&] { return AddBias(a, bias); }, {a, bias}) <= 1e-4);
    CHECK(CheckOp([&] { return AddOverTime(a, e); }, {a, e}) <= 1e-4);
    TD m1 = Rand({t, c + 2}), m2 = Rand({c + 2, f});
    CHECK(CheckOp([&] { return MatMul(m1, m2); }, {m1, m2}) <= 1e-4);
    TD w = Rand({f, c}), wb = Rand({f});
    CHECK(CheckOp([&] { return Linear(a, w, wb); }, {a, w, wb}) <= 1e-4);
    TD x4 = Rand({b, t, f, c}), k4 = Rand({3, 3, 3, c}), kb = Rand({3});
    CHECK(CheckOp([&] { return Conv2d(x4, k4, kb, {2, 2, 2, 1}); }, {x4, k4, kb}) <= 1e-4);
    TD kr = Rand({2, 3, 3, c}), ki = Rand({2, 3, 3, c}), br = Rand({2}), bi = Rand({2});
    TD xp = Rand({b, t, f, 2 * c});
    CHECK(CheckOp([&] { return ComplexConv2dPacked<double>(xp, {kr, ki}, {br, bi}, {2, 2, 2, 1}); },
                  {xp, kr, ki, br, bi}) <= 1e-4);
    TD dw = Rand({c, 3}), db = Rand({c});
    CHECK(CheckOp([&] { return DepthwiseConv1d(a, dw, db, 2, 4); }, {a, dw, db}) <= 1e-4);
    CHECK(CheckOp([&] { return Relu(a); }, {a}) <= 1e-4);
    CHECK(CheckOp([&] { return Sigmoid(a); }, {a}) <= 1e-4);
    CHECK(CheckOp([&] { return Softmax(a); }, {a}) <= 1e-4);
    TD gain = Rand({c + 1}, 0.5, 1.5), lb = Rand({c + 1}), ln_x = Rand({b, t, c + 1});
    CHECK(CheckOp([&] { return LayerNorm(ln_x, gain, lb); }, {ln_x, gain, lb}) <= 1e-6);
    std::mt19937_64 drop_rng(1);
    CHECK(CheckOp([&] { return Dropout(a, 0.3, false, drop_rng); }, {a}) <= 1e-4);
    TD table = Rand({5, c});
    CHECK(CheckOp([&] { return Embedding(table, {0, 3, 3, 4}); }, {table}) <= 1e-4);
    CHECK(CheckOp([&] { return Sum(a); }, {a}) <= 1e-4);
    CHECK(CheckOp([&] { return Mean(a); }, {a}) <= 1e-4);
    CHECK(CheckOp([&] { return Concat<double>({a, a2, a}, 1); }, {a, a2}) <= 1e-4);
    CHECK(CheckOp([&] { return Reshape(a, {b * t, c}); }, {a}) <= 1e-4);
    CHECK(CheckOp([&] { return Slice(a, 1, 1, t - 1); }, {a}) <= 1e-4);
  }
}

TEST_CASE("grad check values") {
  // Central differences are exact on a quadratic; only rounding in f remains.
  TD w = Rand({4, 4}, 0.5, 1.0);
  CHECK(GradCheck([&] { return Sum(Mul(w, w)); }, {w}) <= 1e-10);

  std::mt19937_64 rng(3);
  TD x = Rand({2, 6});
  CHECK_THROWS_AS(GradCheck([&] { return Sum(Dropout(x, 0.5, true, rng)); }, {x}), std::logic_error);
  // Eval mode is inert and deterministic.
  CHECK(Dropout(x, 0.5, false, rng).data() == x.data());
  TD p = Rand({3});
  CHECK_THROWS_AS(GradCheck([&] { return Sum(Scale(p, std::nan(""))); }, {p}), std::runtime_error);
}

TEST_CASE("grad check skips relu kinks") {
  TD x = TD::Param({3}, {2e-5, 0.5, -0.7});
  auto f = [&] { return Sum(Mul(Relu(x), x)); };
  const auto rep = GradCheckDetailed(f, {x}, 1e-4, 3, 0);
  CHECK(rep.skipped == 1);
  CHECK(rep.checked == 2);
  CHECK(rep.max_rel_err < 1e-9);
  // Without crossings every coordinate counts.
  const auto smooth = GradCheckDetailed(f, {x}, 1e-6, 3, 0);
  CHECK(smooth.skipped == 0);
  CHECK(smooth.checked == 3);
  // Sampling keeps drawing until the budget is met.
  TD y = Rand({50});
  for (int i = 0; i < 10; ++i) y.data()[i] = 1e-6;
  const auto rep2 = GradCheckDetailed([&] { return Sum(Relu(y)); }, {y}, 1e-4, 30, 3);
  CHECK(rep2.checked == 30);
}

TEST_CASE("backward basics") {
  TD w = Rand({3, 4}), x = Rand({5, 4}, -1, 1, false);
  Sum(Linear(x, w)).Backward();
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int r = 0; r < 5; ++r) s += x.data()[r * 4 + i];
      CHECK(w.grad()[o * 4 + i] == doctest::Approx(s).epsilon(1e-12));
    }
  TD z = TD::Param({3}, {-1.0, 0.0, 2.0});
  Sum(Relu(z)).Backward();
  CHECK(z.grad() == std::vector<double>{0, 0, 1});
  CHECK_THROWS_AS(Relu(z).Backward(), std::invalid_argument);

  // Shared subexpressions accumulate.
  TD a = TD::Param({1}, {3.0});
  TD s = Mul(a, a);
  Sum(Add(s, s)).Backward();
  CHECK(a.grad()[0] == doctest::Approx(12));

  {
    NoGradGuard guard;
    TD y = Mul(a, a);
    CHECK(!y.requires_grad());
  }
  CHECK(Mul(a, a).requires_grad());
  try {
    Add(Rand({2, 3}), Rand({3, 2}));
    FAIL("no throw");
  } catch (const std::invalid_argument &e) {
    CHECK(std::string(e.what()) == "Add: shape mismatch [2, 3] vs [3, 2]");
  }
  CHECK_THROWS_AS(Embedding(Rand({4, 2}), {4}), std::out_of_range);
}

TEST_CASE("softmax and layernorm statistics") {
  TD x = Rand({6, 11}, -5, 5);
  TD y = Softmax(x);
  for (int r = 0; r < 6; ++r) {
    double s = 0;
    for (int j = 0; j < 11; ++j) s += y.data()[r * 11 + j];
    CHECK(std::abs(s - 1) <= 1e-6);
  }
  TD h = Rand({5, 64}, -3, 7);
  TD n = LayerNorm(h, TD::Full({64}, 1.0), TD::Zeros({64}));
  for (int r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (int j = 0; j < 64; ++j) m += n.data()[r * 64 + j];
    m /= 64;
    for (int j = 0; j < 64; ++j) v += (n.data()[r * 64 + j] - m) * (n.data()[r * 64 + j] - m);
    v /= 64;
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::abs(v - 1) <= 1e-5);
  }
}

TEST_CASE("forward is deterministic in both precisions") {
  auto run = [](auto tag) {
    using T = decltype(tag);
    g_rng.seed(99);
    auto x = Rand<T>({2, 9, 13, 4}), w = Rand<T>({8, 3, 3, 4}), b = Rand<T>({8});
    auto y = Relu(Conv2d(x, w, b, {2, 2, 2, 1}));
    auto l = Linear(Reshape(y, {y.dim(0), y.dim(1), y.dim(2) * y.dim(3)}), Rand<T>({5, y.dim(2) * y.dim(3)}));
    return l.data();
  };
  CHECK(run(float()) == run(float()));
  CHECK(run(double()) == run(double()));
}
