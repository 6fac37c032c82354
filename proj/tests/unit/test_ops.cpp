// Copyright 2026 The polarface Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "doctest.h"
#include "polarface/autograd/gradcheck.hpp"
#include "polarface/autograd/ops.hpp"
#include "polarface/core/error.hpp"

using namespace polarface;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

constexpr double kTol = 1e-4;

// Direct-loop convolution used as the forward oracle.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, int s, int p) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * p - k) / s + 1, wo = (wd + 2 * p - k) / s + 1;
  Tensor<double> out(Shape{b, o, ho, wo});
  for (int n = 0; n < b; ++n)
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int a = 0; a < k; ++a)
              for (int e = 0; e < k; ++e) {
                const int y = i * s - p + a, xx = j * s - p + e;
                if (y >= 0 && y < h && xx >= 0 && xx < wd) acc += x.at(n, ic, y, xx) * w.at(oc, ic, a, e);
              }
          out.at(n, oc, i, j) = acc;
        }
  return out;
}

// Scatter form of the transposed convolution.
Tensor<double> naive_conv_transpose(const Tensor<double>& x, const Tensor<double>& w, int s,
                                    int p) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(1), k = w.dim(2);
  const int ho = (h - 1) * s - 2 * p + k, wo = (wd - 1) * s - 2 * p + k;
  Tensor<double> out(Shape{b, o, ho, wo});
  for (int n = 0; n < b; ++n)
    for (int ic = 0; ic < c; ++ic)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < wd; ++j)
          for (int oc = 0; oc < o; ++oc)
            for (int a = 0; a < k; ++a)
              for (int e = 0; e < k; ++e) {
                const int y = i * s - p + a, xx = j * s - p + e;
                if (y >= 0 && y < ho && xx >= 0 && xx < wo) {
                  out.at(n, oc, y, xx) += x.at(n, ic, i, j) * w.at(ic, oc, a, e);
                }
              }
  return out;
}

}  // namespace

TEST_CASE("conv2d forward matches direct loops") {
  Rng rng(1);
  for (auto [k, s, p] : {std::tuple{3, 1, 1}, {4, 2, 1}, {1, 1, 0}, {7, 1, 3}, {4, 1, 1}}) {
    auto x = random_tensor({2, 3, 9, 8}, rng);
    auto w = random_tensor({4, 3, k, k}, rng);
    auto y = conv2d<double>(constant(x), constant(w), nullptr, s, p);
    auto ref = naive_conv(x, w, s, p);
    REQUIRE(y->value.shape() == ref.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(y->value[i] == doctest::Approx(ref[i]));
  }
}

TEST_CASE("conv_transpose2d forward matches the scatter definition") {
  Rng rng(2);
  auto x = random_tensor({2, 3, 5, 4}, rng);
  auto w = random_tensor({3, 2, 4, 4}, rng);
  auto y = conv_transpose2d<double>(constant(x), constant(w), nullptr, 2, 1);
  auto ref = naive_conv_transpose(x, w, 2, 1);
  REQUIRE(y->value.shape() == Shape{2, 2, 10, 8});
  for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(y->value[i] == doctest::Approx(ref[i]));
}

TEST_CASE("float conv matches double conv on the active SIMD path") {
  Rng rng(4);
  auto x = random_tensor({2, 5, 12, 12}, rng);
  auto w = random_tensor({6, 5, 3, 3}, rng);
  auto yd = conv2d<double>(constant(x), constant(w), nullptr, 1, 1);
  auto yf = conv2d<float>(constant(x.cast<float>()), constant(w.cast<float>()), nullptr, 1, 1);
  for (std::size_t i = 0; i < yd->value.numel(); ++i) CHECK(std::abs(yd->value[i] - yf->value[i]) < 1e-4);
}

TEST_CASE("convolution shape errors are reported") {
  auto x = constant(Tensor<double>({1, 3, 8, 8}));
  auto w = constant(Tensor<double>({4, 2, 3, 3}));
  CHECK_THROWS_AS(conv2d<double>(x, w, nullptr, 1, 1), ShapeError);
  auto tiny = constant(Tensor<double>({1, 3, 2, 2}));
  auto w7 = constant(Tensor<double>({4, 3, 7, 7}));
  CHECK_THROWS_AS(conv2d<double>(tiny, w7, nullptr, 1, 0), ShapeError);
}

TEST_CASE("gradients of elementwise ops and reductions") {
  Rng rng(5);
  auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
  auto s = random_tensor({1}, rng);
  using V = std::vector<Var<double>>;
  CHECK(grad_check([](const V& v) { return add(v[0], v[1]); }, {a, b}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return sub(v[0], v[1]); }, {a, b}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return mul(v[0], v[1]); }, {a, b}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return scale(v[0], 1.7); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return scale_by(v[0], v[1]); }, {a, s}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return sum(v[0]); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return mean(v[0]); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return mean_abs_diff(v[0], v[1]); }, {a, b}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return relu(v[0]); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return leaky_relu(v[0], 0.2); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return polarface::tanh(v[0]); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return sigmoid(v[0]); }, {a}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return reshape(v[0], Shape{6, 4}); }, {a}).max_relative_error < kTol);
}

TEST_CASE("gradients of the clamped log losses") {
  Rng rng(6);
  auto p = random_tensor({3, 1, 2, 2}, rng, 0.05, 0.95);
  using V = std::vector<Var<double>>;
  CHECK(grad_check([](const V& v) { return mean_neg_log(v[0], 1e-7); }, {p}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return mean_neg_log1m(v[0], 1e-7); }, {p}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return mean_log1m(v[0], 1e-7); }, {p}).max_relative_error < kTol);
}

TEST_CASE("log losses reject probabilities outside the unit interval") {
  CHECK_THROWS_AS(mean_neg_log<double>(constant(Tensor<double>({2}, 1.5)), 1e-7), DomainError);
  CHECK_THROWS_AS(mean_neg_log1m<double>(constant(Tensor<double>({2}, -0.1)), 1e-7), DomainError);
  CHECK_THROWS_AS(mean_neg_log<double>(constant(Tensor<double>({1}, std::nan(""))), 1e-7), DomainError);
  CHECK_NOTHROW(mean_neg_log<double>(constant(Tensor<double>({1}, 0.0)), 1e-7));
}

TEST_CASE("gradients of convolutions") {
  Rng rng(7);
  using V = std::vector<Var<double>>;
  auto x = random_tensor({2, 3, 6, 6}, rng);
  auto w = random_tensor({4, 3, 3, 3}, rng);
  auto bias = random_tensor({4}, rng);
  CHECK(grad_check([](const V& v) { return conv2d(v[0], v[1], v[2], 1, 1); }, {x, w, bias})
            .max_relative_error < kTol);
  auto w4 = random_tensor({4, 3, 4, 4}, rng);
  CHECK(grad_check([](const V& v) { return conv2d(v[0], v[1], v[2], 2, 1); }, {x, w4, bias})
            .max_relative_error < kTol);
  auto w1 = random_tensor({4, 3, 1, 1}, rng);
  CHECK(grad_check([](const V& v) { return conv2d(v[0], v[1], v[2], 1, 0); }, {x, w1, bias})
            .max_relative_error < kTol);
  auto wt = random_tensor({3, 2, 4, 4}, rng);
  auto bt = random_tensor({2}, rng);
  auto xt = random_tensor({2, 3, 3, 4}, rng);
  CHECK(grad_check([](const V& v) { return conv_transpose2d(v[0], v[1], v[2], 2, 1); },
                   {xt, wt, bt})
            .max_relative_error < kTol);
}

TEST_CASE("gradients of batch norm in both modes") {
  Rng rng(8);
  using V = std::vector<Var<double>>;
  auto x = random_tensor({3, 4, 3, 3}, rng);
  auto g = random_tensor({4}, rng, 0.5, 1.5);
  auto b = random_tensor({4}, rng);
  BatchNormStats<double> stats(4);
  CHECK(grad_check([&](const V& v) { return batch_norm(v[0], v[1], v[2], stats, true, 0.1, 1e-5); },
                   {x, g, b})
            .max_relative_error < kTol);
  CHECK(grad_check([&](const V& v) { return batch_norm(v[0], v[1], v[2], stats, false, 0.1, 1e-5); },
                   {x, g, b})
            .max_relative_error < kTol);
}

TEST_CASE("batch norm normalizes with batch statistics and tracks running averages") {
  Tensor<double> x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  BatchNormStats<double> stats(1);
  auto y = batch_norm<double>(constant(x), constant(Tensor<double>({1}, 1.0)),
                              constant(Tensor<double>({1}, 0.0)), stats, true, 0.1, 0.0);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    s += y->value[i];
    s2 += y->value[i] * y->value[i];
  }
  CHECK(std::abs(s) < 1e-12);
  CHECK(s2 / 4 == doctest::Approx(1.0));
  CHECK(stats.running_mean[0] == doctest::Approx(0.25));
  CHECK(stats.running_var[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
}

TEST_CASE("gradients of pooling and linear layers") {
  Rng rng(9);
  using V = std::vector<Var<double>>;
  auto x = random_tensor({2, 3, 6, 6}, rng);
  CHECK(grad_check([](const V& v) { return avg_pool2d(v[0], 2); }, {x}).max_relative_error < kTol);
  CHECK(grad_check([](const V& v) { return adaptive_avg_pool2d(v[0], 4, 4); }, {x}).max_relative_error < kTol);
  auto f = random_tensor({3, 5}, rng), w = random_tensor({2, 5}, rng), b = random_tensor({2}, rng);
  CHECK(grad_check([](const V& v) { return linear(v[0], v[1], v[2]); }, {f, w, b}).max_relative_error < kTol);
}

TEST_CASE("gradients of attention products") {
  Rng rng(10);
  using V = std::vector<Var<double>>;
  auto q = random_tensor({2, 3, 5}, rng), k = random_tensor({2, 3, 7}, rng);
  auto v = random_tensor({2, 4, 7}, rng);
  CHECK(grad_check([](const V& in) { return attention_weights(in[0], in[1]); }, {q, k})
            .max_relative_error < kTol);
  CHECK(grad_check([](const V& in) { return attend(in[0], attention_weights(in[1], in[2])); },
                   {v, q, k})
            .max_relative_error < kTol);
  auto x = random_tensor({2, 4, 3, 3}, rng);
  CHECK(grad_check([](const V& in) { return softmax_channels(in[0]); }, {x}).max_relative_error < kTol);
}

TEST_CASE("blocked attention equals the full product") {
  Rng rng(12);
  auto q = random_tensor({2, 3, 37}, rng), k = random_tensor({2, 3, 29}, rng);
  auto v = random_tensor({2, 5, 29}, rng);
  auto full = attend<double>(constant(v), attention_weights<double>(constant(q), constant(k)));
  auto blocked = attention_rows_blocked(q, k, v, 8);
  for (std::size_t i = 0; i < blocked.numel(); ++i) CHECK(blocked[i] == doctest::Approx(full->value[i]));
}

TEST_CASE("backward accumulates into shared leaves") {
  auto a = parameter(Tensor<double>({2}, 3.0));
  auto loss = sum(add(mul(a, a), a));
  backward(loss);
  CHECK(a->grad[0] == doctest::Approx(7.0));
  CHECK(a->grad[1] == doctest::Approx(7.0));
}

TEST_CASE("no-grad guard suppresses recording") {
  auto a = parameter(Tensor<double>({2}, 1.0));
  NoGradGuard guard;
  auto y = mul(a, a);
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("chunked convolutions agree with direct loops and satisfy the adjoint identity") {
  Rng rng(13);
  // 64 channels with a 7x7 kernel at 64x64 splits the column buffer into chunks.
  auto x = random_tensor({1, 64, 64, 64}, rng);
  auto w = random_tensor({2, 64, 7, 7}, rng);
  auto xv = parameter(x), wv = parameter(w);
  auto y = conv2d<double>(xv, wv, nullptr, 1, 3);
  auto ref = naive_conv(x, w, 1, 3);
  for (std::size_t i = 0; i < ref.numel(); i += 97) CHECK(y->value[i] == doctest::Approx(ref[i]));
  auto g = random_tensor(y->value.shape(), rng);
  backward_with(y, g);
  double lhs = 0.0, rhs_x = 0.0, rhs_w = 0.0;
  for (std::size_t i = 0; i < g.numel(); ++i) lhs += g[i] * ref[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs_x += x[i] * xv->grad[i];
  for (std::size_t i = 0; i < w.numel(); ++i) rhs_w += w[i] * wv->grad[i];
  CHECK(rhs_x == doctest::Approx(lhs).epsilon(1e-10));
  CHECK(rhs_w == doctest::Approx(lhs).epsilon(1e-10));

  auto xt = random_tensor({1, 64, 80, 80}, rng);
  auto wt = random_tensor({64, 128, 4, 4}, rng);  // also chunked
  auto xtv = parameter(xt), wtv = parameter(wt);
  auto yt = conv_transpose2d<double>(xtv, wtv, nullptr, 2, 1);
  auto gt = random_tensor(yt->value.shape(), rng);
  backward_with(yt, gt);
  lhs = rhs_x = rhs_w = 0.0;
  for (std::size_t i = 0; i < gt.numel(); ++i) lhs += gt[i] * yt->value[i];
  for (std::size_t i = 0; i < xt.numel(); ++i) rhs_x += xt[i] * xtv->grad[i];
  for (std::size_t i = 0; i < wt.numel(); ++i) rhs_w += wt[i] * wtv->grad[i];
  CHECK(rhs_x == doctest::Approx(lhs).epsilon(1e-10));
  CHECK(rhs_w == doctest::Approx(lhs).epsilon(1e-10));
}
