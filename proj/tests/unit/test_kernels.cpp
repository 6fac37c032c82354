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
#include <vector>

#include "doctest.h"
#include "polarface/core/error.hpp"
#include "polarface/core/rng.hpp"
#include "polarface/kernels/gemm.hpp"

using namespace polarface;
using kernels::Isa;

namespace {

std::vector<float> random_vector(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kAvx2, Isa::kAvx512}) {
    if (kernels::isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

}  // namespace

TEST_CASE("simd gemm matches the scalar reference for every transpose and ragged size") {
  Rng rng(11);
  const int sizes[][3] = {{1, 1, 1},   {5, 7, 3},    {6, 16, 8},   {13, 33, 17},
                          {64, 64, 64}, {145, 70, 300}, {12, 2100, 9}, {300, 5, 260}};
  for (Isa isa : available_isas()) {
    kernels::IsaScope scope(isa);
    for (const auto& s : sizes) {
      const int m = s[0], n = s[1], k = s[2];
      for (int ta = 0; ta < 2; ++ta) {
        for (int tb = 0; tb < 2; ++tb) {
          auto a = random_vector(static_cast<std::size_t>(m) * k, rng);
          auto b = random_vector(static_cast<std::size_t>(k) * n, rng);
          auto c0 = random_vector(static_cast<std::size_t>(m) * n, rng);
          auto c1 = c0;
          const int lda = ta ? m : k, ldb = tb ? k : n;
          kernels::scalar::gemm(ta, tb, m, n, k, 0.75f, a.data(), lda, b.data(), ldb, 0.5f,
                                c0.data(), n);
          kernels::gemm(ta, tb, m, n, k, 0.75f, a.data(), lda, b.data(), ldb, 0.5f, c1.data(),
                        n);
          double worst = 0.0;
          for (std::size_t i = 0; i < c0.size(); ++i) {
            worst = std::max(worst, static_cast<double>(std::abs(c0[i] - c1[i])));
          }
          CHECK_MESSAGE(worst < 1e-4 * std::sqrt(static_cast<double>(k)) + 1e-6,
                        kernels::to_string(isa), " m=", m, " n=", n, " k=", k);
        }
      }
    }
  }
}

TEST_CASE("beta zero overwrites uninitialized output") {
  Rng rng(3);
  for (Isa isa : available_isas()) {
    kernels::IsaScope scope(isa);
    auto a = random_vector(9 * 4, rng);
    auto b = random_vector(4 * 19, rng);
    std::vector<float> c(9 * 19, std::nanf(""));
    std::vector<float> ref(9 * 19, 0.0f);
    kernels::scalar::gemm(false, false, 9, 19, 4, 1.0f, a.data(), 4, b.data(), 19, 0.0f,
                          ref.data(), 19);
    kernels::gemm(false, false, 9, 19, 4, 1.0f, a.data(), 4, b.data(), 19, 0.0f, c.data(), 19);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("simd softmax rows match the scalar reference") {
  Rng rng(5);
  for (Isa isa : available_isas()) {
    kernels::IsaScope scope(isa);
    for (int cols : {1, 3, 8, 15, 16, 17, 64, 100, 1025}) {
      const int rows = 7;
      auto x = random_vector(static_cast<std::size_t>(rows) * cols, rng);
      for (auto& v : x) v *= 30.0f;
      auto ref = x;
      kernels::scalar::softmax_rows(ref.data(), rows, cols);
      kernels::softmax_rows(x.data(), rows, cols);
      for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
          const float v = x[static_cast<std::size_t>(r) * cols + c];
          CHECK(v >= 0.0f);
          CHECK(std::abs(v - ref[static_cast<std::size_t>(r) * cols + c]) < 1e-6);
          s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("double precision always takes the scalar path") {
  std::vector<double> a = {1, 2, 3, 4}, b = {5, 6, 7, 8}, c(4, 0.0);
  kernels::gemm(false, false, 2, 2, 2, 1.0, a.data(), 2, b.data(), 2, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("requesting an unsupported ISA is a configuration error") {
  if (!kernels::isa_supported(Isa::kAvx512)) {
    CHECK_THROWS_AS(kernels::set_active_isa(Isa::kAvx512), ConfigError);
  }
  CHECK_NOTHROW(kernels::set_active_isa(Isa::kScalar));
  kernels::set_active_isa(kernels::best_isa());
}
