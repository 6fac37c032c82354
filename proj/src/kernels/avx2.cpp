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

// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached after the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include "polarface/kernels/gemm.hpp"

namespace polarface::kernels::avx2 {
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;

inline void micro_kernel(int kc, const float* pa, const float* pb, float* c, int ldc, int mr,
                         int nr) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_load_ps(pb);
    const __m256 b1 = _mm256_load_ps(pb + 8);
    __m256 a = _mm256_broadcast_ss(pa + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(pa + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(pa + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(pa + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(pa + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(pa + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    pa += kMr;
    pb += kNr;
  }
  if (mr == kMr && nr == kNr) {
#define POLARFACE_ACC_ROW(i, lo, hi)                                              \
  _mm256_storeu_ps(c + (i) * ldc, _mm256_add_ps(_mm256_loadu_ps(c + (i) * ldc), lo)); \
  _mm256_storeu_ps(c + (i) * ldc + 8, _mm256_add_ps(_mm256_loadu_ps(c + (i) * ldc + 8), hi));
    POLARFACE_ACC_ROW(0, c00, c01)
    POLARFACE_ACC_ROW(1, c10, c11)
    POLARFACE_ACC_ROW(2, c20, c21)
    POLARFACE_ACC_ROW(3, c30, c31)
    POLARFACE_ACC_ROW(4, c40, c41)
    POLARFACE_ACC_ROW(5, c50, c51)
#undef POLARFACE_ACC_ROW
    return;
  }
  alignas(32) float tmp[kMr * kNr];
  _mm256_store_ps(tmp + 0 * kNr, c00);
  _mm256_store_ps(tmp + 0 * kNr + 8, c01);
  _mm256_store_ps(tmp + 1 * kNr, c10);
  _mm256_store_ps(tmp + 1 * kNr + 8, c11);
  _mm256_store_ps(tmp + 2 * kNr, c20);
  _mm256_store_ps(tmp + 2 * kNr + 8, c21);
  _mm256_store_ps(tmp + 3 * kNr, c30);
  _mm256_store_ps(tmp + 3 * kNr + 8, c31);
  _mm256_store_ps(tmp + 4 * kNr, c40);
  _mm256_store_ps(tmp + 4 * kNr + 8, c41);
  _mm256_store_ps(tmp + 5 * kNr, c50);
  _mm256_store_ps(tmp + 5 * kNr + 8, c51);
  for (int i = 0; i < mr; ++i) {
    for (int j = 0; j < nr; ++j) c[static_cast<long>(i) * ldc + j] += tmp[i * kNr + j];
  }
}

#include "gemm_blocked.inl"

// Cephes-style single-precision exp, |rel err| < 2e-7 on the clamped range.
inline __m256 exp_ps(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
  x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), x);
  y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));
  __m256i e = _mm256_cvttps_epi32(fx);
  e = _mm256_slli_epi32(_mm256_add_epi32(e, _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

inline float hsum(__m256 v) {
  __m128 s = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

inline float hmax(__m256 v) {
  __m128 s = _mm_max_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  s = _mm_max_ps(s, _mm_movehl_ps(s, s));
  s = _mm_max_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc, float* pack_a, float* pack_b) {
  gemm_blocked(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, pack_a, pack_b);
}

void softmax_rows(float* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    float* row = x + static_cast<long>(r) * cols;
    int j = 0;
    float mx = row[0];
    if (cols >= 8) {
      __m256 vmax = _mm256_loadu_ps(row);
      for (j = 8; j + 8 <= cols; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
      mx = hmax(vmax);
    } else {
      j = 1;
    }
    for (; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;

    const __m256 vmx = _mm256_set1_ps(mx);
    __m256 vsum = _mm256_setzero_ps();
    for (j = 0; j + 8 <= cols; j += 8) {
      const __m256 e = exp_ps(_mm256_sub_ps(_mm256_loadu_ps(row + j), vmx));
      _mm256_storeu_ps(row + j, e);
      vsum = _mm256_add_ps(vsum, e);
    }
    float sum = hsum(vsum);
    if (j < cols) {
      alignas(32) float tail[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      const int rem = cols - j;
      for (int t = 0; t < 8; ++t) tail[t] = t < rem ? row[j + t] - mx : -200.0f;
      _mm256_store_ps(tail, exp_ps(_mm256_load_ps(tail)));
      for (int t = 0; t < rem; ++t) {
        row[j + t] = tail[t];
        sum += tail[t];
      }
    }
    const __m256 vinv = _mm256_set1_ps(1.0f / sum);
    for (j = 0; j + 8 <= cols; j += 8) {
      _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), vinv));
    }
    const float inv = 1.0f / sum;
    for (; j < cols; ++j) row[j] *= inv;
  }
}

}  // namespace polarface::kernels::avx2
