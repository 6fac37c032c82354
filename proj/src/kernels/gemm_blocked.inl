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

// Cache-blocked GEMM driver shared by the SIMD translation units.
//
// Included inside an anonymous namespace after the including file defines
// kMr, kNr and micro_kernel(kc, pa, pb, c, ldc, mr, nr). Deliberately free of
// standard-library templates: this code is compiled with ISA-specific flags
// and must not emit COMDAT symbols the linker could share with baseline code.

inline int min_int(int a, int b) { return a < b ? a : b; }

inline void pack_a_block(bool ta, const float* a, int lda, int row0, int col0, int mc, int kc,
                         float alpha, float* dst) {
  for (int ir = 0; ir < mc; ir += kMr) {
    const int mr = min_int(kMr, mc - ir);
    if (!ta) {
      for (int p = 0; p < kc; ++p) {
        const float* src = a + static_cast<long>(row0 + ir) * lda + (col0 + p);
        for (int i = 0; i < mr; ++i) dst[i] = alpha * src[static_cast<long>(i) * lda];
        for (int i = mr; i < kMr; ++i) dst[i] = 0.0f;
        dst += kMr;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        const float* src = a + static_cast<long>(col0 + p) * lda + (row0 + ir);
        for (int i = 0; i < mr; ++i) dst[i] = alpha * src[i];
        for (int i = mr; i < kMr; ++i) dst[i] = 0.0f;
        dst += kMr;
      }
    }
  }
}

inline void pack_b_block(bool tb, const float* b, int ldb, int row0, int col0, int kc, int nc,
                         float* dst) {
  for (int jr = 0; jr < nc; jr += kNr) {
    const int nr = min_int(kNr, nc - jr);
    if (!tb) {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<long>(row0 + p) * ldb + (col0 + jr);
        for (int j = 0; j < nr; ++j) dst[j] = src[j];
        for (int j = nr; j < kNr; ++j) dst[j] = 0.0f;
        dst += kNr;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<long>(col0 + jr) * ldb + (row0 + p);
        for (int j = 0; j < nr; ++j) dst[j] = src[static_cast<long>(j) * ldb];
        for (int j = nr; j < kNr; ++j) dst[j] = 0.0f;
        dst += kNr;
      }
    }
  }
}

inline void gemm_blocked(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                         int lda, const float* b, int ldb, float beta, float* c, int ldc,
                         float* pack_a, float* pack_b) {
  if (m <= 0 || n <= 0) return;
  if (beta != 1.0f) {
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<long>(i) * ldc;
      if (beta == 0.0f) {
        for (int j = 0; j < n; ++j) crow[j] = 0.0f;
      } else {
        for (int j = 0; j < n; ++j) crow[j] *= beta;
      }
    }
  }
  if (k <= 0 || alpha == 0.0f) return;

  for (int jc = 0; jc < n; jc += kGemmNc) {
    const int nc = min_int(kGemmNc, n - jc);
    for (int pc = 0; pc < k; pc += kGemmKc) {
      const int kc = min_int(kGemmKc, k - pc);
      pack_b_block(tb, b, ldb, pc, jc, kc, nc, pack_b);
      for (int ic = 0; ic < m; ic += kGemmMc) {
        const int mc = min_int(kGemmMc, m - ic);
        pack_a_block(ta, a, lda, ic, pc, mc, kc, alpha, pack_a);
        for (int jr = 0; jr < nc; jr += kNr) {
          const int nr = min_int(kNr, nc - jr);
          for (int ir = 0; ir < mc; ir += kMr) {
            const int mr = min_int(kMr, mc - ir);
            micro_kernel(kc, pack_a + static_cast<long>(ir) * kc,
                         pack_b + static_cast<long>(jr) * kc,
                         c + static_cast<long>(ic + ir) * ldc + (jc + jr), ldc, mr, nr);
          }
        }
      }
    }
  }
}
