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

#pragma once

// Dense kernels used by every convolution, projection and attention product.
//
// Each kernel has a portable scalar reference and, for float, AVX2/FMA and
// AVX-512 variants. The variant is chosen once at startup from the CPU
// features (overridable with POLARFACE_ISA=scalar|avx2|avx512) and can be
// switched at runtime for equivalence testing. Double precision always runs
// the scalar reference.

namespace polarface::kernels {

enum class Isa { kScalar, kAvx2, kAvx512 };

const char* to_string(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa best_isa() noexcept;
Isa active_isa() noexcept;
/// Throws ConfigError if the CPU cannot run `isa`.
void set_active_isa(Isa isa);

/// RAII override of the active variant, restoring the previous one.
class IsaScope {
 public:
  explicit IsaScope(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~IsaScope() { set_active_isa(previous_); }
  IsaScope(const IsaScope&) = delete;
  IsaScope& operator=(const IsaScope&) = delete;

 private:
  Isa previous_;
};

/// C = alpha * op(A) * op(B) + beta * C on row-major storage, where op(A) is
/// m x k and op(B) is k x n. beta == 0 overwrites C without reading it.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

/// In-place softmax of each contiguous row of a rows x cols matrix.
void softmax_rows(float* x, int rows, int cols);
void softmax_rows(double* x, int rows, int cols);

namespace scalar {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);
void softmax_rows(float* x, int rows, int cols);
void softmax_rows(double* x, int rows, int cols);
}  // namespace scalar

// Blocking shared by the SIMD variants; pack buffers hold kMc*kKc and kKc*kNc
// floats and must be 64-byte aligned.
inline constexpr int kGemmKc = 256;
inline constexpr int kGemmMc = 144;
inline constexpr int kGemmNc = 2048;

namespace avx2 {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc, float* pack_a, float* pack_b);
void softmax_rows(float* x, int rows, int cols);
}  // namespace avx2

namespace avx512 {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc, float* pack_a, float* pack_b);
void softmax_rows(float* x, int rows, int cols);
}  // namespace avx512

}  // namespace polarface::kernels
