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

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "polarface/core/error.hpp"
#include "polarface/kernels/gemm.hpp"

namespace polarface::kernels {
namespace {

struct AlignedFree {
  void operator()(float* p) const noexcept { std::free(p); }
};
using AlignedBuffer = std::unique_ptr<float, AlignedFree>;

AlignedBuffer aligned_floats(std::size_t count) {
  const std::size_t bytes = ((count * sizeof(float) + 63) / 64) * 64;
  return AlignedBuffer(static_cast<float*>(std::aligned_alloc(64, bytes)));
}

struct PackWorkspace {
  AlignedBuffer a = aligned_floats(static_cast<std::size_t>(kGemmMc) * kGemmKc);
  AlignedBuffer b = aligned_floats(static_cast<std::size_t>(kGemmKc) * kGemmNc);
};

PackWorkspace& workspace() {
  thread_local PackWorkspace ws;
  return ws;
}

Isa initial_isa() {
  const Isa best = best_isa();
  if (const char* env = std::getenv("POLARFACE_ISA")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
    if (v == "avx512" && isa_supported(Isa::kAvx512)) return Isa::kAvx512;
  }
  return best;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kAvx512: return "avx512";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
#if defined(__x86_64__) || defined(__i386__)
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::kAvx512: return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
  }
  return false;
#else
  return isa == Isa::kScalar;
#endif
}

Isa best_isa() noexcept {
  if (isa_supported(Isa::kAvx512)) return Isa::kAvx512;
  if (isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  return Isa::kScalar;
}

Isa active_isa() noexcept { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError(std::string("kernel variant not supported on this CPU: ") + to_string(isa));
  }
  active().store(isa, std::memory_order_relaxed);
}

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  switch (active_isa()) {
    case Isa::kAvx512: {
      auto& ws = workspace();
      avx512::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, ws.a.get(), ws.b.get());
      return;
    }
    case Isa::kAvx2: {
      auto& ws = workspace();
      avx2::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc, ws.a.get(), ws.b.get());
      return;
    }
    case Isa::kScalar:
      break;
  }
  scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void softmax_rows(float* x, int rows, int cols) {
  if (rows <= 0 || cols <= 0) return;
  switch (active_isa()) {
    case Isa::kAvx512: avx512::softmax_rows(x, rows, cols); return;
    case Isa::kAvx2: avx2::softmax_rows(x, rows, cols); return;
    case Isa::kScalar: break;
  }
  scalar::softmax_rows(x, rows, cols);
}

void softmax_rows(double* x, int rows, int cols) {
  if (rows <= 0 || cols <= 0) return;
  scalar::softmax_rows(x, rows, cols);
}

}  // namespace polarface::kernels
