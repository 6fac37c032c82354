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

#include "polarface/nn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "polarface/core/error.hpp"

namespace polarface {
namespace {

// Normalizes src into dst (both length n); keeps dst if src is numerically zero.
template <typename T>
void normalize_into(const std::vector<double>& src, Tensor<T>& dst) {
  double n2 = 0.0;
  for (double x : src) n2 += x * x;
  const double norm = std::sqrt(n2);
  if (norm < kSpectralEps) return;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i] / norm);
}

double norm(const std::vector<double>& x) {
  double n2 = 0.0;
  for (double e : x) n2 += e * e;
  return std::sqrt(n2);
}

// Two passes of classical Gram-Schmidt against an orthonormal basis.
void orthogonalize(std::vector<double>& x, const std::vector<std::vector<double>>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) {
      double d = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) d += x[i] * q[i];
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= d * q[i];
    }
  }
}

// Eigenvector of the largest eigenvalue of a small symmetric matrix (cyclic Jacobi).
std::vector<double> top_eigenvector(std::vector<double> a, int n) {
  std::vector<double> vec(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) vec[i * n + i] = 1.0;
  double scale = 0.0;
  for (double e : a) scale += e * e;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off <= 1e-32 * scale) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vec[k * n + p], vkq = vec[k * n + q];
          vec[k * n + p] = c * vkp - s * vkq;
          vec[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (a[i * n + i] > a[best * n + best]) best = i;
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = vec[i * n + best];
  return out;
}

template <typename T>
double rayleigh(const T* w, int rows, int cols, const SpectralState<T>& s) {
  double sigma = 0.0;
  for (int r = 0; r < rows; ++r) {
    const T* row = w + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * s.v[c];
    sigma += acc * s.u[r];
  }
  return sigma;
}

template <typename T>
std::pair<int, int> matrix_view(const Shape& shape) {
  if (shape.empty()) throw ShapeError("spectral_normalize: scalar weight");
  const int rows = shape[0];
  const int cols = rows > 0 ? static_cast<int>(shape_numel(shape) / rows) : 0;
  return {rows, cols};
}

template <typename T>
void require_state(const SpectralState<T>& s, int rows, int cols) {
  if (s.u.numel() != static_cast<std::size_t>(rows) || s.v.numel() != static_cast<std::size_t>(cols)) {
    throw ShapeError("spectral state does not match a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " weight");
  }
}

}  // namespace

template <typename T>
SpectralState<T>::SpectralState(int rows, int cols, Rng& rng)
    : u(Shape{rows}), v(Shape{cols}) {
  std::vector<double> a(rows), b(cols);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  normalize_into(a, u);
  normalize_into(b, v);
}

template <typename T>
double power_iteration(const T* w, int rows, int cols, SpectralState<T>& state, int n_iter) {
  require_state(state, rows, cols);
  if (n_iter <= 0) return rayleigh(w, rows, cols, state);

  // Golub-Kahan bidiagonalization started from v: W V_k = U_k B_k with B
  // upper bidiagonal (alpha on the diagonal, beta above it). Each round costs
  // one W and one W^T product, like a power step; the top singular pair of B
  // is the best estimate over the whole Krylov space rather than the last
  // iterate only. With one round it reproduces the power step exactly.
  std::vector<std::vector<double>> us, vs;
  std::vector<double> alpha, beta;
  vs.emplace_back(state.v.data(), state.v.data() + cols);
  std::vector<double> p(rows), r(cols);
  for (int it = 0; it < n_iter; ++it) {
    const auto& vj = vs.back();
    for (int i = 0; i < rows; ++i) {
      const T* row = w + static_cast<std::size_t>(i) * cols;
      double acc = 0.0;
      for (int c = 0; c < cols; ++c) acc += row[c] * vj[c];
      p[i] = acc;
    }
    orthogonalize(p, us);
    const double a = norm(p);
    if (a < kSpectralEps) break;
    for (double& x : p) x /= a;
    us.push_back(p);
    alpha.push_back(a);

    std::fill(r.begin(), r.end(), 0.0);
    for (int i = 0; i < rows; ++i) {
      const T* row = w + static_cast<std::size_t>(i) * cols;
      const double ui = p[i];
      for (int c = 0; c < cols; ++c) r[c] += row[c] * ui;
    }
    orthogonalize(r, vs);
    const double b = norm(r);
    if (b < kSpectralEps) break;
    for (double& x : r) x /= b;
    vs.push_back(r);
    beta.push_back(b);
  }
  const int k = static_cast<int>(alpha.size());
  if (k == 0) return rayleigh(w, rows, cols, state);
  const int nv = static_cast<int>(vs.size());  // k or k + 1

  // G = B B^T is k x k tridiagonal; its top eigenvector gives the left factor.
  std::vector<double> g(static_cast<std::size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i) {
    const double bi = i + 1 < nv ? beta[i] : 0.0;
    g[i * k + i] = alpha[i] * alpha[i] + bi * bi;
    if (i + 1 < k) g[i * k + i + 1] = g[(i + 1) * k + i] = bi * alpha[i + 1];
  }
  const std::vector<double> x = top_eigenvector(g, k);
  std::vector<double> y(nv, 0.0);
  for (int i = 0; i < k; ++i) {
    y[i] += alpha[i] * x[i];
    if (i + 1 < nv) y[i + 1] += beta[i] * x[i];
  }
  std::vector<double> u_new(rows, 0.0), v_new(cols, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < rows; ++j) u_new[j] += x[i] * us[i][j];
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < cols; ++j) v_new[j] += y[i] * vs[i][j];
  normalize_into(u_new, state.u);
  normalize_into(v_new, state.v);
  return rayleigh(w, rows, cols, state);
}

template <typename T>
Var<T> spectral_normalize(const Var<T>& w, SpectralState<T>& state, int n_iter) {
  const auto [rows, cols] = matrix_view<T>(w->value.shape());
  const double sigma = power_iteration(w->value.data(), rows, cols, state, n_iter);
  const double denom = std::max(sigma, kSpectralEps);
  Tensor<T> out(w->value.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(w->value[i] / denom);
  Tensor<T> u = state.u, v = state.v;
  const bool guarded = sigma < kSpectralEps;
  return make_result<T>(std::move(out), {w}, [=](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T* wp = self.inputs[0]->value.data();
    if (guarded) {
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += static_cast<T>(self.grad[i] / denom);
      return;
    }
    // d(W/s) = G/s - <G, W>/s^2 * u v^T, with s = u^T W v.
    double gw = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) gw += static_cast<double>(self.grad[i]) * wp[i];
    const double k = gw / (denom * denom);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        g[i] += static_cast<T>(self.grad[i] / denom - k * u[r] * v[c]);
      }
    }
  });
}

template <typename T>
double spectral_sigma(const Tensor<T>& w, const SpectralState<T>& state, int n_iter) {
  const auto [rows, cols] = matrix_view<T>(w.shape());
  SpectralState<T> copy = state;
  return power_iteration(w.data(), rows, cols, copy, n_iter);
}

template struct SpectralState<float>;
template struct SpectralState<double>;
template double power_iteration<float>(const float*, int, int, SpectralState<float>&, int);
template double power_iteration<double>(const double*, int, int, SpectralState<double>&, int);
template Var<float> spectral_normalize<float>(const Var<float>&, SpectralState<float>&, int);
template Var<double> spectral_normalize<double>(const Var<double>&, SpectralState<double>&, int);
template double spectral_sigma<float>(const Tensor<float>&, const SpectralState<float>&, int);
template double spectral_sigma<double>(const Tensor<double>&, const SpectralState<double>&, int);

}  // namespace polarface
