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

#include "polarface/autograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "polarface/kernels/gemm.hpp"

namespace polarface {
namespace {

template <typename T>
void accumulate(Var<T>& target, const Tensor<T>& delta) {
  if (!target || !target->requires_grad) return;
  auto& g = target->grad_buffer();
  T* gp = g.data();
  const T* dp = delta.data();
  for (std::size_t i = 0; i < g.numel(); ++i) gp[i] += dp[i];
}

bool wants(const auto& var) { return var && var->requires_grad; }

template <typename T>
void require_feature_map(const Tensor<T>& t, const char* what) {
  require_rank(t.shape(), 4, what);
}

// Column buffers cover grid rows [oh0, oh1) of an ho x wo output grid:
// cols[(c*k + ki)*k + kj][(oh - oh0)*wo + ow] = x[c][oh*s - p + ki][ow*s - p + kj]
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int s, int p, int oh0, int oh1,
            int wo, T* cols) {
  const std::size_t plane = static_cast<std::size_t>(oh1 - oh0) * wo;
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c * k + ki) * k + kj) * plane;
        for (int oh = oh0; oh < oh1; ++oh) {
          const int ih = oh * s - p + ki;
          T* dst = row + static_cast<std::size_t>(oh - oh0) * wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * s - p + kj;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int channels, int h, int w, int k, int s, int p, int oh0, int oh1,
            int wo, T* x) {
  const std::size_t plane = static_cast<std::size_t>(oh1 - oh0) * wo;
  for (int c = 0; c < channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(c * k + ki) * k + kj) * plane;
        for (int oh = oh0; oh < oh1; ++oh) {
          const int ih = oh * s - p + ki;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + static_cast<std::size_t>(oh - oh0) * wo;
          T* dst = xc + static_cast<std::size_t>(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * s - p + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Grid rows per column-buffer chunk, keeping buffers near 8M elements.
int chunk_rows(std::size_t col_rows, int grid_rows, int grid_cols) {
  constexpr std::size_t kBudget = std::size_t{1} << 23;
  const std::size_t per_row = col_rows * static_cast<std::size_t>(grid_cols);
  return static_cast<int>(std::clamp<std::size_t>(kBudget / std::max<std::size_t>(per_row, 1), 1,
                                                  static_cast<std::size_t>(grid_rows)));
}

template <typename Fn>
auto unary_map(const auto& x, Fn fn) {
  auto out = x->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fn(out[i]);
  return out;
}

}  // namespace

// --- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(self.inputs[0], self.grad);
    accumulate(self.inputs[1], self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "sub");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(self.inputs[0], self.grad);
    if (wants(self.inputs[1])) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mul");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& a_in = self.inputs[0];
    auto& b_in = self.inputs[1];
    if (wants(a_in)) {
      auto& g = a_in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b_in->value[i];
    }
    if (wants(b_in)) {
      auto& g = b_in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a_in->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s) {
  if (s->value.numel() != 1) throw ShapeError("scale_by: factor must hold one element");
  const T factor = s->value[0];
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return make_result<T>(std::move(out), {a, s}, [](Node<T>& self) {
    auto& a_in = self.inputs[0];
    auto& s_in = self.inputs[1];
    const T f = s_in->value[0];
    if (wants(a_in)) {
      auto& g = a_in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += f * self.grad[i];
    }
    if (wants(s_in)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.numel(); ++i) {
        acc += static_cast<double>(self.grad[i]) * a_in->value[i];
      }
      s_in->grad_buffer()[0] += static_cast<T>(acc);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
  return make_result<T>(Tensor<T>(Shape{1}, static_cast<T>(acc)), {a}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T s = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a->value.numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a->value[i];
  return make_result<T>(Tensor<T>(Shape{1}, static_cast<T>(acc / n)), {a}, [n](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T s = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mean_abs_diff");
  const std::size_t n = a->value.numel();
  if (n == 0) throw ShapeError("mean_abs_diff of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(a->value[i]) - b->value[i]);
  return make_result<T>(Tensor<T>(Shape{1}, static_cast<T>(acc / n)), {a, b},
                        [n](Node<T>& self) {
                          auto& a_in = self.inputs[0];
                          auto& b_in = self.inputs[1];
                          const T s = self.grad[0] / static_cast<T>(n);
                          T* ga = wants(a_in) ? a_in->grad_buffer().data() : nullptr;
                          T* gb = wants(b_in) ? b_in->grad_buffer().data() : nullptr;
                          for (std::size_t i = 0; i < n; ++i) {
                            const T d = a_in->value[i] - b_in->value[i];
                            const T sg = d > T(0) ? s : (d < T(0) ? -s : T(0));
                            if (ga) ga[i] += sg;
                            if (gb) gb[i] -= sg;
                          }
                        });
}

namespace {

template <typename T>
void check_probabilities(const Tensor<T>& p, const char* what) {
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const T v = p[i];
    if (!(v >= T(0) && v <= T(1))) {
      throw DomainError(std::string(what) + ": probability outside [0, 1]: " + std::to_string(v));
    }
  }
}

// mean of sign * log(clamp(one_minus ? 1 - p : p)).
template <typename T>
Var<T> mean_log_prob(const Var<T>& p, T eps, bool one_minus, T sign, const char* what) {
  check_probabilities(p->value, what);
  const std::size_t n = p->value.numel();
  if (n == 0) throw ShapeError(std::string(what) + " of an empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T c = std::clamp(p->value[i], eps, T(1) - eps);
    acc += std::log(static_cast<double>(one_minus ? T(1) - c : c));
  }
  Tensor<T> out(Shape{1}, static_cast<T>(sign * acc / n));
  return make_result<T>(std::move(out), {p}, [=](Node<T>& self) {
    auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    const T s = sign * self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T v = in->value[i];
      if (v < eps || v > T(1) - eps) continue;
      g[i] += one_minus ? -s / (T(1) - v) : s / v;
    }
  });
}

}  // namespace

template <typename T>
Var<T> mean_neg_log(const Var<T>& p, T eps) {
  return mean_log_prob(p, eps, false, T(-1), "mean_neg_log");
}

template <typename T>
Var<T> mean_neg_log1m(const Var<T>& p, T eps) {
  return mean_log_prob(p, eps, true, T(-1), "mean_neg_log1m");
}

template <typename T>
Var<T> mean_log1m(const Var<T>& p, T eps) {
  return mean_log_prob(p, eps, true, T(1), "mean_log1m");
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  auto out = unary_map(x, [](T v) { return v > T(0) ? v : T(0); });
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (in->value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  auto out = unary_map(x, [slope](T v) { return v > T(0) ? v : slope * v; });
  return make_result<T>(std::move(out), {x}, [slope](Node<T>& self) {
    auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g[i] += in->value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
    }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  auto out = unary_map(x, [](T v) { return std::tanh(v); });
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T y = self.value[i];
      g[i] += (T(1) - y * y) * self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto out = unary_map(x, [](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T y = self.value[i];
      g[i] += y * (T(1) - y) * self.grad[i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x->value.reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

// --- convolution --------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
  require_feature_map(x->value, "conv2d input");
  require_rank(w->value.shape(), 4, "conv2d weight");
  const int batch = x->value.dim(0), cin = x->value.dim(1), h = x->value.dim(2),
            wd = x->value.dim(3);
  const int cout = w->value.dim(0), k = w->value.dim(2);
  if (w->value.dim(1) != cin || w->value.dim(3) != k) {
    throw ShapeError("conv2d: input " + shape_string(x->value.shape()) + " incompatible with weight " +
                     shape_string(w->value.shape()));
  }
  if (bias && bias->value.numel() != static_cast<std::size_t>(cout)) {
    throw ShapeError("conv2d: bias size mismatch");
  }
  const int ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(wd, k, stride, pad);
  if (ho <= 0 || wo <= 0) {
    throw ShapeError("conv2d: input " + shape_string(x->value.shape()) + " too small for kernel");
  }
  const int ckk = cin * k * k;
  const int plane = ho * wo;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  Tensor<T> out(Shape{batch, cout, ho, wo});
  const int rows_per_chunk = pointwise ? ho : chunk_rows(ckk, ho, wo);
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(ckk) * rows_per_chunk * wo);
  for (int n = 0; n < batch; ++n) {
    const T* xn = x->value.data() + static_cast<std::size_t>(n) * cin * h * wd;
    T* on = out.data() + static_cast<std::size_t>(n) * cout * plane;
    for (int r0 = 0; r0 < ho; r0 += rows_per_chunk) {
      const int r1 = std::min(ho, r0 + rows_per_chunk);
      const int span = (r1 - r0) * wo;
      const T* src = xn;
      if (!pointwise) {
        im2col(xn, cin, h, wd, k, stride, pad, r0, r1, wo, cols.data());
        src = cols.data();
      }
      kernels::gemm(false, false, cout, span, ckk, T(1), w->value.data(), ckk, src, span, T(0),
                    on + static_cast<std::size_t>(r0) * wo, plane);
    }
    if (bias) {
      for (int o = 0; o < cout; ++o) {
        const T b = bias->value[o];
        T* row = on + static_cast<std::size_t>(o) * plane;
        for (int i = 0; i < plane; ++i) row[i] += b;
      }
    }
  }

  return make_result<T>(std::move(out), {x, w, bias}, [=](Node<T>& self) {
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    auto& bin = self.inputs[2];
    const std::size_t chunk = pointwise ? 0 : static_cast<std::size_t>(ckk) * rows_per_chunk * wo;
    std::vector<T> cols_bw(chunk), dcols(chunk);
    for (int n = 0; n < batch; ++n) {
      const T* gn = self.grad.data() + static_cast<std::size_t>(n) * cout * plane;
      const T* xn = xin->value.data() + static_cast<std::size_t>(n) * cin * h * wd;
      if (wants(bin)) {
        auto& gb = bin->grad_buffer();
        for (int o = 0; o < cout; ++o) {
          const T* row = gn + static_cast<std::size_t>(o) * plane;
          double acc = 0.0;
          for (int i = 0; i < plane; ++i) acc += row[i];
          gb[o] += static_cast<T>(acc);
        }
      }
      if (pointwise) {
        if (wants(win)) {
          kernels::gemm(false, true, cout, ckk, plane, T(1), gn, plane, xn, plane, T(1),
                        win->grad_buffer().data(), ckk);
        }
        if (wants(xin)) {
          T* dxn = xin->grad_buffer().data() + static_cast<std::size_t>(n) * cin * h * wd;
          kernels::gemm(true, false, ckk, plane, cout, T(1), win->value.data(), ckk, gn, plane,
                        T(1), dxn, plane);
        }
        continue;
      }
      for (int r0 = 0; r0 < ho; r0 += rows_per_chunk) {
        const int r1 = std::min(ho, r0 + rows_per_chunk);
        const int span = (r1 - r0) * wo;
        const T* g_chunk = gn + static_cast<std::size_t>(r0) * wo;
        if (wants(win)) {
          im2col(xn, cin, h, wd, k, stride, pad, r0, r1, wo, cols_bw.data());
          kernels::gemm(false, true, cout, ckk, span, T(1), g_chunk, plane, cols_bw.data(), span,
                        T(1), win->grad_buffer().data(), ckk);
        }
        if (wants(xin)) {
          T* dxn = xin->grad_buffer().data() + static_cast<std::size_t>(n) * cin * h * wd;
          kernels::gemm(true, false, ckk, span, cout, T(1), win->value.data(), ckk, g_chunk,
                        plane, T(0), dcols.data(), span);
          col2im(dcols.data(), cin, h, wd, k, stride, pad, r0, r1, wo, dxn);
        }
      }
    }
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
                        int pad) {
  require_feature_map(x->value, "conv_transpose2d input");
  require_rank(w->value.shape(), 4, "conv_transpose2d weight");
  const int batch = x->value.dim(0), cin = x->value.dim(1), h = x->value.dim(2),
            wd = x->value.dim(3);
  const int cout = w->value.dim(1), k = w->value.dim(2);
  if (w->value.dim(0) != cin || w->value.dim(3) != k) {
    throw ShapeError("conv_transpose2d: input " + shape_string(x->value.shape()) +
                     " incompatible with weight " + shape_string(w->value.shape()));
  }
  if (bias && bias->value.numel() != static_cast<std::size_t>(cout)) {
    throw ShapeError("conv_transpose2d: bias size mismatch");
  }
  const int ho = conv_transpose_out_size(h, k, stride, pad);
  const int wo = conv_transpose_out_size(wd, k, stride, pad);
  if (ho <= 0 || wo <= 0 || conv_out_size(ho, k, stride, pad) != h) {
    throw ShapeError("conv_transpose2d: inconsistent geometry for input " +
                     shape_string(x->value.shape()));
  }
  const int okk = cout * k * k;
  const int plane_in = h * wd;
  const int plane_out = ho * wo;

  Tensor<T> out(Shape{batch, cout, ho, wo});
  // Chunks run over rows of the input grid, which indexes the column buffer.
  const int rows_per_chunk = chunk_rows(okk, h, wd);
  const std::size_t chunk = static_cast<std::size_t>(okk) * rows_per_chunk * wd;
  std::vector<T> cols(chunk);
  for (int n = 0; n < batch; ++n) {
    const T* xn = x->value.data() + static_cast<std::size_t>(n) * cin * plane_in;
    T* on = out.data() + static_cast<std::size_t>(n) * cout * plane_out;
    for (int r0 = 0; r0 < h; r0 += rows_per_chunk) {
      const int r1 = std::min(h, r0 + rows_per_chunk);
      const int span = (r1 - r0) * wd;
      kernels::gemm(true, false, okk, span, cin, T(1), w->value.data(), okk,
                    xn + static_cast<std::size_t>(r0) * wd, plane_in, T(0), cols.data(), span);
      col2im(cols.data(), cout, ho, wo, k, stride, pad, r0, r1, wd, on);
    }
    if (bias) {
      for (int o = 0; o < cout; ++o) {
        const T b = bias->value[o];
        T* row = on + static_cast<std::size_t>(o) * plane_out;
        for (int i = 0; i < plane_out; ++i) row[i] += b;
      }
    }
  }

  return make_result<T>(std::move(out), {x, w, bias}, [=](Node<T>& self) {
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    auto& bin = self.inputs[2];
    std::vector<T> dcols(chunk);
    for (int n = 0; n < batch; ++n) {
      const T* gn = self.grad.data() + static_cast<std::size_t>(n) * cout * plane_out;
      if (wants(bin)) {
        auto& gb = bin->grad_buffer();
        for (int o = 0; o < cout; ++o) {
          const T* row = gn + static_cast<std::size_t>(o) * plane_out;
          double acc = 0.0;
          for (int i = 0; i < plane_out; ++i) acc += row[i];
          gb[o] += static_cast<T>(acc);
        }
      }
      if (!wants(xin) && !wants(win)) continue;
      for (int r0 = 0; r0 < h; r0 += rows_per_chunk) {
        const int r1 = std::min(h, r0 + rows_per_chunk);
        const int span = (r1 - r0) * wd;
        im2col(gn, cout, ho, wo, k, stride, pad, r0, r1, wd, dcols.data());
        if (wants(xin)) {
          T* dxn = xin->grad_buffer().data() + static_cast<std::size_t>(n) * cin * plane_in;
          kernels::gemm(false, false, cin, span, okk, T(1), win->value.data(), okk, dcols.data(),
                        span, T(1), dxn + static_cast<std::size_t>(r0) * wd, plane_in);
        }
        if (wants(win)) {
          const T* xn = xin->value.data() + static_cast<std::size_t>(n) * cin * plane_in;
          kernels::gemm(false, true, cin, okk, span, T(1), xn + static_cast<std::size_t>(r0) * wd,
                        plane_in, dcols.data(), span, T(1), win->grad_buffer().data(), okk);
        }
      }
    }
  });
}

// --- normalization and pooling -----------------------------------------------

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormStats<T>& stats, bool training, T momentum, T eps) {
  require_feature_map(x->value, "batch_norm input");
  const int batch = x->value.dim(0), channels = x->value.dim(1);
  const int plane = x->value.dim(2) * x->value.dim(3);
  if (gamma->value.numel() != static_cast<std::size_t>(channels) ||
      beta->value.numel() != static_cast<std::size_t>(channels) ||
      stats.running_mean.numel() != static_cast<std::size_t>(channels)) {
    throw ShapeError("batch_norm: channel count mismatch for input " +
                     shape_string(x->value.shape()));
  }
  const std::size_t count = static_cast<std::size_t>(batch) * plane;
  Tensor<T> xhat(x->value.shape());
  Tensor<T> inv_std(Shape{channels});
  for (int c = 0; c < channels; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < batch; ++n) {
        const T* p = x->value.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (int i = 0; i < plane; ++i) s += p[i];
      }
      mu = s / count;
      for (int n = 0; n < batch; ++n) {
        const T* p = x->value.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (int i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          s2 += d * d;
        }
      }
      var = s2 / count;
      const double unbiased = count > 1 ? s2 / (count - 1) : var;
      stats.running_mean[c] =
          static_cast<T>((1.0 - momentum) * stats.running_mean[c] + momentum * mu);
      stats.running_var[c] =
          static_cast<T>((1.0 - momentum) * stats.running_var[c] + momentum * unbiased);
    } else {
      mu = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = static_cast<T>(is);
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      const T* p = x->value.data() + off;
      T* q = xhat.data() + off;
      for (int i = 0; i < plane; ++i) q[i] = static_cast<T>((p[i] - mu) * is);
    }
  }
  Tensor<T> out(x->value.shape());
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      const T g = gamma->value[c], b = beta->value[c];
      for (int i = 0; i < plane; ++i) out[off + i] = g * xhat[off + i] + b;
    }
  }

  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& xin = self.inputs[0];
        auto& gin = self.inputs[1];
        auto& bin = self.inputs[2];
        const T* dy = self.grad.data();
        for (int c = 0; c < channels; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
            for (int i = 0; i < plane; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat[off + i];
            }
          }
          if (wants(gin)) gin->grad_buffer()[c] += static_cast<T>(sum_dy_xhat);
          if (wants(bin)) bin->grad_buffer()[c] += static_cast<T>(sum_dy);
          if (!wants(xin)) continue;
          auto& dx = xin->grad_buffer();
          const double g = gin->value[c];
          const double is = inv_std[c];
          for (int n = 0; n < batch; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
            if (training) {
              const double k = g * is / count;
              for (int i = 0; i < plane; ++i) {
                dx[off + i] += static_cast<T>(
                    k * (count * static_cast<double>(dy[off + i]) - sum_dy - xhat[off + i] * sum_dy_xhat));
              }
            } else {
              for (int i = 0; i < plane; ++i) dx[off + i] += static_cast<T>(g * is * dy[off + i]);
            }
          }
        }
      });
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int k) {
  require_feature_map(x->value, "avg_pool2d input");
  const int batch = x->value.dim(0), channels = x->value.dim(1), h = x->value.dim(2),
            w = x->value.dim(3);
  if (k <= 0 || h % k != 0 || w % k != 0) {
    throw ShapeError("avg_pool2d: size " + shape_string(x->value.shape()) +
                     " not divisible by " + std::to_string(k));
  }
  const int ho = h / k, wo = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  Tensor<T> out(Shape{batch, channels, ho, wo});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          T acc = 0;
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) acc += x->value.at(n, c, i * k + a, j * k + b);
          out.at(n, c, i, j) = acc * inv;
        }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < channels; ++c)
        for (int i = 0; i < ho; ++i)
          for (int j = 0; j < wo; ++j) {
            const T d = self.grad.at(n, c, i, j) * inv;
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b) g.at(n, c, i * k + a, j * k + b) += d;
          }
  });
}

template <typename T>
Var<T> adaptive_avg_pool2d(const Var<T>& x, int out_h, int out_w) {
  require_feature_map(x->value, "adaptive_avg_pool2d input");
  const int batch = x->value.dim(0), channels = x->value.dim(1), h = x->value.dim(2),
            w = x->value.dim(3);
  if (out_h <= 0 || out_w <= 0 || out_h > h || out_w > w) {
    throw ShapeError("adaptive_avg_pool2d: cannot pool " + shape_string(x->value.shape()) +
                     " onto " + std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  auto lo = [](int i, int in, int out) { return (i * in) / out; };
  auto hi = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
  Tensor<T> out(Shape{batch, channels, out_h, out_w});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const int r0 = lo(i, h, out_h), r1 = hi(i, h, out_h);
          const int c0 = lo(j, w, out_w), c1 = hi(j, w, out_w);
          double acc = 0.0;
          for (int a = r0; a < r1; ++a)
            for (int b = c0; b < c1; ++b) acc += x->value.at(n, c, a, b);
          out.at(n, c, i, j) = static_cast<T>(acc / ((r1 - r0) * (c1 - c0)));
        }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < channels; ++c)
        for (int i = 0; i < out_h; ++i)
          for (int j = 0; j < out_w; ++j) {
            const int r0 = lo(i, h, out_h), r1 = hi(i, h, out_h);
            const int c0 = lo(j, w, out_w), c1 = hi(j, w, out_w);
            const T d = self.grad.at(n, c, i, j) / static_cast<T>((r1 - r0) * (c1 - c0));
            for (int a = r0; a < r1; ++a)
              for (int b = c0; b < c1; ++b) g.at(n, c, a, b) += d;
          }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  require_rank(x->value.shape(), 2, "linear input");
  require_rank(w->value.shape(), 2, "linear weight");
  const int batch = x->value.dim(0), in = x->value.dim(1), out_dim = w->value.dim(0);
  if (w->value.dim(1) != in) throw ShapeError("linear: feature size mismatch");
  Tensor<T> out(Shape{batch, out_dim});
  kernels::gemm(false, true, batch, out_dim, in, T(1), x->value.data(), in, w->value.data(), in,
                T(0), out.data(), out_dim);
  if (bias) {
    for (int n = 0; n < batch; ++n)
      for (int o = 0; o < out_dim; ++o) out[static_cast<std::size_t>(n) * out_dim + o] += bias->value[o];
  }
  return make_result<T>(std::move(out), {x, w, bias}, [=](Node<T>& self) {
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    auto& bin = self.inputs[2];
    if (wants(xin)) {
      kernels::gemm(false, false, batch, in, out_dim, T(1), self.grad.data(), out_dim,
                    win->value.data(), in, T(1), xin->grad_buffer().data(), in);
    }
    if (wants(win)) {
      kernels::gemm(true, false, out_dim, in, batch, T(1), self.grad.data(), out_dim,
                    xin->value.data(), in, T(1), win->grad_buffer().data(), in);
    }
    if (wants(bin)) {
      auto& gb = bin->grad_buffer();
      for (int n = 0; n < batch; ++n)
        for (int o = 0; o < out_dim; ++o) gb[o] += self.grad[static_cast<std::size_t>(n) * out_dim + o];
    }
  });
}

// --- attention products ---------------------------------------------------------

template <typename T>
Var<T> attention_weights(const Var<T>& q, const Var<T>& k) {
  require_rank(q->value.shape(), 3, "attention_weights query");
  require_rank(k->value.shape(), 3, "attention_weights key");
  const int batch = q->value.dim(0), d = q->value.dim(1), n = q->value.dim(2);
  const int m = k->value.dim(2);
  if (k->value.dim(0) != batch || k->value.dim(1) != d) {
    throw ShapeError("attention_weights: query " + shape_string(q->value.shape()) + " vs key " +
                     shape_string(k->value.shape()));
  }
  Tensor<T> a(Shape{batch, n, m});
  for (int b = 0; b < batch; ++b) {
    const T* qb = q->value.data() + static_cast<std::size_t>(b) * d * n;
    const T* kb = k->value.data() + static_cast<std::size_t>(b) * d * m;
    T* ab = a.data() + static_cast<std::size_t>(b) * n * m;
    kernels::gemm(true, false, n, m, d, T(1), qb, n, kb, m, T(0), ab, m);
    kernels::softmax_rows(ab, n, m);
  }
  return make_result<T>(std::move(a), {q, k}, [=](Node<T>& self) {
    auto& qin = self.inputs[0];
    auto& kin = self.inputs[1];
    std::vector<T> de(static_cast<std::size_t>(n) * m);
    for (int b = 0; b < batch; ++b) {
      const T* ab = self.value.data() + static_cast<std::size_t>(b) * n * m;
      const T* gb = self.grad.data() + static_cast<std::size_t>(b) * n * m;
      for (int i = 0; i < n; ++i) {
        const T* arow = ab + static_cast<std::size_t>(i) * m;
        const T* grow = gb + static_cast<std::size_t>(i) * m;
        double dot = 0.0;
        for (int j = 0; j < m; ++j) dot += static_cast<double>(arow[j]) * grow[j];
        T* drow = de.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) drow[j] = arow[j] * static_cast<T>(grow[j] - dot);
      }
      if (wants(qin)) {
        const T* kb = kin->value.data() + static_cast<std::size_t>(b) * d * m;
        T* dq = qin->grad_buffer().data() + static_cast<std::size_t>(b) * d * n;
        kernels::gemm(false, true, d, n, m, T(1), kb, m, de.data(), m, T(1), dq, n);
      }
      if (wants(kin)) {
        const T* qb = qin->value.data() + static_cast<std::size_t>(b) * d * n;
        T* dk = kin->grad_buffer().data() + static_cast<std::size_t>(b) * d * m;
        kernels::gemm(false, false, d, m, n, T(1), qb, n, de.data(), m, T(1), dk, m);
      }
    }
  });
}

template <typename T>
Var<T> attend(const Var<T>& v, const Var<T>& a) {
  require_rank(v->value.shape(), 3, "attend values");
  require_rank(a->value.shape(), 3, "attend weights");
  const int batch = v->value.dim(0), c = v->value.dim(1), m = v->value.dim(2);
  const int n = a->value.dim(1);
  if (a->value.dim(0) != batch || a->value.dim(2) != m) {
    throw ShapeError("attend: values " + shape_string(v->value.shape()) + " vs weights " +
                     shape_string(a->value.shape()));
  }
  Tensor<T> o(Shape{batch, c, n});
  for (int b = 0; b < batch; ++b) {
    kernels::gemm(false, true, c, n, m, T(1), v->value.data() + static_cast<std::size_t>(b) * c * m,
                  m, a->value.data() + static_cast<std::size_t>(b) * n * m, m, T(0),
                  o.data() + static_cast<std::size_t>(b) * c * n, n);
  }
  return make_result<T>(std::move(o), {v, a}, [=](Node<T>& self) {
    auto& vin = self.inputs[0];
    auto& ain = self.inputs[1];
    for (int b = 0; b < batch; ++b) {
      const T* gb = self.grad.data() + static_cast<std::size_t>(b) * c * n;
      if (wants(vin)) {
        kernels::gemm(false, false, c, m, n, T(1), gb, n,
                      ain->value.data() + static_cast<std::size_t>(b) * n * m, m, T(1),
                      vin->grad_buffer().data() + static_cast<std::size_t>(b) * c * m, m);
      }
      if (wants(ain)) {
        kernels::gemm(true, false, n, m, c, T(1), gb, n,
                      vin->value.data() + static_cast<std::size_t>(b) * c * m, m, T(1),
                      ain->grad_buffer().data() + static_cast<std::size_t>(b) * n * m, m);
      }
    }
  });
}

template <typename T>
Tensor<T> attention_rows_blocked(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                 int block_rows) {
  require_rank(q.shape(), 3, "attention query");
  require_rank(k.shape(), 3, "attention key");
  require_rank(v.shape(), 3, "attention value");
  const int batch = q.dim(0), d = q.dim(1), n = q.dim(2), m = k.dim(2), c = v.dim(1);
  if (k.dim(0) != batch || k.dim(1) != d || v.dim(0) != batch || v.dim(2) != m) {
    throw ShapeError("attention: inconsistent query/key/value shapes");
  }
  block_rows = std::max(1, block_rows);
  Tensor<T> o(Shape{batch, c, n});
  std::vector<T> block(static_cast<std::size_t>(block_rows) * m);
  for (int b = 0; b < batch; ++b) {
    const T* qb = q.data() + static_cast<std::size_t>(b) * d * n;
    const T* kb = k.data() + static_cast<std::size_t>(b) * d * m;
    const T* vb = v.data() + static_cast<std::size_t>(b) * c * m;
    T* ob = o.data() + static_cast<std::size_t>(b) * c * n;
    for (int r0 = 0; r0 < n; r0 += block_rows) {
      const int rows = std::min(block_rows, n - r0);
      kernels::gemm(true, false, rows, m, d, T(1), qb + r0, n, kb, m, T(0), block.data(), m);
      kernels::softmax_rows(block.data(), rows, m);
      kernels::gemm(false, true, c, rows, m, T(1), vb, m, block.data(), m, T(0), ob + r0, n);
    }
  }
  return o;
}

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  require_feature_map(x->value, "softmax_channels input");
  const int batch = x->value.dim(0), channels = x->value.dim(1);
  const int plane = x->value.dim(2) * x->value.dim(3);
  Tensor<T> y(x->value.shape());
  for (int b = 0; b < batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * channels * plane;
    for (int p = 0; p < plane; ++p) {
      T mx = x->value[base + p];
      for (int c = 1; c < channels; ++c) mx = std::max(mx, x->value[base + static_cast<std::size_t>(c) * plane + p]);
      double s = 0.0;
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
        y[i] = static_cast<T>(std::exp(static_cast<double>(x->value[i] - mx)));
        s += y[i];
      }
      const double inv = 1.0 / s;
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
        y[i] = static_cast<T>(y[i] * inv);
      }
    }
  }
  return make_result<T>(std::move(y), {x}, [=](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int b = 0; b < batch; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * channels * plane;
      for (int p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int c = 0; c < channels; ++c) {
          const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
          dot += static_cast<double>(self.value[i]) * self.grad[i];
        }
        for (int c = 0; c < channels; ++c) {
          const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
          g[i] += self.value[i] * static_cast<T>(self.grad[i] - dot);
        }
      }
    }
  });
}

#define POLARFACE_INSTANTIATE_OPS(T)                                                          \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale<T>(const Var<T>&, T);                                                \
  template Var<T> scale_by<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sum<T>(const Var<T>&);                                                     \
  template Var<T> mean<T>(const Var<T>&);                                                    \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> mean_neg_log<T>(const Var<T>&, T);                                         \
  template Var<T> mean_neg_log1m<T>(const Var<T>&, T);                                       \
  template Var<T> mean_log1m<T>(const Var<T>&, T);                                           \
  template Var<T> relu<T>(const Var<T>&);                                                    \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                           \
  template Var<T> tanh<T>(const Var<T>&);                                                    \
  template Var<T> sigmoid<T>(const Var<T>&);                                                 \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                          \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);          \
  template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int); \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                BatchNormStats<T>&, bool, T, T);                             \
  template Var<T> avg_pool2d<T>(const Var<T>&, int);                                         \
  template Var<T> adaptive_avg_pool2d<T>(const Var<T>&, int, int);                           \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                    \
  template Var<T> attention_weights<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> attend<T>(const Var<T>&, const Var<T>&);                                   \
  template Tensor<T> attention_rows_blocked<T>(const Tensor<T>&, const Tensor<T>&,           \
                                               const Tensor<T>&, int);                       \
  template Var<T> softmax_channels<T>(const Var<T>&);

POLARFACE_INSTANTIATE_OPS(float)
POLARFACE_INSTANTIATE_OPS(double)

#undef POLARFACE_INSTANTIATE_OPS

}  // namespace polarface
