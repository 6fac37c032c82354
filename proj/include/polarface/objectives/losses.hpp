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

#include <array>
#include <functional>
#include <string>

#include "polarface/autograd/ops.hpp"

namespace polarface {

/// Probabilities are clamped to [kLogEps, 1 - kLogEps] before logarithms.
inline constexpr double kLogEps = 1e-7;

/// kNonSaturating: L_G = mean(-log D(G(x))). kSaturating: L_G = mean(log(1 - D(G(x)))),
/// the literal minimax form (its value is negative).
enum class GanForm { kNonSaturating, kSaturating };

const char* to_string(GanForm form) noexcept;
GanForm parse_gan_form(const std::string& name);

struct LossWeights {
  double lambda_l1 = 10.0;
  double lambda_perceptual = 2.0;
  double lambda_identity = 0.2;
  /// false drops every term that reads the visible/thermal pairing.
  bool supervised = true;

  void validate() const;  // ConfigError on a negative weight
};

struct LossRecord {
  double gan_v = 0, gan_t = 0, cycle = 0;
  double l1_v = 0, l1_t = 0;
  double perc_v = 0, perc_t = 0;
  double id_v = 0, id_t = 0;
  double total_G = 0, total_D_v = 0, total_D_t = 0;

  static constexpr std::size_t kFields = 12;
  static const std::array<const char*, kFields>& field_names();
  std::array<double, kFields> values() const;
};

/// gan_v + gan_t + cycle + lambda_1 (l1_v + l1_t) + lambda_P (perc_v + perc_t)
/// + lambda_I (id_v + id_t); the paired terms vanish when unsupervised.
double total_objective(const LossRecord& parts, const LossWeights& weights);

template <typename T>
struct AdversarialLosses {
  Var<T> discriminator;  // mean(-log D(real)) + mean(-log(1 - D(fake)))
  Var<T> generator;
};

/// Patch maps must lie in [0, 1]; anything else raises DomainError.
template <typename T>
Var<T> discriminator_loss(const Var<T>& d_real, const Var<T>& d_fake, T eps = T(kLogEps));
template <typename T>
Var<T> generator_adversarial_loss(const Var<T>& d_fake, GanForm form = GanForm::kNonSaturating,
                                  T eps = T(kLogEps));
template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& d_real, const Var<T>& d_fake,
                                        GanForm form = GanForm::kNonSaturating,
                                        T eps = T(kLogEps));

/// Mean absolute difference; ShapeError when shapes differ.
template <typename T>
Var<T> l1_loss(const Var<T>& x_hat, const Var<T>& x);

template <typename T>
using ImageMap = std::function<Var<T>(const Var<T>&)>;

/// mean|G_vt(G_tv(x_t)) - x_t| + mean|G_tv(G_vt(x_v)) - x_v|.
template <typename T>
Var<T> cycle_loss(const Var<T>& x_t, const Var<T>& x_v, const ImageMap<T>& g_tv,
                  const ImageMap<T>& g_vt);

}  // namespace polarface
