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

#include "polarface/objectives/losses.hpp"

#include "polarface/core/error.hpp"

namespace polarface {

const char* to_string(GanForm form) noexcept {
  return form == GanForm::kSaturating ? "saturating" : "non-saturating";
}

GanForm parse_gan_form(const std::string& name) {
  if (name == "non-saturating") return GanForm::kNonSaturating;
  if (name == "saturating") return GanForm::kSaturating;
  throw ConfigError("unknown gan form '" + name + "' (expected non-saturating or saturating)");
}

void LossWeights::validate() const {
  if (!(lambda_l1 >= 0 && lambda_perceptual >= 0 && lambda_identity >= 0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

const std::array<const char*, LossRecord::kFields>& LossRecord::field_names() {
  static const std::array<const char*, kFields> names = {
      "gan_v", "gan_t", "cycle", "l1_v", "l1_t", "perc_v",
      "perc_t", "id_v", "id_t", "total_G", "total_D_v", "total_D_t"};
  return names;
}

std::array<double, LossRecord::kFields> LossRecord::values() const {
  return {gan_v, gan_t, cycle, l1_v, l1_t, perc_v, perc_t, id_v, id_t, total_G, total_D_v, total_D_t};
}

double total_objective(const LossRecord& p, const LossWeights& w) {
  double total = p.gan_v + p.gan_t + p.cycle;
  if (w.supervised) {
    total += w.lambda_l1 * (p.l1_v + p.l1_t) + w.lambda_perceptual * (p.perc_v + p.perc_t) +
             w.lambda_identity * (p.id_v + p.id_t);
  }
  return total;
}

template <typename T>
Var<T> discriminator_loss(const Var<T>& d_real, const Var<T>& d_fake, T eps) {
  return add(mean_neg_log(d_real, eps), mean_neg_log1m(d_fake, eps));
}

template <typename T>
Var<T> generator_adversarial_loss(const Var<T>& d_fake, GanForm form, T eps) {
  return form == GanForm::kSaturating ? mean_log1m(d_fake, eps) : mean_neg_log(d_fake, eps);
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& d_real, const Var<T>& d_fake, GanForm form,
                                        T eps) {
  return {discriminator_loss(d_real, d_fake, eps), generator_adversarial_loss(d_fake, form, eps)};
}

template <typename T>
Var<T> l1_loss(const Var<T>& x_hat, const Var<T>& x) {
  return mean_abs_diff(x_hat, x);
}

template <typename T>
Var<T> cycle_loss(const Var<T>& x_t, const Var<T>& x_v, const ImageMap<T>& g_tv,
                  const ImageMap<T>& g_vt) {
  return add(l1_loss(g_vt(g_tv(x_t)), x_t), l1_loss(g_tv(g_vt(x_v)), x_v));
}

#define POLARFACE_INSTANTIATE_LOSSES(T)                                                        \
  template Var<T> discriminator_loss(const Var<T>&, const Var<T>&, T);                         \
  template Var<T> generator_adversarial_loss(const Var<T>&, GanForm, T);                       \
  template AdversarialLosses<T> adversarial_losses(const Var<T>&, const Var<T>&, GanForm, T);  \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                       \
  template Var<T> cycle_loss(const Var<T>&, const Var<T>&, const ImageMap<T>&, const ImageMap<T>&);

POLARFACE_INSTANTIATE_LOSSES(float)
POLARFACE_INSTANTIATE_LOSSES(double)

}  // namespace polarface
