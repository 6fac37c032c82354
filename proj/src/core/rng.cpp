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

#include "polarface/core/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "polarface/core/error.hpp"

namespace polarface {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  std::uint64_t spare_bits;
  std::memcpy(&spare_bits, &spare_, sizeof spare_bits);
  os << (has_spare_ ? 1 : 0) << ' ' << spare_bits << ' ' << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  Rng rng;
  int has_spare = 0;
  std::uint64_t spare_bits = 0;
  is >> has_spare >> spare_bits >> rng.engine_;
  if (!is) throw ConfigError("malformed random-stream state");
  rng.has_spare_ = has_spare != 0;
  std::memcpy(&rng.spare_, &spare_bits, sizeof spare_bits);
  return rng;
}

}  // namespace polarface
