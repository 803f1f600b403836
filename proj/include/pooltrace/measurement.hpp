// Copyright 2026 The pooltrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pooled measurement channels.
//
//   binary (M1):          y_i in {0,1}; Pr(y=1 | w=0) = p_fp, Pr(y=0 | w>0) = p_fn
//   multiplicative (M2):  y_i = w_i * (1+q)^eta_i,  eta_i ~ N(0, sigma2)
//
// with w = A x. Exactly one random draw is consumed per pool regardless of
// w, so streams stay aligned across inputs.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pooltrace/common.hpp"
#include "pooltrace/pool_design.hpp"

namespace pooltrace {

enum class NoiseModel { m1, m2 };

inline const char* to_string(NoiseModel m) { return m == NoiseModel::m1 ? "m1" : "m2"; }

struct M1Params {
  double p_fp = 0.001;
  double p_fn = 0.02;

  void validate() const {
    if (!(p_fp >= 0 && p_fp <= 1 && p_fn >= 0 && p_fn <= 1)) throw ConfigError("M1 error probabilities must lie in [0,1]");
  }
};

struct M2Params {
  double q = 0.95;
  double sigma2 = 0.01;

  void validate() const {
    if (!(q > 0 && q <= 1)) throw ConfigError("M2 amplification factor q must lie in (0,1]");
    if (!(sigma2 >= 0)) throw ConfigError("M2 noise variance must be >= 0");
  }
};

template <typename T>
std::vector<double> noiseless_pool(const PoolingMatrix& a, std::span<const T> x) {
  for (const auto& v : x)
    if (static_cast<double>(v) < 0) throw DomainError("noiseless_pool: x must be nonnegative");
  return a.multiply(x);
}

inline std::vector<std::uint8_t> measure_m1(const PoolingMatrix& a, std::span<const std::uint8_t> x, const M1Params& p,
                                            Rng& rng) {
  p.validate();
  for (auto v : x)
    if (v > 1) throw DomainError("measure_m1: x must be binary");
  const auto w = a.multiply(x);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint8_t> y(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double u = unit(rng);
    if (w[i] > 0) y[i] = u < p.p_fn ? 0 : 1;
    else y[i] = u < p.p_fp ? 1 : 0;
  }
  return y;
}

inline std::vector<double> measure_m2(const PoolingMatrix& a, std::span<const double> x, const M2Params& p, Rng& rng) {
  p.validate();
  for (double v : x)
    if (v < 0) throw DomainError("measure_m2: viral loads must be nonnegative");
  const auto w = a.multiply(x);
  std::normal_distribution<double> eta(0.0, 1.0);
  const double sd = std::sqrt(p.sigma2);
  const double log_base = std::log1p(p.q);
  std::vector<double> y(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double z = eta(rng) * sd;
    y[i] = w[i] > 0 ? w[i] * std::exp(z * log_base) : 0.0;
  }
  return y;
}

}  // namespace pooltrace
