/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace hafr::stats {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) {
    return 0.0;
  }
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) {
    return 0.0;
  }
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) {
    ss += (x - m) * (x - m);
  }
  return ss / static_cast<double>(xs.size() - 1);
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) {
    return 0.0;
  }
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Upper tail P(X >= statistic) of a chi-square with `dof` degrees of freedom.
inline double chi_square_upper_tail(double statistic, double dof) {
  if (statistic <= 0.0) {
    return 1.0;
  }
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

// Pearson goodness-of-fit, dof = bins - 1. Bins with zero expected
// probability and zero observations are ignored.
inline TestResult chi_square_gof(std::span<const std::uint64_t> observed,
                                 std::span<const double> expected_probs) {
  if (observed.size() != expected_probs.size()) {
    throw std::invalid_argument("chi_square_gof: size mismatch");
  }
  const double total = static_cast<double>(
      std::accumulate(observed.begin(), observed.end(), std::uint64_t{0}));
  if (total < 1.0) {
    throw std::invalid_argument("chi_square_gof: no observations");
  }
  const double prob_sum =
      std::accumulate(expected_probs.begin(), expected_probs.end(), 0.0);
  if (std::abs(prob_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("chi_square_gof: probabilities sum to " +
                                std::to_string(prob_sum));
  }
  double stat = 0.0;
  std::size_t bins = 0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    if (expected_probs[j] <= 0.0) {
      if (observed[j] != 0) {
        throw std::invalid_argument(
            "chi_square_gof: observation in zero-probability bin " +
            std::to_string(j));
      }
      continue;
    }
    const double e = total * expected_probs[j];
    const double d = static_cast<double>(observed[j]) - e;
    stat += d * d / e;
    ++bins;
  }
  if (bins < 2) {
    return {stat, 1.0};
  }
  return {stat, chi_square_upper_tail(stat, static_cast<double>(bins - 1))};
}

// Two-sided p-value of Student's t: I_{dof/(dof+t^2)}(dof/2, 1/2).
inline double t_tail(double t, double dof) {
  if (!(dof > 0.0)) {
    throw std::invalid_argument("t_tail: dof must be positive");
  }
  if (std::isinf(t)) {
    return 0.0;
  }
  if (t == 0.0) {
    return 1.0;
  }
  const double x = dof / (dof + t * t);
  return std::clamp(boost::math::ibeta(dof / 2.0, 0.5, x), 0.0, 1.0);
}

// Welch's unequal-variance t-test. When both samples have zero variance the
// pooled standard error is floored at kVarianceFloor so that distinct
// constant samples give a vanishing p rather than a division by zero.
inline TestResult welch_t_test(std::span<const double> a,
                               std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_t_test: need at least 2 values each");
  }
  constexpr double kVarianceFloor = 1e-24;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  const double diff = mean(a) - mean(b);
  if (va + vb <= kVarianceFloor) {
    if (diff == 0.0) {
      return {0.0, 1.0};
    }
    const double t = diff / std::sqrt(kVarianceFloor);
    return {t, t_tail(t, na + nb - 2.0)};
  }
  const double se2 = va + vb;
  const double t = diff / std::sqrt(se2);
  // Welch-Satterthwaite degrees of freedom.
  double dof = se2 * se2;
  double denom = 0.0;
  if (va > 0.0) {
    denom += va * va / (na - 1.0);
  }
  if (vb > 0.0) {
    denom += vb * vb / (nb - 1.0);
  }
  dof /= denom;
  return {t, t_tail(t, dof)};
}

// One-sided exact sign test of H1: a > b, over paired observations. Ties
// are dropped. Returns the number of wins as the statistic.
inline TestResult sign_test_greater(std::span<const double> a,
                                    std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("sign_test_greater: size mismatch");
  }
  int wins = 0;
  int n = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] == b[j]) {
      continue;
    }
    ++n;
    if (a[j] > b[j]) {
      ++wins;
    }
  }
  if (n == 0) {
    return {0.0, 1.0};
  }
  double p = 0.0;
  for (int j = wins; j <= n; ++j) {
    p += boost::math::binomial_coefficient<double>(
             static_cast<unsigned>(n), static_cast<unsigned>(j)) *
         std::pow(0.5, n);
  }
  return {static_cast<double>(wins), std::min(1.0, p)};
}

}  // namespace hafr::stats
