/*
 * Copyright 2026 The seqdefer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Test-side references. Nothing here calls into the library's own
// summation or selection helpers.

#ifndef SEQDEFER_TESTS_ORACLES_HPP_
#define SEQDEFER_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "seqdefer/core.hpp"

namespace oracle {

// Static trace over the full grid from per-step losses. c~_j is the
// expert loss from j on plus alpha_j; system loss drops the price.
inline seqdefer::Trace HandTrace(const std::vector<double>& model,
                                 const std::vector<double>& expert,
                                 double alpha1) {
  using seqdefer::Trace;
  const int L = static_cast<int>(model.size());
  Trace t;
  t.instance_id = "hand";
  t.x_summary = {0.0};
  for (int j = 1; j <= L; ++j) {
    seqdefer::StepRecord s;
    s.j = j;
    s.model_pred = std::int64_t{0};
    s.expert_pred = std::int64_t{1};
    s.model_loss = model[j - 1];
    s.expert_loss = expert[j - 1];
    s.expert_cost = expert[j - 1] + alpha1 / L;
    s.conf_score = model[j - 1];
    s.features = {model[j - 1], expert[j - 1]};
    t.steps.push_back(s);
    t.target.push_back(std::int64_t{0});
  }
  for (int j = 1; j <= L + 1; ++j) {
    double prefix = 0.0;
    for (int k = 1; k < j; ++k) prefix += model[k - 1];
    double suffix = 0.0;
    for (int k = j; k <= L; ++k) suffix += expert[k - 1];
    const double alpha = alpha1 * (L - j + 1) / L;
    t.candidates.push_back(j);
    t.prefix_losses.push_back(prefix);
    t.onetime_costs.push_back(suffix + alpha);
    t.onetime_alpha.push_back(alpha);
    t.system_losses.push_back(prefix + suffix);
  }
  t.expert_full_loss = t.system_losses.front();
  t.model_full_loss = t.system_losses.back();
  return t;
}

inline double Median(std::vector<double> v) {
  // Selection by counting, quadratic but independent of sorting.
  auto kth = [&](std::size_t k) {
    for (double x : v) {
      std::size_t below = 0, equal = 0;
      for (double y : v) {
        below += y < x;
        equal += y == x;
      }
      if (below <= k && k < below + equal) return x;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const std::size_t n = v.size();
  return n % 2 ? kth(n / 2) : 0.5 * (kth(n / 2 - 1) + kth(n / 2));
}

inline double Trapezoid(const std::vector<double>& x,
                        const std::vector<double>& y) {
  long double area = 0.0L;
  for (std::size_t i = 1; i < x.size(); ++i) {
    area += 0.5L * (x[i] - x[i - 1]) * (static_cast<long double>(y[i]) + y[i - 1]);
  }
  return static_cast<double>(area);
}

inline seqdefer::ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const seqdefer::Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return seqdefer::ErrorKind::kIo;
}

inline std::string MessageOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const seqdefer::Error& e) {
    return e.what();
  }
  FAIL("no error raised");
  return {};
}

}  // namespace oracle

#endif  // SEQDEFER_TESTS_ORACLES_HPP_
