#pragma once

// Central finite-difference gradient checking.
//
// relative error = |analytic - numeric| / max(|analytic|, |numeric|, kFloor)
// The floor keeps components that are zero on both sides (dead ReLUs,
// unused embedding rows) from dividing by ~0; with a step of 1e-5 the
// absolute error of the central difference is ~1e-10, well under
// 1e-4 * kFloor.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hybridsa/layers.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/tensor.hpp"

namespace hybridsa::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

/// A tensor whose entries are perturbed and the gradient it is compared with.
struct GradTarget {
  std::string name;
  Matrix* value;
  const Matrix* grad;
};

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// `loss` evaluates the scalar objective at the current values. `analytic`
/// must recompute every target's gradient (zeroing first) at the current
/// values. At most `max_per_target` entries per target are probed, spread
/// evenly; 0 probes all.
inline GradReport check_gradients(const std::vector<GradTarget>& targets, const std::function<double()>& loss,
                                  const std::function<void()>& analytic, std::size_t max_per_target = 0) {
  analytic();
  std::vector<Matrix> expected;
  for (const auto& t : targets) expected.push_back(*t.grad);
  GradReport report;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Matrix& v = *targets[ti].value;
    const std::size_t n = v.size();
    const std::size_t stride = max_per_target == 0 || n <= max_per_target ? 1 : n / max_per_target;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = v[i];
      v[i] = saved + kFdStep;
      const double plus = loss();
      v[i] = saved - kFdStep;
      const double minus = loss();
      v[i] = saved;
      const double numeric = (plus - minus) / (2.0 * kFdStep);
      const double err = relative_error(expected[ti][i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = targets[ti].name + "[" + std::to_string(i) + "] analytic=" + std::to_string(expected[ti][i]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

/// sum(r .* y): a loss whose gradient with respect to y is r.
inline double weighted_sum(const Matrix& y, const Matrix& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

}  // namespace hybridsa::testing
