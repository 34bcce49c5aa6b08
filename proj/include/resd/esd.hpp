#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "resd/errors.hpp"
#include "resd/student_t.hpp"
#include "resd/window_stats.hpp"

// Generalized extreme studentised deviate test over a window of residuals.
// Each iteration finds the largest |x - mean| deviate, studentises it against
// the current sample standard deviation, compares with the order-dependent
// critical value, and removes the deviate from the running moments in O(1).

namespace resd {

enum class EsdMode {
  sequential,  // stop at the first non-rejection, flag only while rejecting
  rosner,  // run all k iterations, flag up to the last rejecting one
};

struct EsdConfig {
  double alpha = 0.05;
  Eigen::Index k_max = 1;
  EsdMode mode = EsdMode::sequential;
};

template <typename Scalar = double>
struct EsdFlag {
  Eigen::Index index = 0;  // position within the window, oldest = 0
  Scalar value = 0;
  Scalar stat = 0;  // studentised deviate R
  Scalar crit = 0;  // critical value the deviate was tested against
};

template <typename Scalar = double>
struct EsdOutcome {
  std::vector<EsdFlag<Scalar>> flagged;
  Eigen::Index tested_count = 0;
  bool zero_variance = false;
};

using EsdFlagd = EsdFlag<double>;
using EsdOutcomed = EsdOutcome<double>;

// Critical value gamma_{l+1} for testing the (l+1)-th most extreme deviate in
// a window of n values at significance alpha.
template <typename Real = double>
Real critical_value(Eigen::Index n, Eigen::Index l, Real alpha) {
  if (!(alpha > 0 && alpha < 1))
    throw config_error("critical_value: alpha must lie in (0, 1)");
  if (l < 0 || n - l - 2 < 1)
    throw config_error(
        "critical_value: window too small for this order index (need n - l - 2 >= 1)");
  const Real nl = Real(n - l);
  const Real dof = Real(n - l - 2);
  const Real p = 1 - alpha / (2 * nl);
  const Real t = student_t_quantile<Real>(p, dof);
  return t * (nl - 1) / std::sqrt((dof + t * t) * nl);
}

// Precomputed gamma_1..gamma_k for a fixed window length; the streaming
// detector evaluates the t quantile once per configuration, not per step.
template <typename Scalar = double>
struct CriticalValueTable {
  Eigen::Index n = 0;
  double alpha = 0;
  std::vector<Scalar> gamma;

  CriticalValueTable() = default;
  CriticalValueTable(Eigen::Index n_, double alpha_, Eigen::Index k_max)
      : n(n_), alpha(alpha_) {
    if (k_max < 1) throw config_error("CriticalValueTable: k_max must be >= 1");
    gamma.reserve(static_cast<std::size_t>(k_max));
    for (Eigen::Index l = 0; l < k_max; ++l)
      gamma.push_back(critical_value<Scalar>(n, l, Scalar(alpha)));
  }

  Scalar operator[](Eigen::Index l) const {
    return gamma[static_cast<std::size_t>(l)];
  }
};

namespace detail {

template <typename Scalar>
EsdOutcome<Scalar> run_esd_impl(const Eigen::Ref<const ArrayX<Scalar>>& window,
                                const WindowStats<Scalar>& stats,
                                const EsdConfig& cfg,
                                const CriticalValueTable<Scalar>* table) {
  const Eigen::Index n = window.size();
  if (cfg.k_max < 1) throw config_error("run_esd: k_max must be >= 1");
  if (!(cfg.alpha > 0 && cfg.alpha < 1))
    throw config_error("run_esd: alpha must lie in (0, 1)");
  if (n < cfg.k_max + 3)
    throw config_error("run_esd: window length must be at least k_max + 3");
  if (stats.width != n)
    throw config_error("run_esd: stats were computed over a different window length");
  if (table && (table->n != n || table->gamma.size() <
                                     static_cast<std::size_t>(cfg.k_max)))
    throw config_error("run_esd: critical-value table does not match window/k_max");

  // Near-zero spread means no deviate can be studentised; report an empty
  // outcome with the zero_variance flag set rather than an error.
  const Scalar variance_floor =
      std::max(Scalar(1e-300), std::numeric_limits<Scalar>::min());

  EsdOutcome<Scalar> out;
  std::vector<char> removed(static_cast<std::size_t>(n), 0);

  Scalar mean = stats.mean;
  Scalar ss = stats.sum_sq;
  Scalar m = Scalar(n);  // current reduced-sample size
  Eigen::Index last_reject = -1;

  for (Eigen::Index j = 1; j <= cfg.k_max; ++j) {
    if (!(ss >= variance_floor)) {
      out.zero_variance = true;
      break;
    }

    Eigen::Index arg = -1;
    Scalar best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (removed[static_cast<std::size_t>(i)]) continue;
      const Scalar v = window[i];
      if (j == 1 && !std::isfinite(v))
        throw input_error("run_esd: window contains non-finite residuals");
      const Scalar dev = std::fabs(v - mean);
      if (dev > best) {  // strict: ties resolve to the lowest index
        best = dev;
        arg = i;
      }
    }

    const Scalar d = window[arg] - mean;
    const Scalar sd = std::sqrt(ss / (m - 1));
    const Scalar stat = std::fabs(d) / sd;
    const Scalar crit = table ? (*table)[j - 1]
                              : critical_value<Scalar>(n, j - 1, Scalar(cfg.alpha));
    const bool reject = stat > crit;
    out.tested_count = j;

    if (cfg.mode == EsdMode::sequential && !reject) break;

    out.flagged.push_back({arg, window[arg], stat, crit});
    if (reject) last_reject = Eigen::Index(out.flagged.size());

    // Remove the deviate from the running moments. Deleting one point from a
    // sample of size m changes the centered sum of squares by d^2 * m/(m-1).
    removed[static_cast<std::size_t>(arg)] = 1;
    ss -= d * d * m / (m - 1);
    if (ss < 0) ss = 0;
    mean = (m * mean - window[arg]) / (m - 1);
    m -= 1;
  }

  if (cfg.mode == EsdMode::rosner) {
    out.flagged.resize(last_reject < 0 ? 0
                                       : static_cast<std::size_t>(last_reject));
  }
  return out;
}

}  // namespace detail

template <typename Derived>
EsdOutcome<typename Derived::Scalar> run_esd(
    const Eigen::ArrayBase<Derived>& window,
    const WindowStats<typename Derived::Scalar>& stats, const EsdConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> w(window.derived());
  return detail::run_esd_impl<Scalar>(w, stats, cfg, nullptr);
}

template <typename Derived>
EsdOutcome<typename Derived::Scalar> run_esd(
    const Eigen::ArrayBase<Derived>& window,
    const WindowStats<typename Derived::Scalar>& stats, const EsdConfig& cfg,
    const CriticalValueTable<typename Derived::Scalar>& table) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> w(window.derived());
  return detail::run_esd_impl<Scalar>(w, stats, cfg, &table);
}

template <typename Derived>
EsdOutcome<typename Derived::Scalar> grubbs_single(
    const Eigen::ArrayBase<Derived>& window,
    const WindowStats<typename Derived::Scalar>& stats, double alpha) {
  EsdConfig cfg;
  cfg.alpha = alpha;
  cfg.k_max = 1;
  return run_esd(window, stats, cfg);
}

}  // namespace resd
