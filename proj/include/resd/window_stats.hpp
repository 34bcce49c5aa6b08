#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "resd/errors.hpp"

// Rolling-window mean and centered sum of squares with O(1) slide updates.
// init_stats is the O(w) two-pass bootstrap; slide advances the window by one
// observation without touching the other w-1 values.

namespace resd {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct WindowStats {
  Eigen::Index width = 0;
  Scalar mean = 0;
  Scalar sum_sq = 0;  // centered: sum of (x_i - mean)^2, kept >= 0

  Scalar variance() const {
    return width > 1 ? sum_sq / Scalar(width - 1) : Scalar(0);
  }
  Scalar stddev() const { return std::sqrt(variance()); }
};

using WindowStatsd = WindowStats<double>;

template <typename Derived>
WindowStats<typename Derived::Scalar> init_stats(
    const Eigen::ArrayBase<Derived>& window_expr) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> window(window_expr.derived());
  if (window.size() < 2)
    throw config_error("init_stats: window must hold at least 2 values");
  if (!window.allFinite())
    throw input_error("init_stats: window contains non-finite values");
  WindowStats<Scalar> s;
  s.width = window.size();
  s.mean = window.mean();
  s.sum_sq = (window - s.mean).square().sum();
  return s;
}

template <typename Scalar>
WindowStats<Scalar> slide(const WindowStats<Scalar>& stats, Scalar x_out,
                          Scalar x_in) {
  if (stats.width < 2) throw config_error("slide: stats not initialized");
  if (!(std::isfinite(x_out) && std::isfinite(x_in)))
    throw input_error("slide: non-finite value");
  if (x_in == x_out) return stats;  // exact identity, sign-of-zero included
  WindowStats<Scalar> s = stats;
  const Scalar w = Scalar(stats.width);
  const Scalar d = x_in - x_out;
  s.sum_sq += d * (x_in + x_out - 2 * stats.mean - d / w);
  s.mean += d / w;
  if (s.sum_sq < 0) s.sum_sq = 0;
  return s;
}

}  // namespace resd
