#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "resd/errors.hpp"
#include "resd/window_stats.hpp"

// Seasonal-period estimation: remove a least-squares line, take the
// periodogram, and pick the dominant frequency bin if it clearly stands out
// from the rest of the candidate band.

namespace resd {

// Returns x minus its ordinary-least-squares line over t = 0..N-1.
template <typename Derived>
ArrayX<typename Derived::Scalar> detrend_line(
    const Eigen::ArrayBase<Derived>& x_expr) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> x(x_expr.derived());
  const Eigen::Index n = x.size();
  if (n < 2) throw input_error("detrend_line: need at least 2 points");
  const ArrayX<Scalar> t = ArrayX<Scalar>::LinSpaced(n, 0, Scalar(n - 1));
  const Scalar t_mean = t.mean();
  const Scalar x_mean = x.mean();
  const Scalar denom = (t - t_mean).square().sum();
  const Scalar slope = denom > 0 ? Scalar(((t - t_mean) * (x - x_mean)).sum() / denom)
                                 : Scalar(0);
  return x - (x_mean + slope * (t - t_mean));
}

// Periodogram power at frequency bins 1..N/2 (bin j = j cycles per N samples).
template <typename Derived>
ArrayX<typename Derived::Scalar> periodogram(
    const Eigen::ArrayBase<Derived>& x_expr) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = x_expr.derived().matrix();
  const Eigen::Index n = x.size();
  if (n < 4) throw input_error("periodogram: need at least 4 points");
  Eigen::FFT<Scalar> fft;
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> spec;
  fft.fwd(spec, x);
  const Eigen::Index half = n / 2;
  ArrayX<Scalar> power(half);
  for (Eigen::Index j = 1; j <= half; ++j)
    power[j - 1] = std::norm(spec[j]) / Scalar(n);
  return power;
}

// Dominant period of x in [2, max_period], or nullopt when no periodogram
// peak dominates (peak < 3x the median band power) or the series is flat.
template <typename Derived>
std::optional<Eigen::Index> estimate_period(
    const Eigen::ArrayBase<Derived>& x_expr, Eigen::Index max_period) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> x(x_expr.derived());
  const Eigen::Index n = x.size();
  if (max_period < 2) throw config_error("estimate_period: max_period must be >= 2");
  if (n < 2 * max_period)
    throw input_error("estimate_period: series must be at least twice max_period");
  if (!x.allFinite())
    throw input_error("estimate_period: series contains non-finite values");

  const ArrayX<Scalar> y = detrend_line(x);
  const Scalar scale = std::max(Scalar(1), x.abs().maxCoeff());
  if (y.square().sum() <= Scalar(n) * (Scalar(1e-12) * scale) * (Scalar(1e-12) * scale))
    return std::nullopt;

  const ArrayX<Scalar> power = periodogram(y);
  // Bin j (1-based) corresponds to period N/j; restrict to [2, max_period].
  const Eigen::Index j_lo = (n + max_period - 1) / max_period;
  const Eigen::Index j_hi = n / 2;
  if (j_lo > j_hi) return std::nullopt;

  Eigen::Index best_j = j_lo;
  for (Eigen::Index j = j_lo; j <= j_hi; ++j)
    if (power[j - 1] > power[best_j - 1]) best_j = j;

  std::vector<Scalar> band(power.data() + (j_lo - 1), power.data() + j_hi);
  const auto mid = band.begin() + band.size() / 2;
  std::nth_element(band.begin(), mid, band.end());
  Scalar median = *mid;
  if (band.size() % 2 == 0) {
    const auto lower = std::max_element(band.begin(), mid);
    median = (median + *lower) / 2;
  }

  const Scalar peak = power[best_j - 1];
  if (!(peak > 0) || peak < 3 * median) return std::nullopt;

  const auto period = static_cast<Eigen::Index>(
      std::llround(double(n) / double(best_j)));
  if (period < 2 || period > max_period) return std::nullopt;
  return period;
}

}  // namespace resd
