#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "resd/errors.hpp"
#include "resd/window_stats.hpp"

// Additive seasonal-trend decomposition x_t = S_t + T_t + e_t and the
// seasonal-naive-plus-drift forecaster built on it. The default trend is a
// centered moving average; a LOESS smoother is available as an option.

namespace resd {

enum class TrendKind { moving_average, loess };

struct TrendOptions {
  TrendKind kind = TrendKind::moving_average;
  double loess_span = 0.3;  // fraction of the window in each local fit
};

template <typename Scalar = double>
struct DecompositionModel {
  Eigen::Index period = 0;   // 0 = trend-only model (no seasonal component)
  ArrayX<Scalar> seasonal;   // length period, centered to sum ~0
  ArrayX<Scalar> trend;      // per training index, endpoints extrapolated
  ArrayX<Scalar> residuals;  // x - trend - seasonal, exact by construction
  Scalar trend_level = 0;    // trend at the last training index
  Scalar trend_slope = 0;    // per-sample drift used by the forecaster
  Scalar sigma2_hat = 0;     // sample variance of the residuals
  Eigen::Index train_len = 0;
};

using DecompositionModeld = DecompositionModel<double>;

namespace detail {

// Least-squares line over trend[a..b]; returns {intercept at index 0, slope}.
template <typename Scalar>
std::pair<Scalar, Scalar> fit_line(const ArrayX<Scalar>& y, Eigen::Index a,
                                   Eigen::Index b) {
  const Eigen::Index m = b - a + 1;
  if (m < 2) return {y[a], Scalar(0)};
  const ArrayX<Scalar> t = ArrayX<Scalar>::LinSpaced(m, Scalar(a), Scalar(b));
  const Scalar t_mean = t.mean();
  const Scalar y_mean = y.segment(a, m).mean();
  const Scalar denom = (t - t_mean).square().sum();
  const Scalar slope =
      denom > 0 ? Scalar(((t - t_mean) * (y.segment(a, m) - y_mean)).sum() / denom)
                : Scalar(0);
  return {y_mean - slope * t_mean, slope};
}

template <typename Scalar>
ArrayX<Scalar> ma_trend(const Eigen::Ref<const ArrayX<Scalar>>& x,
                        Eigen::Index p) {
  const Eigen::Index n = x.size();
  const Eigen::Index half = p % 2 == 1 ? (p - 1) / 2 : p / 2;
  const Eigen::Index lo = half;
  const Eigen::Index hi = n - 1 - half;
  if (hi < lo) throw config_error("ma_trend: series too short for this window");

  ArrayX<Scalar> trend(n);
  if (p % 2 == 1) {
    for (Eigen::Index i = lo; i <= hi; ++i)
      trend[i] = x.segment(i - half, p).mean();
  } else {
    // 2 x p moving average: full weight on p-1 interior points, half weight
    // on the two points straddling the window.
    for (Eigen::Index i = lo; i <= hi; ++i)
      trend[i] = (x.segment(i - half + 1, p - 1).sum() +
                  Scalar(0.5) * (x[i - half] + x[i + half])) /
                 Scalar(p);
  }

  const Eigen::Index fit_len = std::min<Eigen::Index>(p, hi - lo + 1);
  const auto [head_c, head_s] = fit_line(trend, lo, lo + fit_len - 1);
  for (Eigen::Index i = 0; i < lo; ++i) trend[i] = head_c + head_s * Scalar(i);
  const auto [tail_c, tail_s] = fit_line(trend, hi - fit_len + 1, hi);
  for (Eigen::Index i = hi + 1; i < n; ++i) trend[i] = tail_c + tail_s * Scalar(i);
  return trend;
}

template <typename Scalar>
ArrayX<Scalar> loess_trend(const Eigen::Ref<const ArrayX<Scalar>>& x,
                           double span) {
  const Eigen::Index n = x.size();
  const Eigen::Index q = std::max<Eigen::Index>(
      2, static_cast<Eigen::Index>(std::ceil(span * double(n))));
  ArrayX<Scalar> trend(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index a = std::max<Eigen::Index>(0, i - (q - 1) / 2);
    Eigen::Index b = a + q - 1;
    if (b > n - 1) {
      b = n - 1;
      a = std::max<Eigen::Index>(0, b - q + 1);
    }
    const Scalar dmax =
        std::max<Scalar>(Scalar(std::max(i - a, b - i)), Scalar(1));
    Scalar sw = 0, swt = 0, swy = 0, swtt = 0, swty = 0;
    for (Eigen::Index t = a; t <= b; ++t) {
      const Scalar u = std::fabs(Scalar(t - i)) / dmax;
      const Scalar c = 1 - u * u * u;
      const Scalar wgt = c * c * c;
      sw += wgt;
      swt += wgt * Scalar(t);
      swy += wgt * x[t];
      swtt += wgt * Scalar(t) * Scalar(t);
      swty += wgt * Scalar(t) * x[t];
    }
    const Scalar denom = sw * swtt - swt * swt;
    if (std::fabs(denom) > Scalar(1e-30)) {
      const Scalar slope = (sw * swty - swt * swy) / denom;
      const Scalar intercept = (swy - slope * swt) / sw;
      trend[i] = intercept + slope * Scalar(i);
    } else {
      trend[i] = swy / sw;
    }
  }
  return trend;
}

template <typename Scalar>
DecompositionModel<Scalar> finish_model(const Eigen::Ref<const ArrayX<Scalar>>& x,
                                        ArrayX<Scalar>&& trend,
                                        Eigen::Index period,
                                        Eigen::Index slope_span) {
  const Eigen::Index n = x.size();
  DecompositionModel<Scalar> model;
  model.period = period;
  model.trend = std::move(trend);
  model.train_len = n;

  if (period > 0) {
    ArrayX<Scalar> seasonal = ArrayX<Scalar>::Zero(period);
    ArrayX<Scalar> counts = ArrayX<Scalar>::Zero(period);
    for (Eigen::Index i = 0; i < n; ++i) {
      seasonal[i % period] += x[i] - model.trend[i];
      counts[i % period] += 1;
    }
    seasonal /= counts;
    seasonal -= seasonal.mean();
    model.seasonal = std::move(seasonal);
    model.residuals.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      model.residuals[i] = x[i] - model.trend[i] - model.seasonal[i % period];
  } else {
    model.residuals = x - model.trend;
  }

  model.trend_level = model.trend[n - 1];
  const Eigen::Index m = std::min<Eigen::Index>(slope_span, n);
  model.trend_slope = fit_line(model.trend, n - m, n - 1).second;
  const Scalar res_mean = model.residuals.mean();
  model.sigma2_hat =
      (model.residuals - res_mean).square().sum() / Scalar(std::max<Eigen::Index>(n - 1, 1));
  return model;
}

}  // namespace detail

// Fit the additive model with a known seasonal period (>= 2).
template <typename Derived>
DecompositionModel<typename Derived::Scalar> decompose(
    const Eigen::ArrayBase<Derived>& x_expr, Eigen::Index period,
    const TrendOptions& opt = {}) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> x(x_expr.derived());
  const Eigen::Index n = x.size();
  if (period < 2) throw config_error("decompose: period must be >= 2");
  if (n < 2 * period)
    throw config_error("decompose: training window must be at least twice the period");
  if (!x.allFinite()) throw input_error("decompose: non-finite values");

  ArrayX<Scalar> trend = opt.kind == TrendKind::loess
                             ? detail::loess_trend<Scalar>(x, opt.loess_span)
                             : detail::ma_trend<Scalar>(x, period);
  return detail::finish_model<Scalar>(x, std::move(trend), period, period);
}

// Trend-only fallback for series with no dominant seasonality: residual is
// the series minus a centered moving average (odd length ~10% of the window).
template <typename Derived>
DecompositionModel<typename Derived::Scalar> decompose_trend_only(
    const Eigen::ArrayBase<Derived>& x_expr, const TrendOptions& opt = {}) {
  using Scalar = typename Derived::Scalar;
  Eigen::Ref<const ArrayX<Scalar>> x(x_expr.derived());
  const Eigen::Index n = x.size();
  if (n < 4) throw config_error("decompose_trend_only: need at least 4 points");
  if (!x.allFinite()) throw input_error("decompose_trend_only: non-finite values");

  Eigen::Index win = std::max<Eigen::Index>(
      3, static_cast<Eigen::Index>(std::llround(double(n) / 10.0)));
  if (win % 2 == 0) win += 1;
  while (win + 1 > n) win -= 2;  // keep at least one interior point

  ArrayX<Scalar> trend = opt.kind == TrendKind::loess
                             ? detail::loess_trend<Scalar>(x, opt.loess_span)
                             : detail::ma_trend<Scalar>(x, win);
  return detail::finish_model<Scalar>(x, std::move(trend), 0, win);
}

// Forecast h = 1..horizon steps past the training window.
template <typename Scalar>
ArrayX<Scalar> forecast(const DecompositionModel<Scalar>& model,
                        Eigen::Index horizon) {
  if (horizon <= 0) throw input_error("forecast: horizon must be positive");
  if (model.train_len < 1) throw config_error("forecast: model not fitted");
  ArrayX<Scalar> f(horizon);
  for (Eigen::Index h = 1; h <= horizon; ++h) {
    Scalar v = model.trend_level + model.trend_slope * Scalar(h);
    if (model.period > 0)
      v += model.seasonal[(model.train_len - 1 + h) % model.period];
    f[h - 1] = v;
  }
  return f;
}

// In-sample fitted value at training index i.
template <typename Scalar>
Scalar fitted(const DecompositionModel<Scalar>& model, Eigen::Index i) {
  Scalar v = model.trend[i];
  if (model.period > 0) v += model.seasonal[i % model.period];
  return v;
}

}  // namespace resd
