#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "resd/errors.hpp"
#include "resd/series.hpp"

// Deterministic synthetic series for tests, benchmarks, and demos. The
// normal sampler is hand-rolled (Box-Muller over mt19937_64) because
// std::normal_distribution's output is implementation-defined and these
// generators must be byte-reproducible everywhere.

namespace resd {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // in (0, 1]
    return (double(gen_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    return r * std::cos(a);
  }

  std::uint64_t integer(std::uint64_t bound) {  // in [0, bound)
    return gen_() % bound;
  }

 private:
  std::mt19937_64 gen_;
  std::optional<double> spare_;
};

struct SeasonalSpec {
  Eigen::Index n = 1680;
  Eigen::Index period = 24;
  double amplitude = 10;
  double level = 100;
  double slope = 0;
  double noise_sd = 1;
  double second_harmonic = 0;  // amplitude of an extra period/2 component
  Eigen::Index n_outliers = 0;
  double outlier_min_sigma = 4;
  double outlier_max_sigma = 8;
  Eigen::Index outlier_start = 0;  // earliest index eligible for injection
  Eigen::Index outlier_min_gap = 1;
  std::int64_t t0 = 1356998400000000;  // 2013-01-01T00:00:00Z, microseconds
  std::int64_t cadence = 3600000000;   // one hour, microseconds
  std::uint64_t seed = 1;
};

struct SyntheticSeries {
  TimedSeries series;
  std::vector<std::int64_t> outlier_ts;
  std::vector<Eigen::Index> outlier_idx;
};

inline SyntheticSeries make_seasonal(const SeasonalSpec& spec) {
  if (spec.n < 2) throw config_error("make_seasonal: n must be >= 2");
  if (spec.period < 2) throw config_error("make_seasonal: period must be >= 2");
  if (spec.outlier_start < 0 || spec.outlier_start >= spec.n)
    throw config_error("make_seasonal: outlier_start out of range");

  Rng rng(spec.seed);
  SyntheticSeries out;
  out.series.timestamps.resize(static_cast<std::size_t>(spec.n));
  out.series.values.resize(spec.n);

  const double tau = 2.0 * std::numbers::pi;
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const double t = double(i);
    double v = spec.level + spec.slope * t +
               spec.amplitude * std::sin(tau * t / double(spec.period));
    if (spec.second_harmonic != 0)
      v += spec.second_harmonic * std::sin(2 * tau * t / double(spec.period));
    v += spec.noise_sd * rng.normal();
    out.series.values[i] = v;
    out.series.timestamps[static_cast<std::size_t>(i)] =
        spec.t0 + std::int64_t(i) * spec.cadence;
  }

  if (spec.n_outliers > 0) {
    const Eigen::Index lo = spec.outlier_start;
    const Eigen::Index span = spec.n - lo;
    if (span < spec.n_outliers)
      throw config_error("make_seasonal: not enough room for the outliers");
    std::vector<Eigen::Index> chosen;
    int guard = 0;
    while (Eigen::Index(chosen.size()) < spec.n_outliers) {
      if (++guard > 100000)
        throw config_error("make_seasonal: could not honor outlier_min_gap");
      const Eigen::Index idx =
          lo + Eigen::Index(rng.integer(std::uint64_t(span)));
      bool ok = true;
      for (const Eigen::Index c : chosen)
        if (std::llabs(static_cast<long long>(c - idx)) < spec.outlier_min_gap) ok = false;
      if (!ok) continue;
      chosen.push_back(idx);
      const double mag = spec.outlier_min_sigma +
                         (spec.outlier_max_sigma - spec.outlier_min_sigma) *
                             rng.uniform();
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      out.series.values[idx] += sign * mag * spec.noise_sd;
    }
    std::sort(chosen.begin(), chosen.end());
    for (const Eigen::Index idx : chosen) {
      out.outlier_idx.push_back(idx);
      out.outlier_ts.push_back(
          out.series.timestamps[static_cast<std::size_t>(idx)]);
    }
  }
  return out;
}

}  // namespace resd
