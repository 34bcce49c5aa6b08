#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "resd/decompose.hpp"
#include "resd/detector.hpp"
#include "resd/errors.hpp"
#include "resd/esd.hpp"
#include "resd/series.hpp"

// SH-ESD baseline: batch detector over non-overlapping windows. Each window
// is detrended by its median (stepwise trend), optionally deseasonalised with
// the same decomposition used elsewhere, then run through an ESD-style loop
// that studentises with median/MAD instead of mean/standard deviation.

namespace resd {

struct ShesdConfig {
  Eigen::Index window = 0;  // non-overlapping batch length; 0 = whole series
  Eigen::Index period = 0;  // 0 = no seasonal removal
  double alpha = 0.05;
  double max_anoms = 0.02;  // fraction of each window tested, k = ceil(f * m)
};

struct ShesdOutcome {
  std::vector<AnomalyRecord> records;
  std::vector<std::string> warnings;
  Eigen::Index windows_processed = 0;
  Eigen::Index zero_variance_windows = 0;
};

namespace detail {

inline double median_of(std::vector<double>& scratch) {
  const std::size_t n = scratch.size();
  const auto mid = scratch.begin() + n / 2;
  std::nth_element(scratch.begin(), mid, scratch.end());
  double med = *mid;
  if (n % 2 == 0) {
    med = (med + *std::max_element(scratch.begin(), mid)) / 2.0;
  }
  return med;
}

}  // namespace detail

inline ShesdOutcome run_shesd(const TimedSeries& series, const ShesdConfig& cfg) {
  if (!(cfg.alpha > 0 && cfg.alpha < 1))
    throw config_error("shesd: alpha must lie in (0, 1)");
  if (!(cfg.max_anoms > 0 && cfg.max_anoms < 0.5))
    throw config_error("shesd: max_anoms must lie in (0, 0.5)");
  if (cfg.period < 0 || cfg.period == 1)
    throw config_error("shesd: period must be 0 (none) or >= 2");
  if (cfg.window < 0) throw config_error("shesd: window must be non-negative");
  if (!series.values.allFinite())
    throw input_error("shesd: series contains non-finite values");

  const Eigen::Index n = series.size();
  const Eigen::Index m = cfg.window > 0 ? cfg.window : n;
  if (m < 4) throw config_error("shesd: window must hold at least 4 points");
  if (cfg.period >= 2 && m < cfg.period)
    throw config_error("shesd: window must contain at least one full period");
  if (n < m)
    throw input_error("shesd: series shorter than one window");

  ShesdOutcome out;
  bool short_seasonal_warned = false;

  for (Eigen::Index start = 0; start + m <= n; start += m) {
    ++out.windows_processed;
    const auto x = series.values.segment(start, m);

    // Expected level per point: seasonal offset (when estimable) plus the
    // window median. Deviations from it feed the robust ESD loop.
    ArrayX<double> expected = ArrayX<double>::Zero(m);
    if (cfg.period >= 2) {
      if (m >= 2 * cfg.period) {
        const DecompositionModeld dec = decompose(x, cfg.period);
        for (Eigen::Index i = 0; i < m; ++i)
          expected[i] = dec.seasonal[i % cfg.period];
      } else if (!short_seasonal_warned) {
        out.warnings.push_back(
            "window shorter than two periods; seasonal removal skipped");
        short_seasonal_warned = true;
      }
    }
    {
      std::vector<double> tmp(x.data(), x.data() + m);
      const double window_median = detail::median_of(tmp);
      expected += window_median;
    }
    const ArrayX<double> work = x - expected;

    Eigen::Index k = static_cast<Eigen::Index>(
        std::ceil(cfg.max_anoms * double(m)));
    k = std::max<Eigen::Index>(1, std::min(k, m - 2));

    std::vector<char> active(static_cast<std::size_t>(m), 1);
    Eigen::Index remaining = m;
    struct Candidate {
      Eigen::Index index;
      double stat;
      double crit;
    };
    std::vector<Candidate> removed;
    Eigen::Index last_reject = 0;

    std::vector<double> scratch;
    scratch.reserve(static_cast<std::size_t>(m));

    for (Eigen::Index j = 1; j <= k; ++j) {
      scratch.clear();
      for (Eigen::Index i = 0; i < m; ++i)
        if (active[static_cast<std::size_t>(i)]) scratch.push_back(work[i]);
      const double med = detail::median_of(scratch);

      Eigen::Index arg = -1;
      double best = -1;
      scratch.clear();
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        const double dev = std::fabs(work[i] - med);
        scratch.push_back(dev);
        if (dev > best) {
          best = dev;
          arg = i;
        }
      }
      const double mad = 1.4826 * detail::median_of(scratch);

      double stat;
      if (mad == 0) {
        if (best == 0) {
          // Constant remainder: nothing can be studentised.
          ++out.zero_variance_windows;
          break;
        }
        stat = std::numeric_limits<double>::infinity();
      } else {
        stat = best / mad;
      }
      const double crit = critical_value<double>(m, j - 1, cfg.alpha);
      removed.push_back({arg, stat, crit});
      if (stat > crit) last_reject = Eigen::Index(removed.size());
      active[static_cast<std::size_t>(arg)] = 0;
      --remaining;
      if (remaining < 3) break;
    }

    for (Eigen::Index r = 0; r < last_reject; ++r) {
      const Candidate& c = removed[static_cast<std::size_t>(r)];
      const Eigen::Index gi = start + c.index;
      out.records.push_back({series.timestamps[static_cast<std::size_t>(gi)],
                             series.values[gi], expected[c.index],
                             work[c.index], c.stat, c.crit,
                             series.timestamps[static_cast<std::size_t>(start + m - 1)]});
    }
  }

  std::sort(out.records.begin(), out.records.end(),
            [](const AnomalyRecord& a, const AnomalyRecord& b) { return a.ts < b.ts; });
  return out;
}

}  // namespace resd
