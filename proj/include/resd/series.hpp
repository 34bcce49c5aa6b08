#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "resd/window_stats.hpp"

namespace resd {

// Timestamps are microseconds since the Unix epoch throughout the library;
// the io layer converts to and from the textual formats.
struct SeriesPoint {
  std::int64_t ts = 0;
  double value = 0;
};

struct TimedSeries {
  std::vector<std::int64_t> timestamps;
  ArrayX<double> values;

  Eigen::Index size() const { return values.size(); }
  SeriesPoint point(Eigen::Index i) const {
    return {timestamps[static_cast<std::size_t>(i)], values[i]};
  }
};

}  // namespace resd
