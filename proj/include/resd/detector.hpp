#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "resd/decompose.hpp"
#include "resd/errors.hpp"
#include "resd/esd.hpp"
#include "resd/periodogram.hpp"
#include "resd/series.hpp"
#include "resd/window_stats.hpp"

// Streaming detector: fit a seasonal model on a training prefix, then slide a
// window of forecast residuals one observation at a time, updating the window
// moments in O(1) and running the ESD test on every step.

namespace resd {

struct DetectorConfig {
  Eigen::Index train_window = 0;  // w'; 0 = the whole supplied history
  Eigen::Index window = 0;        // w, required
  Eigen::Index k_max = 0;         // anomalies tested per window; 0 = ceil(0.02 w)
  double alpha = 0.05;
  Eigen::Index period = -1;       // -1 auto-estimate, 0 trend-only, >= 2 fixed
  Eigen::Index max_period = 0;    // periodogram search bound; 0 = w'/2
  EsdMode esd_mode = EsdMode::sequential;
  Eigen::Index horizon = 0;       // forecast steps; 0 = 10 w (CLI sets remaining input)
  Eigen::Index refit_interval = 0;  // steps between refits; 0 = never
  bool dedupe = true;             // report each timestamp at most once
  Eigen::Index reanchor_interval = 0;  // slides between stat rebuilds; 0 = off
  TrendOptions trend;
};

struct AnomalyRecord {
  std::int64_t ts = 0;
  double value = 0;
  double forecast = 0;
  double residual = 0;
  double stat = 0;
  double crit = 0;
  std::int64_t window_end = 0;
};

struct BufferEntry {
  std::int64_t ts = 0;
  double value = 0;
  double forecast = 0;
  double residual = 0;
};

class Detector {
 public:
  Detector(const TimedSeries& history, DetectorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.window < 4)
      throw config_error("detector: window must be at least 4 (k + 3 with k >= 1)");
    if (!(cfg_.alpha > 0 && cfg_.alpha < 1))
      throw config_error("detector: alpha must lie in (0, 1)");
    if (cfg_.train_window < 0 || cfg_.max_period < 0 || cfg_.horizon < 0 ||
        cfg_.refit_interval < 0 || cfg_.reanchor_interval < 0 || cfg_.k_max < 0)
      throw config_error("detector: size parameters must be non-negative");
    if (cfg_.k_max == 0) {
      cfg_.k_max = std::min<Eigen::Index>(
          static_cast<Eigen::Index>(std::ceil(0.02 * double(cfg_.window))),
          cfg_.window - 3);
      if (cfg_.k_max < 1) cfg_.k_max = 1;
    }
    if (cfg_.window < cfg_.k_max + 3)
      throw config_error("detector: window must be at least k + 3");
    if (cfg_.period == 1 || cfg_.period < -1)
      throw config_error("detector: period must be -1 (auto), 0 (none), or >= 2");

    train_len_ = cfg_.train_window > 0 ? cfg_.train_window : history.size();
    if (train_len_ < cfg_.window)
      throw config_error("detector: training window must be at least the streaming window");
    if (history.size() < train_len_)
      throw input_error("detector: insufficient history for the training window");
    if (cfg_.max_period > 0 && train_len_ < 2 * cfg_.max_period)
      throw config_error("detector: training window must be at least twice max_period");

    TimedSeries train;
    const Eigen::Index off = history.size() - train_len_;
    train.timestamps.assign(history.timestamps.begin() + off,
                            history.timestamps.end());
    train.values = history.values.tail(train_len_);
    for (std::size_t i = 1; i < train.timestamps.size(); ++i)
      if (train.timestamps[i] <= train.timestamps[i - 1])
        throw input_error("detector: history timestamps must be strictly increasing");

    table_ = CriticalValueTable<double>(cfg_.window, cfg_.alpha, cfg_.k_max);
    esd_cfg_ = EsdConfig{cfg_.alpha, cfg_.k_max, cfg_.esd_mode};
    scratch_.resize(cfg_.window);
    for (Eigen::Index i = 0; i < train.size(); ++i)
      history_.push_back({train.timestamps[static_cast<std::size_t>(i)],
                          train.values[i], 0.0});
    fit(train);
  }

  // Process one observation; returns the anomaly records this step emits.
  std::vector<AnomalyRecord> step(const SeriesPoint& pt) {
    if (pt.ts <= last_ts_)
      throw input_error("detector: timestamps must be strictly increasing");
    if (!std::isfinite(pt.value))
      throw input_error("detector: non-finite observation");

    if (cursor_ >= forecasts_.size()) {
      if (cfg_.refit_interval > 0) {
        refit();
      } else {
        throw stream_error(
            "detector: forecast horizon exhausted; enable --refit-interval or extend --horizon");
      }
    }

    last_ts_ = pt.ts;
    const double fc = forecasts_[cursor_++];
    const double resid = pt.value - fc;

    const Eigen::Index w = cfg_.window;
    stats_ = slide(stats_, ring_[static_cast<std::size_t>(head_)].residual, resid);
    ring_[static_cast<std::size_t>(head_)] = {pt.ts, pt.value, fc, resid};
    head_ = (head_ + 1) % w;

    history_.push_back({pt.ts, pt.value, fc});
    if (Eigen::Index(history_.size()) > train_len_) history_.pop_front();

    if (cfg_.reanchor_interval > 0 &&
        ++slides_since_anchor_ >= cfg_.reanchor_interval) {
      fill_scratch();
      stats_ = init_stats(scratch_);
      slides_since_anchor_ = 0;
    }

    fill_scratch();
    const EsdOutcomed outcome = run_esd(scratch_, stats_, esd_cfg_, table_);

    std::vector<AnomalyRecord> records;
    for (const EsdFlagd& flag : outcome.flagged) {
      const BufferEntry& e =
          ring_[static_cast<std::size_t>((head_ + flag.index) % w)];
      if (cfg_.dedupe && reported_.count(e.ts)) continue;
      reported_.insert(e.ts);
      records.push_back(
          {e.ts, e.value, e.forecast, e.residual, flag.stat, flag.crit, pt.ts});
    }

    if (cfg_.refit_interval > 0 && ++steps_since_fit_ >= cfg_.refit_interval)
      refit();
    return records;
  }

  const DetectorConfig& config() const { return cfg_; }
  const DecompositionModeld& model() const { return model_; }
  const WindowStatsd& stats() const { return stats_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  Eigen::Index refit_count() const { return refits_; }
  Eigen::Index train_length() const { return train_len_; }

  // Ordered (oldest to newest) snapshot of the current residual window.
  ArrayX<double> window_residuals() const {
    ArrayX<double> out(cfg_.window);
    for (Eigen::Index i = 0; i < cfg_.window; ++i)
      out[i] = ring_[static_cast<std::size_t>((head_ + i) % cfg_.window)].residual;
    return out;
  }

  // Entry written by the most recent step (newest slot in the ring).
  const BufferEntry& last_entry() const {
    return ring_[static_cast<std::size_t>((head_ + cfg_.window - 1) % cfg_.window)];
  }

  std::vector<BufferEntry> window_entries() const {
    std::vector<BufferEntry> out;
    out.reserve(static_cast<std::size_t>(cfg_.window));
    for (Eigen::Index i = 0; i < cfg_.window; ++i)
      out.push_back(ring_[static_cast<std::size_t>((head_ + i) % cfg_.window)]);
    return out;
  }

 private:
  void fill_scratch() {
    const Eigen::Index w = cfg_.window;
    for (Eigen::Index i = 0; i < w; ++i)
      scratch_[i] = ring_[static_cast<std::size_t>((head_ + i) % w)].residual;
  }

  void fit(const TimedSeries& train) {
    Eigen::Index period = cfg_.period;
    if (period < 0) {
      const Eigen::Index max_period =
          cfg_.max_period > 0 ? cfg_.max_period
                              : std::max<Eigen::Index>(2, train_len_ / 2);
      period = estimate_period(train.values, max_period).value_or(0);
    }
    model_ = period >= 2 ? decompose(train.values, period, cfg_.trend)
                         : decompose_trend_only(train.values, cfg_.trend);

    const double sd = std::sqrt(model_.sigma2_hat);
    if (sd > 0) {
      const Eigen::Index spikes =
          (model_.residuals.abs() > 5 * sd).count();
      if (spikes > 0)
        warnings_.push_back(
            std::to_string(spikes) +
            " training residual(s) exceed 5 sigma; training data may contain anomalies");
    }

    const Eigen::Index w = cfg_.window;
    ring_.assign(static_cast<std::size_t>(w), BufferEntry{});
    for (Eigen::Index i = 0; i < w; ++i) {
      const Eigen::Index src = train.size() - w + i;
      ring_[static_cast<std::size_t>(i)] = {
          train.timestamps[static_cast<std::size_t>(src)], train.values[src],
          fitted(model_, src), model_.residuals[src]};
    }
    head_ = 0;
    stats_ = init_stats(model_.residuals.tail(w));

    const Eigen::Index horizon =
        cfg_.horizon > 0 ? cfg_.horizon : 10 * cfg_.window;
    forecasts_ = forecast(model_, horizon);
    cursor_ = 0;
    last_ts_ = train.timestamps.back();
    slides_since_anchor_ = 0;
    steps_since_fit_ = 0;
  }

  // Re-run the initial phase on the trailing raw history, substituting
  // forecasts for values at already-flagged timestamps so the training data
  // stays anomaly-free.
  void refit() {
    TimedSeries train;
    train.timestamps.reserve(history_.size());
    train.values.resize(Eigen::Index(history_.size()));
    Eigen::Index i = 0;
    for (const HistoryPoint& h : history_) {
      train.timestamps.push_back(h.ts);
      train.values[i++] = reported_.count(h.ts) ? h.forecast : h.value;
    }
    fit(train);
    ++refits_;
  }

  struct HistoryPoint {
    std::int64_t ts = 0;
    double value = 0;
    double forecast = 0;
  };

  DetectorConfig cfg_;
  Eigen::Index train_len_ = 0;
  DecompositionModeld model_;
  WindowStatsd stats_;
  CriticalValueTable<double> table_;
  EsdConfig esd_cfg_;
  std::vector<BufferEntry> ring_;
  Eigen::Index head_ = 0;
  ArrayX<double> scratch_;
  ArrayX<double> forecasts_;
  Eigen::Index cursor_ = 0;
  std::int64_t last_ts_ = std::numeric_limits<std::int64_t>::min();
  std::deque<HistoryPoint> history_;
  std::unordered_set<std::int64_t> reported_;
  std::vector<std::string> warnings_;
  Eigen::Index steps_since_fit_ = 0;
  Eigen::Index slides_since_anchor_ = 0;
  Eigen::Index refits_ = 0;
};

struct StreamSummary {
  Eigen::Index steps = 0;
  Eigen::Index records = 0;
  Eigen::Index flagged_steps = 0;
  double total_seconds = 0;
  double min_step_seconds = 0;
  double max_step_seconds = 0;
  double mean_step_seconds = 0;
};

// Drive a detector from a pull source, handing every record to the sink
// before the next observation is requested. `next` returns
// std::optional<SeriesPoint>; `emit` takes const AnomalyRecord&.
template <typename Source, typename Sink>
StreamSummary run_stream(Detector& det, Source&& next, Sink&& emit) {
  using clock = std::chrono::steady_clock;
  StreamSummary s;
  s.min_step_seconds = std::numeric_limits<double>::infinity();
  while (std::optional<SeriesPoint> pt = next()) {
    const auto t0 = clock::now();
    const std::vector<AnomalyRecord> records = det.step(*pt);
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    for (const AnomalyRecord& r : records) emit(r);
    s.steps += 1;
    s.records += Eigen::Index(records.size());
    s.flagged_steps += records.empty() ? 0 : 1;
    s.total_seconds += dt;
    s.min_step_seconds = std::min(s.min_step_seconds, dt);
    s.max_step_seconds = std::max(s.max_step_seconds, dt);
  }
  s.mean_step_seconds = s.steps > 0 ? s.total_seconds / double(s.steps) : 0;
  if (s.steps == 0) s.min_step_seconds = 0;
  return s;
}

}  // namespace resd
