#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "../oracles.hpp"
#include "resd/detector.hpp"
#include "resd/evaluation.hpp"
#include "resd/io.hpp"
#include "resd/shesd.hpp"
#include "resd/synthetic.hpp"

// Acceptance checks for the streaming detector. Each criterion prints one
// [PASS]/[FAIL] line. Exit code: 0 all pass, 1 any failure, 77 when the only
// shortfall is an absent external dataset (the suite records a skip).

namespace {

enum class Kind { pass, fail, missing_data };

struct Outcome {
  Kind kind;
  std::string detail;
};

Outcome pass(std::string d) { return {Kind::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Kind::fail, std::move(d)}; }

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

resd::TimedSeries prefix_series(const resd::TimedSeries& s, Eigen::Index n) {
  resd::TimedSeries out;
  out.timestamps.assign(s.timestamps.begin(), s.timestamps.begin() + n);
  out.values = s.values.head(n);
  return out;
}

// Train on the first `wprime` points, stream the rest, return detection times.
std::vector<std::int64_t> resd_detections(const resd::TimedSeries& s,
                                          Eigen::Index wprime,
                                          resd::DetectorConfig cfg) {
  cfg.horizon = s.size();
  resd::Detector det(prefix_series(s, wprime), cfg);
  std::vector<std::int64_t> out;
  for (Eigen::Index i = wprime; i < s.size(); ++i)
    for (const resd::AnomalyRecord& r : det.step(s.point(i)))
      out.push_back(r.ts);
  return out;
}

std::int64_t median_cadence_us(const std::vector<std::int64_t>& ts) {
  std::vector<std::int64_t> d(ts.size() - 1);
  for (std::size_t i = 1; i < ts.size(); ++i) d[i - 1] = ts[i] - ts[i - 1];
  const auto mid = d.begin() + d.size() / 2;
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

// ---- criterion 1: exact equivalence with a from-scratch reference ----------

Outcome criterion1() {
  const auto started = std::chrono::steady_clock::now();
  resd::Rng rng(101);

  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 10 + Eigen::Index(rng.integer(191));
    resd::ArrayX<double> w(n);
    switch (trial % 5) {
      case 0:
        for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.normal();
        break;
      case 1: {
        for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.normal();
        const int spikes = 1 + int(rng.integer(3));
        for (int s = 0; s < spikes; ++s) {
          const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
          w[Eigen::Index(rng.integer(std::uint64_t(n)))] +=
              sign * (4.0 + 4.0 * rng.uniform());
        }
        break;
      }
      case 2:
        for (Eigen::Index i = 0; i < n; ++i)
          w[i] = 3.25 + 1e-8 * rng.uniform();
        break;
      case 3:
        for (Eigen::Index i = 0; i < n; ++i) w[i] = 1e6 + 1e3 * rng.normal();
        break;
      default:
        for (Eigen::Index i = 0; i < n; ++i)
          w[i] = std::round(2.0 * rng.normal());  // duplicates force tie-breaks
        break;
    }

    const resd::WindowStatsd stats = resd::init_stats(w);
    const oracle::Moments om = oracle::moments(w);
    if (!oracle::close(stats.mean, om.mean, 1e-9, 1e-9) ||
        !oracle::close(stats.sum_sq, om.sum_sq, 1e-9, 1e-9))
      return fail("window moments diverge from the reference at trial " +
                  std::to_string(trial));

    resd::EsdConfig cfg;
    cfg.alpha = 0.05;
    const Eigen::Index k_hi = std::min<Eigen::Index>(8, n - 3);
    cfg.k_max = 1 + Eigen::Index(rng.integer(std::uint64_t(k_hi)));
    cfg.mode = trial % 2 ? resd::EsdMode::rosner : resd::EsdMode::sequential;

    const resd::EsdOutcomed got = resd::run_esd(w, stats, cfg);
    const std::vector<Eigen::Index> want =
        oracle::esd_flags(w, cfg.k_max, cfg.alpha, cfg.mode);
    bool same = got.flagged.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i)
      same = got.flagged[i].index == want[i];
    if (!same)
      return fail("flag sets diverge from the reference at trial " +
                  std::to_string(trial) + " (n=" + std::to_string(n) +
                  ", k=" + std::to_string(cfg.k_max) + ")");
  }

  // Long-run slide stability: one million O(1) updates against periodic
  // full recomputes.
  const Eigen::Index w_len = 64;
  resd::Rng srng(202);
  resd::ArrayX<double> buf(w_len);
  for (Eigen::Index i = 0; i < w_len; ++i) buf[i] = 100.0 + srng.normal();
  resd::WindowStatsd stats = resd::init_stats(buf);
  Eigen::Index head = 0;
  double worst_rel = 0;
  for (long s = 1; s <= 1000000; ++s) {
    const double x_in =
        100.0 + 10.0 * std::sin(double(s) / 5000.0) + srng.normal();
    stats = resd::slide(stats, buf[head], x_in);
    buf[head] = x_in;
    head = (head + 1) % w_len;
    if (s % 10000 == 0) {
      const oracle::Moments om = oracle::moments(buf);
      if (!oracle::close(stats.mean, om.mean, 1e-9, 1e-12) ||
          !oracle::close(stats.sum_sq, om.sum_sq, 1e-9, 1e-12))
        return fail("slide recursion drifted past tolerance at step " +
                    std::to_string(s));
      worst_rel = std::max(
          worst_rel, std::fabs(double((long double)stats.sum_sq - om.sum_sq) /
                               double(om.sum_sq)));
    }
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return pass(
      "1000 randomized windows (5 regimes, both stopping modes) match the "
      "from-scratch reference exactly; 1000000 slides stayed within 1e-9 "
      "(worst relative drift " +
      fmt(worst_rel) + ", " + fmt(secs) + "s)");
}

// ---- criterion 2: published critical values ---------------------------------

Outcome criterion2() {
  const struct {
    Eigen::Index n;
    double published;
  } rows[] = {{5, 1.715}, {10, 2.290}, {20, 2.709}, {50, 3.128}, {100, 3.384}};
  double worst = 0;
  for (const auto& row : rows) {
    const double got = resd::critical_value<double>(row.n, 0, 0.05);
    const double diff = std::fabs(got - row.published);
    worst = std::max(worst, diff);
    if (diff > 1e-3)
      return fail("critical value for n=" + std::to_string(row.n) + " is " +
                  fmt(got) + ", published table says " + fmt(row.published));
  }
  return pass(
      "single-outlier critical values for n in {5,10,20,50,100} match the "
      "published table within 1e-3 (worst |diff| " +
      fmt(worst) + ")");
}

// ---- criterion 3: machine-temperature corpus --------------------------------

Outcome criterion3() {
  const std::string dir = RESD_DATA_DIR;
  const std::string data_path = dir + "/machine_temperature_system_failure.csv";
  if (!std::filesystem::exists(data_path))
    return {Kind::missing_data,
            "dataset not present: " + data_path +
                " (see data/README.md for how to obtain it); criterion not "
                "demonstrated"};

  const resd::Ingested ing = resd::read_csv_series(data_path);
  if (ing.series.size() != 22695)
    return fail("unexpected dataset: " + std::to_string(ing.series.size()) +
                " rows, the machine-temperature series has 22695");
  const std::vector<resd::Label> labels =
      resd::read_labels(dir + "/machine_temperature_labels.csv");
  if (labels.size() != 4)
    return fail("expected 4 point labels, found " +
                std::to_string(labels.size()));

  const std::int64_t tol_us = 961 * median_cadence_us(ing.series.timestamps);

  resd::DetectorConfig cfg;
  cfg.window = 961;
  const std::vector<std::int64_t> det_a = resd_detections(ing.series, 1922, cfg);
  const resd::EvalReport rep_a = resd::score(det_a, labels, tol_us);
  bool early = false;
  for (const std::int64_t ts : det_a) early = early || ts < labels[0].start;

  const std::vector<std::int64_t> det_b = resd_detections(ing.series, 4805, cfg);
  const resd::EvalReport rep_b = resd::score(det_b, labels, tol_us);

  resd::ShesdConfig scfg;
  scfg.window = 961;
  scfg.period = 288;
  scfg.max_anoms = 0.0004;
  const resd::ShesdOutcome sout = resd::run_shesd(ing.series, scfg);
  std::vector<std::int64_t> det_c;
  for (const resd::AnomalyRecord& r : sout.records) det_c.push_back(r.ts);
  const resd::EvalReport rep_c = resd::score(det_c, labels, tol_us);

  if (rep_a.recall < 0.25)
    return fail("short-training run recalled " + fmt(rep_a.recall) +
                " of the labelled failures (need >= 0.25)");
  if (!early)
    return fail("no detection preceded the first labelled failure");
  if (rep_b.recall < 0.25)
    return fail("long-training run recalled " + fmt(rep_b.recall) +
                " of the labelled failures (need >= 0.25)");
  if (rep_c.recall != 0)
    return fail("batch baseline unexpectedly recalled " + fmt(rep_c.recall) +
                "; the documented comparison expects 0");

  return pass("machine-temperature runs: recall " + fmt(rep_a.recall) +
              " (w'=1922, with a detection before the first failure) and " +
              fmt(rep_b.recall) + " (w'=4805) vs batch baseline recall 0");
}

// ---- criterion 4: detection quality on the synthetic benchmark --------------

struct QualityStats {
  double median_f1 = 0;
  double q25_recall = 0;
  std::size_t series_count = 0;
};

QualityStats summarize(std::vector<double> f1s, std::vector<double> recalls) {
  QualityStats q;
  q.series_count = f1s.size();
  std::sort(f1s.begin(), f1s.end());
  std::sort(recalls.begin(), recalls.end());
  q.median_f1 = f1s[(f1s.size() - 1) / 2];
  q.q25_recall = recalls[(recalls.size() - 1) / 4];
  return q;
}

Outcome criterion4() {
  std::vector<double> f1s, recalls;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    resd::SeasonalSpec spec;
    spec.n = 1680;
    spec.period = 24;
    spec.amplitude = 10;
    spec.level = 100;
    spec.slope = seed % 2 == 0 ? 0.01 : 0.0;
    spec.noise_sd = 1;
    spec.second_harmonic = seed % 2 == 1 ? 3.0 : 0.0;
    spec.n_outliers = 8;
    spec.outlier_start = 168;
    spec.outlier_min_gap = 69;
    spec.seed = seed;
    const resd::SyntheticSeries made = resd::make_seasonal(spec);

    resd::DetectorConfig cfg;
    cfg.window = 34;
    cfg.k_max = 1;
    cfg.alpha = 0.01;
    const std::vector<std::int64_t> det =
        resd_detections(made.series, 168, cfg);

    std::vector<resd::Label> labels;
    for (const std::int64_t ts : made.outlier_ts) labels.push_back({ts, ts});
    const resd::EvalReport rep = resd::score(det, labels, 0);
    f1s.push_back(rep.f1);
    recalls.push_back(rep.recall);
  }
  const QualityStats synth = summarize(std::move(f1s), std::move(recalls));
  if (synth.median_f1 < 0.75)
    return fail("synthetic benchmark median F1 " + fmt(synth.median_f1) +
                " (need >= 0.75)");
  if (synth.q25_recall < 0.5)
    return fail("synthetic benchmark lower-quartile recall " +
                fmt(synth.q25_recall) + " (need >= 0.5)");

  std::string real_note = "; no labelled real corpus supplied";
  const std::filesystem::path real_dir =
      std::filesystem::path(RESD_DATA_DIR) / "yahoo_a3";
  if (std::filesystem::is_directory(real_dir)) {
    std::vector<double> rf1s, rrecalls;
    std::vector<std::filesystem::path> series_files;
    for (const auto& entry : std::filesystem::directory_iterator(real_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 4 && name.ends_with(".csv") &&
          !name.ends_with("_labels.csv"))
        series_files.push_back(entry.path());
    }
    std::sort(series_files.begin(), series_files.end());
    for (const auto& path : series_files) {
      std::filesystem::path lp = path;
      lp.replace_extension();
      lp += "_labels.csv";
      if (!std::filesystem::exists(lp)) continue;
      const resd::Ingested ing = resd::read_csv_series(path.string());
      const std::vector<resd::Label> labels = resd::read_labels(lp.string());
      resd::DetectorConfig cfg;
      cfg.window = 34;
      cfg.k_max = 1;
      cfg.alpha = 0.01;
      const Eigen::Index wprime = Eigen::Index(
          std::ceil(0.10 * double(ing.series.size())));
      const std::vector<std::int64_t> det =
          resd_detections(ing.series, wprime, cfg);
      const resd::EvalReport rep = resd::score(det, labels, 0);
      rf1s.push_back(rep.f1);
      rrecalls.push_back(rep.recall);
    }
    if (!rf1s.empty()) {
      const QualityStats real = summarize(std::move(rf1s), std::move(rrecalls));
      if (real.median_f1 < 0.75)
        return fail("labelled corpus median F1 " + fmt(real.median_f1) +
                    " over " + std::to_string(real.series_count) +
                    " series (need >= 0.75)");
      if (real.q25_recall < 0.5)
        return fail("labelled corpus lower-quartile recall " +
                    fmt(real.q25_recall) + " (need >= 0.5)");
      real_note = "; labelled corpus (" + std::to_string(real.series_count) +
                  " series) median F1 " + fmt(real.median_f1) +
                  ", lower-quartile recall " + fmt(real.q25_recall);
    }
  }

  return pass("100 synthetic series: median F1 " + fmt(synth.median_f1) +
              ", lower-quartile recall " + fmt(synth.q25_recall) + real_note);
}

// ---- criterion 5: bounded per-step cost over a long stream ------------------

Outcome criterion5() {
  resd::SeasonalSpec spec;
  spec.n = 23380;
  spec.period = 24;
  spec.noise_sd = 1;
  spec.seed = 42;
  const resd::SyntheticSeries made = resd::make_seasonal(spec);

  resd::DetectorConfig cfg;
  cfg.window = 1440;
  cfg.k_max = 288;
  cfg.period = 24;
  cfg.horizon = made.series.size();
  resd::Detector det(prefix_series(made.series, 2880), cfg);

  const Eigen::Index warmup = 500;
  const Eigen::Index measured = 20000;
  Eigen::Index i = 2880;
  for (; i < 2880 + warmup; ++i) det.step(made.series.point(i));

  std::vector<double> t(std::size_t(measured), 0.0);
  for (Eigen::Index j = 0; j < measured; ++j, ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    det.step(made.series.point(i));
    t[std::size_t(j)] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  }

  long double mean = 0;
  for (const double v : t) mean += v;
  mean /= measured;

  // Growth check robust to scheduler noise: compare the median step cost of
  // the first and last quarters. Any cost that actually grows with stream
  // length would blow far past the allowance (linear growth gives ~7x).
  const auto quarter_median = [&](std::size_t begin) {
    std::vector<double> q(t.begin() + std::ptrdiff_t(begin),
                          t.begin() + std::ptrdiff_t(begin + 5000));
    const auto mid = q.begin() + 2500;
    std::nth_element(q.begin(), mid, q.end());
    return *mid;
  };
  const double head = quarter_median(0);
  const double tail = quarter_median(std::size_t(measured) - 5000);
  const double ratio = head > 0 ? tail / head : 0;

  const bool mean_ok = mean <= 0.005L;
  const bool drift_ok = head > 0 && ratio <= 1.5;
  const std::string detail =
      "mean step " + fmt(double(mean * 1e6)) + "us over 20000 steps " +
      "(w=1440, k=288); first/last-quarter median " + fmt(head * 1e6) +
      "us / " + fmt(tail * 1e6) + "us (ratio " + fmt(ratio) + ")";
  if (!mean_ok) return fail(detail + "; mean exceeds the 5ms bound");
  if (!drift_ok) return fail(detail + "; step cost grows with stream length");
  return pass(detail);
}

// ---- criterion 6: deterministic replay with per-emission verification -------

Outcome criterion6() {
  resd::TimedSeries series;
  std::string source;
  bool surrogate = false;
  const std::string real_path = std::string(RESD_DATA_DIR) + "/raw_data.csv";
  if (std::filesystem::exists(real_path)) {
    series = resd::read_csv_series(real_path).series;
    source = real_path;
  } else {
    surrogate = true;
    resd::SeasonalSpec spec;
    spec.n = 14398;
    spec.period = 288;
    spec.cadence = 300000000;  // five minutes
    spec.noise_sd = 1;
    spec.n_outliers = 12;
    spec.outlier_min_sigma = 5;
    spec.outlier_max_sigma = 9;
    spec.outlier_start = 1440;
    spec.outlier_min_gap = 600;
    spec.seed = 77;
    series = resd::make_seasonal(spec).series;
    source = "surrogate series (seed 77)";
  }

  const Eigen::Index wprime = 1440;
  auto run_once = [&](std::string* err,
                      Eigen::Index* fitted_period) -> std::vector<resd::AnomalyRecord> {
    resd::DetectorConfig cfg;
    cfg.window = 288;
    cfg.k_max = 6;
    cfg.alpha = 0.05;
    cfg.horizon = series.size();
    resd::Detector det(prefix_series(series, wprime), cfg);
    if (fitted_period) *fitted_period = det.model().period;
    std::vector<resd::AnomalyRecord> all;
    for (Eigen::Index i = wprime; i < series.size(); ++i) {
      const std::vector<resd::AnomalyRecord> records =
          det.step(series.point(i));
      if (records.empty()) continue;
      // every emission must reject under a from-scratch test of the same
      // residual window
      const std::vector<Eigen::Index> flags = oracle::esd_flags(
          det.window_residuals(), cfg.k_max, cfg.alpha, resd::EsdMode::sequential);
      const std::vector<resd::BufferEntry> win = det.window_entries();
      for (const resd::AnomalyRecord& r : records) {
        if (!(r.stat > r.crit) && err->empty())
          *err = "emitted record at ts " + std::to_string(r.ts) +
                 " does not reject (stat " + fmt(r.stat) + " <= crit " +
                 fmt(r.crit) + ")";
        bool found = false;
        for (const Eigen::Index fi : flags)
          found = found || win[std::size_t(fi)].ts == r.ts;
        if (!found && err->empty())
          *err = "emitted record at ts " + std::to_string(r.ts) +
                 " is not flagged by the from-scratch reference";
        all.push_back(r);
      }
    }
    return all;
  };

  std::string err;
  Eigen::Index fitted_period = 0;
  const std::vector<resd::AnomalyRecord> first = run_once(&err, &fitted_period);
  if (!err.empty()) return fail(err + " (" + source + ")");
  if (first.empty())
    return fail("no anomalies emitted over " + source);
  if (surrogate && fitted_period != 288)
    return fail("period estimation picked " + std::to_string(fitted_period) +
                " on the surrogate, expected 288");
  const std::vector<resd::AnomalyRecord> second = run_once(&err, nullptr);
  if (!err.empty()) return fail(err + " (second replay, " + source + ")");
  bool identical = first.size() == second.size();
  for (std::size_t i = 0; identical && i < first.size(); ++i) {
    const resd::AnomalyRecord &a = first[i], &b = second[i];
    identical = a.ts == b.ts && a.value == b.value && a.forecast == b.forecast &&
                a.residual == b.residual && a.stat == b.stat &&
                a.crit == b.crit && a.window_end == b.window_end;
  }
  if (!identical) return fail("replay produced different records (" + source + ")");

  resd::ShesdConfig scfg;
  scfg.period = 288;
  scfg.max_anoms = 0.02;
  const resd::ShesdOutcome s1 = resd::run_shesd(series, scfg);
  const resd::ShesdOutcome s2 = resd::run_shesd(series, scfg);
  if (s1.records.empty())
    return fail("batch baseline emitted nothing over " + source);
  bool s_same = s1.records.size() == s2.records.size();
  for (std::size_t i = 0; s_same && i < s1.records.size(); ++i)
    s_same = s1.records[i].ts == s2.records[i].ts &&
             s1.records[i].stat == s2.records[i].stat;
  if (!s_same) return fail("batch baseline replay differed (" + source + ")");

  return pass("two replays over " + source + " emitted " +
              std::to_string(first.size()) +
              " identical records, each verified against the from-scratch "
              "reference at its own step; batch baseline replay also identical (" +
              std::to_string(s1.records.size()) + " records)");
}

// ---- criterion 7: records leave before the next observation ----------------

Outcome criterion7_inprocess() {
  constexpr std::int64_t kHour = 3600000000;
  const double pat[3] = {9, 10, 11};
  const Eigen::Index n = 36;
  const Eigen::Index train_len = 12;
  const Eigen::Index spike_at = 24;

  resd::TimedSeries train;
  for (Eigen::Index i = 0; i < train_len; ++i) {
    train.timestamps.push_back(1356998400000000 + i * kHour);
  }
  train.values.resize(train_len);
  for (Eigen::Index i = 0; i < train_len; ++i) train.values[i] = pat[i % 3];

  resd::DetectorConfig cfg;
  cfg.window = 6;
  cfg.period = 3;
  cfg.horizon = 60;
  resd::Detector det(train, cfg);

  std::vector<std::pair<char, std::int64_t>> log;  // 'p' pull, 'e' emit
  Eigen::Index cursor = train_len;
  auto source = [&]() -> std::optional<resd::SeriesPoint> {
    if (cursor >= n) return std::nullopt;
    const std::int64_t ts = 1356998400000000 + cursor * kHour;
    const double v = pat[cursor % 3] + (cursor == spike_at ? 10.0 : 0.0);
    log.push_back({'p', ts});
    ++cursor;
    return resd::SeriesPoint{ts, v};
  };
  auto sink = [&](const resd::AnomalyRecord& r) { log.push_back({'e', r.ts}); };
  resd::run_stream(det, source, sink);

  const std::int64_t spike_ts = 1356998400000000 + spike_at * kHour;
  std::ptrdiff_t pull_idx = -1, emit_idx = -1, next_pull_idx = -1;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].first == 'p' && log[i].second == spike_ts)
      pull_idx = std::ptrdiff_t(i);
    if (log[i].first == 'e' && log[i].second == spike_ts)
      emit_idx = std::ptrdiff_t(i);
    if (log[i].first == 'p' && log[i].second == spike_ts + kHour)
      next_pull_idx = std::ptrdiff_t(i);
  }
  if (emit_idx < 0) return fail("the spike was never reported in-process");
  if (!(pull_idx < emit_idx && emit_idx < next_pull_idx))
    return fail("in-process record was not delivered before the next pull");
  return pass("");
}

Outcome criterion7_subprocess() {
  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
    return fail("pipe() failed");

  const pid_t pid = ::fork();
  if (pid < 0) return fail("fork() failed");
  if (pid == 0) {
    ::dup2(in_pipe[0], 0);
    ::dup2(out_pipe[1], 1);
    const int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) ::dup2(devnull, 2);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl(RESD_CLI_PATH, "resd", "detect", "--window", "6",
            "--train-window", "12", "--period", "3", (char*)nullptr);
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);

  const int pat[3] = {9, 10, 11};
  const std::int64_t t0s = 1356998400;
  auto csv_line = [&](int idx, int add) {
    return std::to_string(t0s + 3600LL * idx) + ',' +
           std::to_string(pat[idx % 3] + add) + '\n';
  };
  auto send = [&](const std::string& s) {
    return ::write(in_pipe[1], s.data(), s.size()) == ssize_t(s.size());
  };

  auto give_up = [&](const std::string& why) {
    ::close(in_pipe[1]);
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    ::close(out_pipe[0]);
    return fail(why);
  };

  if (!send("timestamp,value\n")) return give_up("writing the header failed");
  int idx = 0;
  for (; idx < 20; ++idx)  // 12 training rows, then 8 quiet observations
    if (!send(csv_line(idx, 0))) return give_up("writing input failed");

  const int spike_idx = idx;
  const std::string spike_ts = std::to_string(t0s + 3600LL * spike_idx);
  if (!send(csv_line(idx++, 10))) return give_up("writing the spike failed");

  // The record must arrive while the producer is idle: nothing else will be
  // written until the flushed line shows up.
  std::string buf;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::seconds(5);
  bool got_line = false;
  while (std::chrono::steady_clock::now() < deadline) {
    struct pollfd pfd{out_pipe[0], POLLIN, 0};
    const int pr = ::poll(&pfd, 1, 100);
    if (pr <= 0) continue;
    char tmp[512];
    const ssize_t r = ::read(out_pipe[0], tmp, sizeof(tmp));
    if (r > 0) buf.append(tmp, std::size_t(r));
    if (buf.find('\n') != std::string::npos) {
      got_line = true;
      break;
    }
    if (r == 0) break;
  }
  if (!got_line)
    return give_up("no flushed record within 5s of the spike (paced producer)");
  if (buf.find("\"ts\":\"" + spike_ts + "\"") == std::string::npos)
    return give_up("the flushed record does not reference the spike");

  for (int extra = 0; extra < 3; ++extra)
    if (!send(csv_line(idx++, 0))) return give_up("writing the tail failed");
  ::close(in_pipe[1]);

  const auto drain_deadline =
      std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (std::chrono::steady_clock::now() < drain_deadline) {
    struct pollfd pfd{out_pipe[0], POLLIN, 0};
    const int pr = ::poll(&pfd, 1, 100);
    if (pr <= 0) continue;
    char tmp[512];
    const ssize_t r = ::read(out_pipe[0], tmp, sizeof(tmp));
    if (r > 0) {
      buf.append(tmp, std::size_t(r));
      continue;
    }
    if (r == 0) break;
  }
  ::close(out_pipe[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    return fail("detector process exited with status " +
                std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

  const long lines = std::count(buf.begin(), buf.end(), '\n');
  if (lines != 1)
    return fail("expected exactly one record line, saw " +
                std::to_string(lines));
  return pass("");
}

Outcome criterion7() {
  const Outcome a = criterion7_inprocess();
  if (a.kind != Kind::pass) return a;
  const Outcome b = criterion7_subprocess();
  if (b.kind != Kind::pass) return b;
  return pass(
      "records reach the sink before the next pull in-process, and a paced "
      "pipe producer saw the flushed record for its spike before sending "
      "anything further");
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: resd_acceptance [--criterion N]\n";
      return 2;
    }
  }
  if (only < 0 || only > 7) {
    std::cerr << "unknown criterion: " << only << '\n';
    return 2;
  }

  using Fn = Outcome (*)();
  const Fn fns[7] = {criterion1, criterion2, criterion3, criterion4,
                     criterion5, criterion6, criterion7};

  bool any_fail = false;
  bool any_missing = false;
  for (int c = 1; c <= 7; ++c) {
    if (only != 0 && only != c) continue;
    Outcome o = fail("not run");
    try {
      o = fns[c - 1]();
    } catch (const std::exception& e) {
      o = fail(std::string("unexpected exception: ") + e.what());
    }
    std::cout << (o.kind == Kind::pass ? "[PASS]" : "[FAIL]") << " criterion "
              << c << ": " << o.detail << '\n';
    if (o.kind == Kind::fail) any_fail = true;
    if (o.kind == Kind::missing_data) any_missing = true;
  }
  return any_fail ? 1 : any_missing ? 77 : 0;
}
