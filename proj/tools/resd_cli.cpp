#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "resd/detector.hpp"
#include "resd/evaluation.hpp"
#include "resd/io.hpp"
#include "resd/shesd.hpp"
#include "resd/synthetic.hpp"

// resd: streaming anomaly detection over univariate seasonal series.
// Subcommands: detect, bench, synth, ingest. Anomalies leave as NDJSON the
// moment a step emits them; reports and manifests go to a summary channel.

namespace {

using json = nlohmann::ordered_json;
using resd::AnomalyRecord;

std::mutex g_err_mx;

// Shortest round-trip decimal for a double (what the JSON serializer emits).
std::string num_str(double v) { return json(v).dump(); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw resd::input_error("cannot open input file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return std::move(ss).str();
}

// ---- options ---------------------------------------------------------------

struct DetectOptions {
  std::vector<std::string> inputs;
  std::string format = "csv";
  std::string detector = "resd";
  double alpha = 0.05;
  std::int64_t k = 0;
  std::int64_t window = 0;
  std::int64_t train_window = 0;
  std::int64_t period = -1;
  std::int64_t max_period = 0;
  std::string esd_mode = "sequential";
  std::int64_t refit_interval = 0;
  std::int64_t horizon = 0;
  std::string trend = "ma";
  double loess_span = 0.3;
  bool no_dedupe = false;
  std::int64_t reanchor_interval = 0;
  double max_anoms = 0.02;
  std::string labels_path;
  std::int64_t tolerance = -1;  // samples; -1 = one streaming window
  std::string out_path;
  std::string report_path;
  std::string manifest_path;
  std::string plot_path;
  std::int64_t parallel = 0;
  std::int64_t repeat = 1;  // bench
};

// ---- ingestion -------------------------------------------------------------

resd::Ingested read_ndjson_series(std::istream& in, const std::string& name) {
  resd::Ingested out;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw resd::input_error(name + ": line " + std::to_string(line_no) +
                              ": malformed JSON object");
    if (!j.contains("timestamp") || !j.contains("value"))
      throw resd::input_error(name + ": line " + std::to_string(line_no) +
                              ": expected keys 'timestamp' and 'value'");
    const json& jts = j.at("timestamp");
    std::string raw_ts;
    std::int64_t ts = 0;
    try {
      if (jts.is_string()) {
        raw_ts = jts.get<std::string>();
        ts = resd::parse_timestamp(raw_ts);
      } else if (jts.is_number_integer() || jts.is_number_unsigned()) {
        raw_ts = jts.dump();
        ts = resd::parse_timestamp(raw_ts);
      } else {
        throw resd::input_error("timestamp must be a string or integer");
      }
    } catch (const resd::input_error& e) {
      throw resd::input_error(name + ": line " + std::to_string(line_no) +
                              ": " + e.what());
    }
    const json& jv = j.at("value");
    if (!jv.is_number())
      throw resd::input_error(name + ": line " + std::to_string(line_no) +
                              ": value must be a number");
    const double v = jv.get<double>();
    if (!std::isfinite(v))
      throw resd::input_error(name + ": line " + std::to_string(line_no) +
                              ": non-finite value rejected");
    if (!out.series.timestamps.empty() && ts <= out.series.timestamps.back())
      throw resd::input_error(name + ": line " + std::to_string(line_no) +
                              ": timestamps must be strictly increasing");
    out.series.timestamps.push_back(ts);
    out.raw_ts.push_back(std::move(raw_ts));
    out.raw_value.push_back(jv.dump());
    values.push_back(v);
  }
  if (values.empty()) throw resd::input_error(name + ": empty input");
  out.series.values = Eigen::Map<const resd::ArrayX<double>>(
      values.data(), Eigen::Index(values.size()));
  return out;
}

resd::Ingested ingest_series(std::istream& in, const std::string& fmt,
                             const std::string& name) {
  return fmt == "ndjson" ? read_ndjson_series(in, name)
                         : resd::read_csv_series(in, name);
}

std::int64_t median_cadence(const std::vector<std::int64_t>& ts) {
  if (ts.size() < 2) return 0;
  std::vector<std::int64_t> d(ts.size() - 1);
  for (std::size_t i = 1; i < ts.size(); ++i) d[i - 1] = ts[i] - ts[i - 1];
  const auto mid = d.begin() + d.size() / 2;
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

// ---- output ----------------------------------------------------------------

using TsEcho = std::function<std::string(std::int64_t)>;

void write_record(std::ostream& os, const AnomalyRecord& r, const TsEcho& echo) {
  json j;
  j["ts"] = echo(r.ts);
  j["value"] = r.value;
  j["forecast"] = r.forecast;
  j["residual"] = r.residual;
  // NDJSON has no notion of infinity; SH-ESD's zero-spread windows can
  // produce an unbounded statistic, serialized as null.
  j["stat"] = std::isfinite(r.stat) ? json(r.stat) : json(nullptr);
  j["crit"] = r.crit;
  j["window_end"] = echo(r.window_end);
  os << j.dump() << '\n' << std::flush;
}

json report_json(const resd::EvalReport& rep, std::int64_t tol_samples,
                 std::int64_t tol_us, std::size_t detections,
                 std::size_t labels) {
  json j;
  j["labels"] = labels;
  j["detections"] = detections;
  j["tp"] = rep.true_positives;
  j["fp"] = rep.false_positives;
  j["fn"] = rep.false_negatives;
  j["precision"] = rep.precision;
  j["recall"] = rep.recall;
  j["f1"] = rep.f1;
  j["tolerance_samples"] = tol_samples;
  j["tolerance_us"] = tol_us;
  return j;
}

struct PlotRow {
  std::int64_t ts = 0;
  double value = 0;
  double forecast = 0;
  double residual = 0;
};

void write_plot(std::ostream& os, const std::vector<PlotRow>& rows,
                const std::vector<std::int64_t>& flagged_ts, const TsEcho& echo) {
  os << "timestamp,value,forecast,residual,flagged\n";
  for (const PlotRow& r : rows) {
    const bool flagged = std::binary_search(flagged_ts.begin(),
                                            flagged_ts.end(), r.ts);
    os << echo(r.ts) << ',' << num_str(r.value) << ',' << num_str(r.forecast)
       << ',' << num_str(r.residual) << ',' << (flagged ? 1 : 0) << '\n';
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw resd::input_error("cannot open output file: " + path);
  return f;
}

// ---- detection runs --------------------------------------------------------

resd::DetectorConfig detector_config(const DetectOptions& o, Eigen::Index window,
                                     Eigen::Index horizon) {
  resd::DetectorConfig cfg;
  cfg.window = window;
  cfg.k_max = o.k;
  cfg.alpha = o.alpha;
  cfg.period = o.period;
  cfg.max_period = o.max_period;
  cfg.esd_mode = o.esd_mode == "rosner" ? resd::EsdMode::rosner
                                        : resd::EsdMode::sequential;
  cfg.horizon = horizon;
  cfg.refit_interval = o.refit_interval;
  cfg.dedupe = !o.no_dedupe;
  cfg.reanchor_interval = o.reanchor_interval;
  cfg.trend.kind = o.trend == "loess" ? resd::TrendKind::loess
                                      : resd::TrendKind::moving_average;
  cfg.trend.loess_span = o.loess_span;
  return cfg;
}

struct ResdRun {
  resd::StreamSummary summary;
  std::vector<std::int64_t> detection_ts;
  std::vector<std::string> warnings;
  Eigen::Index refits = 0;
  Eigen::Index resolved_period = 0;
  Eigen::Index window = 0;
  Eigen::Index train_window = 0;
  Eigen::Index k = 0;
  std::vector<PlotRow> plot_rows;  // training rows then one per step
};

ResdRun run_resd_series(const DetectOptions& o, const resd::Ingested& ing,
                        const std::function<void(const AnomalyRecord&)>& emit,
                        bool want_plot) {
  const Eigen::Index n = ing.series.size();
  const Eigen::Index wprime =
      o.train_window > 0
          ? o.train_window
          : static_cast<Eigen::Index>(std::ceil(0.10 * double(n)));
  const Eigen::Index w =
      o.window > 0 ? o.window
                   : static_cast<Eigen::Index>(std::ceil(0.02 * double(n)));
  if (wprime > n)
    throw resd::input_error("training window exceeds the series length");

  const Eigen::Index horizon =
      o.horizon > 0 ? o.horizon : std::max<Eigen::Index>(n - wprime, 0);

  resd::TimedSeries train;
  train.timestamps.assign(ing.series.timestamps.begin(),
                          ing.series.timestamps.begin() + wprime);
  train.values = ing.series.values.head(wprime);

  resd::Detector det(train, detector_config(o, w, horizon));

  ResdRun run;
  run.warnings = det.warnings();
  run.resolved_period = det.model().period;
  run.window = det.config().window;
  run.train_window = det.train_length();
  run.k = det.config().k_max;
  if (want_plot) {
    run.plot_rows.reserve(static_cast<std::size_t>(n));
    const auto& resid = det.model().residuals;
    for (Eigen::Index i = 0; i < wprime; ++i)
      run.plot_rows.push_back({train.timestamps[std::size_t(i)],
                               train.values[i], train.values[i] - resid[i],
                               resid[i]});
  }

  Eigen::Index cursor = wprime;
  bool step_pending = false;
  auto source = [&]() -> std::optional<resd::SeriesPoint> {
    if (want_plot && step_pending) {
      const resd::BufferEntry& e = det.last_entry();
      run.plot_rows.push_back({e.ts, e.value, e.forecast, e.residual});
    }
    if (cursor >= n) return std::nullopt;
    step_pending = true;
    return ing.series.point(cursor++);
  };
  auto sink = [&](const AnomalyRecord& r) {
    run.detection_ts.push_back(r.ts);
    emit(r);
  };
  run.summary = resd::run_stream(det, source, sink);
  run.refits = det.refit_count();
  for (const std::string& wmsg : det.warnings())
    if (std::find(run.warnings.begin(), run.warnings.end(), wmsg) ==
        run.warnings.end())
      run.warnings.push_back(wmsg);
  return run;
}

json config_echo(const DetectOptions& o) {
  json c;
  c["detector"] = o.detector;
  c["format"] = o.format;
  c["alpha"] = o.alpha;
  if (o.detector == "shesd") {
    c["window"] = o.window;
    c["period"] = o.period;
    c["max_anoms"] = o.max_anoms;
  } else {
    c["k"] = o.k;
    c["window"] = o.window;
    c["train_window"] = o.train_window;
    c["period"] = o.period;
    c["max_period"] = o.max_period;
    c["esd_mode"] = o.esd_mode;
    c["horizon"] = o.horizon;
    c["refit_interval"] = o.refit_interval;
    c["reanchor_interval"] = o.reanchor_interval;
    c["dedupe"] = !o.no_dedupe;
    c["trend"] = o.trend;
    c["loess_span"] = o.loess_span;
  }
  c["tolerance_samples"] = o.tolerance;
  return c;
}

// One full detection pass over an already-ingested series. Returns the
// manifest; evaluation (when labels are supplied) lands in `report_out`.
json detect_on_series(const DetectOptions& o, const resd::Ingested& ing,
                      const std::string& input_name, std::uint64_t checksum,
                      std::ostream& record_out,
                      const std::vector<resd::Label>* labels,
                      std::optional<json>* report_out,
                      const std::string& plot_path) {
  const TsEcho echo = [&ing](std::int64_t us) { return ing.echo_ts(us); };

  json manifest;
  manifest["subcommand"] = "detect";
  manifest["detector"] = o.detector;
  manifest["input"] = input_name;
  manifest["rows"] = ing.series.size();
  manifest["checksum_fnv1a64"] = hex64(checksum);
  manifest["config"] = config_echo(o);

  std::vector<std::int64_t> detections;
  std::vector<std::string> warnings;
  Eigen::Index tol_default = 0;

  if (o.detector == "shesd") {
    resd::ShesdConfig cfg;
    cfg.window = o.window;
    cfg.period = o.period > 0 ? o.period : 0;
    cfg.alpha = o.alpha;
    cfg.max_anoms = o.max_anoms;
    const auto t0 = std::chrono::steady_clock::now();
    const resd::ShesdOutcome out = resd::run_shesd(ing.series, cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    for (const AnomalyRecord& r : out.records) {
      detections.push_back(r.ts);
      write_record(record_out, r, echo);
    }
    warnings = out.warnings;
    tol_default = cfg.window > 0 ? cfg.window : ing.series.size();
    manifest["records"] = out.records.size();
    manifest["windows_processed"] = out.windows_processed;
    manifest["zero_variance_windows"] = out.zero_variance_windows;
    manifest["timing"] = {{"total_seconds", secs}};
  } else {
    const ResdRun run = run_resd_series(
        o, ing, [&](const AnomalyRecord& r) { write_record(record_out, r, echo); },
        !plot_path.empty());
    detections = run.detection_ts;
    warnings = run.warnings;
    tol_default = run.window;
    manifest["config"]["resolved_window"] = run.window;
    manifest["config"]["resolved_train_window"] = run.train_window;
    manifest["config"]["resolved_k"] = run.k;
    manifest["config"]["resolved_period"] = run.resolved_period;
    manifest["steps"] = run.summary.steps;
    manifest["records"] = run.summary.records;
    manifest["flagged_steps"] = run.summary.flagged_steps;
    manifest["refits"] = run.refits;
    manifest["timing"] = {
        {"total_seconds", run.summary.total_seconds},
        {"mean_step_seconds", run.summary.mean_step_seconds},
        {"min_step_seconds", run.summary.min_step_seconds},
        {"max_step_seconds", run.summary.max_step_seconds},
        {"steps_per_second", run.summary.total_seconds > 0
                                 ? double(run.summary.steps) /
                                       run.summary.total_seconds
                                 : 0.0}};
    if (!plot_path.empty()) {
      std::ofstream pf = open_out(plot_path);
      std::vector<std::int64_t> flagged = detections;
      std::sort(flagged.begin(), flagged.end());
      write_plot(pf, run.plot_rows, flagged, echo);
    }
  }
  manifest["warnings"] = warnings;

  for (const std::string& wmsg : warnings) {
    std::lock_guard<std::mutex> lk(g_err_mx);
    std::cerr << "warning: " << input_name << ": " << wmsg << '\n';
  }

  if (labels) {
    const std::int64_t tol_samples =
        o.tolerance >= 0 ? o.tolerance : tol_default;
    const std::int64_t tol_us =
        tol_samples * median_cadence(ing.series.timestamps);
    const resd::EvalReport rep = resd::score(detections, *labels, tol_us);
    *report_out = report_json(rep, tol_samples, tol_us, detections.size(),
                              labels->size());
  }
  return manifest;
}

// ---- detect command --------------------------------------------------------

struct SinkPaths {
  std::string records;   // empty = stdout
  std::string report;    // empty = stderr only
  std::string manifest;  // empty = stderr only
  std::string plot;      // empty = none
};

void emit_summaries(const json& manifest, const std::optional<json>& report,
                    const SinkPaths& paths) {
  if (report) {
    if (!paths.report.empty()) {
      std::ofstream f = open_out(paths.report);
      f << report->dump(2) << '\n';
    }
    std::lock_guard<std::mutex> lk(g_err_mx);
    std::cerr << report->dump() << '\n';
  }
  if (!paths.manifest.empty()) {
    std::ofstream f = open_out(paths.manifest);
    f << manifest.dump(2) << '\n';
  } else {
    std::lock_guard<std::mutex> lk(g_err_mx);
    std::cerr << manifest.dump() << '\n';
  }
}

void detect_one_file(const DetectOptions& o, const std::string& path,
                     const std::vector<resd::Label>* labels,
                     const SinkPaths& paths) {
  const std::string bytes = slurp(path);
  const std::uint64_t checksum = resd::fnv1a64(bytes);
  std::istringstream ss(bytes);
  const resd::Ingested ing = ingest_series(ss, o.format, path);

  std::optional<json> report;
  json manifest;
  if (!paths.records.empty()) {
    std::ofstream out = open_out(paths.records);
    manifest = detect_on_series(o, ing, path, checksum, out, labels, &report,
                                paths.plot);
  } else {
    manifest = detect_on_series(o, ing, path, checksum, std::cout, labels,
                                &report, paths.plot);
  }
  emit_summaries(manifest, report, paths);
}

// Streaming stdin path: each record is written (and flushed) before the next
// input line is read, so a paced producer sees flags as they happen.
int detect_stdin(const DetectOptions& o,
                 const std::vector<resd::Label>* labels) {
  if (o.detector == "shesd") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    const std::string bytes = std::move(buf).str();
    std::istringstream ss(bytes);
    const resd::Ingested ing = ingest_series(ss, o.format, "stdin");
    std::optional<json> report;
    SinkPaths paths{o.out_path, o.report_path, o.manifest_path, o.plot_path};
    json manifest;
    if (!paths.records.empty()) {
      std::ofstream out = open_out(paths.records);
      manifest = detect_on_series(o, ing, "stdin", resd::fnv1a64(bytes), out,
                                  labels, &report, paths.plot);
    } else {
      manifest = detect_on_series(o, ing, "stdin", resd::fnv1a64(bytes),
                                  std::cout, labels, &report, paths.plot);
    }
    emit_summaries(manifest, report, paths);
    return 0;
  }

  if (o.window <= 0 || o.train_window <= 0)
    throw resd::config_error(
        "detect: --window and --train-window are required when reading from stdin");

  std::uint64_t fnv = 1469598103934665603ull;
  auto absorb = [&fnv](const std::string& line) {
    for (const char c : line) {
      fnv ^= static_cast<unsigned char>(c);
      fnv *= 1099511628211ull;
    }
    fnv ^= static_cast<unsigned char>('\n');
    fnv *= 1099511628211ull;
  };

  // Rolling timestamp echo: the detector never references anything older
  // than the training prefix plus one window.
  const std::size_t echo_cap =
      static_cast<std::size_t>(o.train_window + o.window + 2);
  std::deque<std::pair<std::int64_t, std::string>> echo_buf;
  const TsEcho echo = [&echo_buf](std::int64_t us) {
    const auto it = std::lower_bound(
        echo_buf.begin(), echo_buf.end(), us,
        [](const auto& p, std::int64_t v) { return p.first < v; });
    if (it != echo_buf.end() && it->first == us) return it->second;
    return resd::format_timestamp(us);
  };
  auto remember = [&](std::int64_t us, std::string raw) {
    echo_buf.emplace_back(us, std::move(raw));
    if (echo_buf.size() > echo_cap) echo_buf.pop_front();
  };

  std::string line;
  std::size_t line_no = 0;
  if (o.format == "csv") {
    if (!std::getline(std::cin, line))
      throw resd::input_error("stdin: empty input");
    ++line_no;
    absorb(line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp,value")
      throw resd::input_error("stdin: header must be exactly 'timestamp,value'");
  }

  auto next_point = [&]() -> std::optional<resd::SeriesPoint> {
    while (std::getline(std::cin, line)) {
      ++line_no;
      absorb(line);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::int64_t ts = 0;
      double value = 0;
      std::string raw_ts;
      if (o.format == "csv") {
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos ||
            line.find(',', comma + 1) != std::string::npos)
          throw resd::input_error(
              "stdin: line " + std::to_string(line_no) +
              ": expected exactly two comma-separated fields");
        raw_ts = line.substr(0, comma);
        try {
          ts = resd::parse_timestamp(raw_ts);
        } catch (const resd::input_error& e) {
          throw resd::input_error("stdin: line " + std::to_string(line_no) +
                                  ": " + e.what());
        }
        if (!resd::detail::parse_value(
                std::string_view(line).substr(comma + 1), value))
          throw resd::input_error("stdin: line " + std::to_string(line_no) +
                                  ": malformed value field");
      } else {
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("timestamp") ||
            !j.contains("value") || !j.at("value").is_number())
          throw resd::input_error("stdin: line " + std::to_string(line_no) +
                                  ": malformed NDJSON record");
        const json& jts = j.at("timestamp");
        raw_ts = jts.is_string() ? jts.get<std::string>() : jts.dump();
        try {
          ts = resd::parse_timestamp(raw_ts);
        } catch (const resd::input_error& e) {
          throw resd::input_error("stdin: line " + std::to_string(line_no) +
                                  ": " + e.what());
        }
        value = j.at("value").get<double>();
      }
      if (!std::isfinite(value))
        throw resd::input_error("stdin: line " + std::to_string(line_no) +
                                ": non-finite value rejected");
      remember(ts, std::move(raw_ts));
      return resd::SeriesPoint{ts, value};
    }
    return std::nullopt;
  };

  resd::TimedSeries train;
  std::vector<double> train_values;
  while (Eigen::Index(train_values.size()) < o.train_window) {
    const std::optional<resd::SeriesPoint> pt = next_point();
    if (!pt)
      throw resd::input_error(
          "stdin: insufficient data for the training window");
    if (!train.timestamps.empty() && pt->ts <= train.timestamps.back())
      throw resd::input_error("stdin: line " + std::to_string(line_no) +
                              ": timestamps must be strictly increasing");
    train.timestamps.push_back(pt->ts);
    train_values.push_back(pt->value);
  }
  train.values = Eigen::Map<const resd::ArrayX<double>>(
      train_values.data(), Eigen::Index(train_values.size()));

  resd::Detector det(train, detector_config(o, o.window, o.horizon));
  for (const std::string& wmsg : det.warnings())
    std::cerr << "warning: stdin: " << wmsg << '\n';

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!o.out_path.empty()) {
    out_file = open_out(o.out_path);
    out = &out_file;
  }

  std::vector<std::int64_t> detections;
  std::vector<PlotRow> plot_rows;
  const bool want_plot = !o.plot_path.empty();
  if (want_plot) {
    const auto& resid = det.model().residuals;
    for (Eigen::Index i = 0; i < o.train_window; ++i)
      plot_rows.push_back({train.timestamps[std::size_t(i)], train.values[i],
                           train.values[i] - resid[i], resid[i]});
  }

  bool step_pending = false;
  auto source = [&]() -> std::optional<resd::SeriesPoint> {
    if (want_plot && step_pending) {
      const resd::BufferEntry& e = det.last_entry();
      plot_rows.push_back({e.ts, e.value, e.forecast, e.residual});
    }
    const auto pt = next_point();
    step_pending = pt.has_value();
    return pt;
  };
  auto sink = [&](const AnomalyRecord& r) {
    detections.push_back(r.ts);
    write_record(*out, r, echo);
  };
  const resd::StreamSummary summary = resd::run_stream(det, source, sink);

  if (want_plot) {
    if (step_pending) {
      const resd::BufferEntry& e = det.last_entry();
      plot_rows.push_back({e.ts, e.value, e.forecast, e.residual});
    }
    std::ofstream pf = open_out(o.plot_path);
    std::vector<std::int64_t> flagged = detections;
    std::sort(flagged.begin(), flagged.end());
    write_plot(pf, plot_rows, flagged, echo);
  }

  json manifest;
  manifest["subcommand"] = "detect";
  manifest["detector"] = o.detector;
  manifest["input"] = "stdin";
  manifest["rows"] = o.train_window + summary.steps;
  manifest["checksum_fnv1a64"] = hex64(fnv);
  manifest["config"] = config_echo(o);
  manifest["config"]["resolved_window"] = det.config().window;
  manifest["config"]["resolved_train_window"] = det.train_length();
  manifest["config"]["resolved_k"] = det.config().k_max;
  manifest["config"]["resolved_period"] = det.model().period;
  manifest["steps"] = summary.steps;
  manifest["records"] = summary.records;
  manifest["flagged_steps"] = summary.flagged_steps;
  manifest["refits"] = det.refit_count();
  manifest["timing"] = {{"total_seconds", summary.total_seconds},
                        {"mean_step_seconds", summary.mean_step_seconds},
                        {"min_step_seconds", summary.min_step_seconds},
                        {"max_step_seconds", summary.max_step_seconds}};
  manifest["warnings"] = det.warnings();

  std::optional<json> report;
  if (labels) {
    const std::int64_t tol_samples =
        o.tolerance >= 0 ? o.tolerance : o.window;
    const std::int64_t tol_us = tol_samples * median_cadence(train.timestamps);
    const resd::EvalReport rep = resd::score(detections, *labels, tol_us);
    report =
        report_json(rep, tol_samples, tol_us, detections.size(), labels->size());
  }
  emit_summaries(manifest, report,
                 SinkPaths{"", o.report_path, o.manifest_path, ""});
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const resd::config_error*>(&e)) return 2;
  if (dynamic_cast<const resd::input_error*>(&e)) return 3;
  return 4;
}

int cmd_detect(const DetectOptions& o) {
  if (o.detector == "shesd" && !o.plot_path.empty())
    throw resd::config_error(
        "--plot-data requires the streaming detector (--detector resd)");
  std::optional<std::vector<resd::Label>> labels;
  if (!o.labels_path.empty()) labels = resd::read_labels(o.labels_path);
  const std::vector<resd::Label>* labels_ptr =
      labels ? &*labels : nullptr;

  const bool from_stdin =
      o.inputs.empty() || (o.inputs.size() == 1 && o.inputs[0] == "-");
  if (from_stdin) {
    if (o.parallel > 0)
      throw resd::config_error("--parallel-series requires file inputs");
    return detect_stdin(o, labels_ptr);
  }

  if (o.inputs.size() == 1) {
    detect_one_file(o, o.inputs[0], labels_ptr,
                    SinkPaths{o.out_path, o.report_path, o.manifest_path,
                              o.plot_path});
    return 0;
  }

  // Multiple inputs: per-file outputs under --out, sequential or sharded.
  if (!o.report_path.empty() || !o.manifest_path.empty() ||
      !o.plot_path.empty())
    throw resd::config_error(
        "with multiple inputs, reports and manifests are written per file "
        "into the --out directory");
  if (o.parallel > 0 && o.out_path.empty())
    throw resd::config_error("--parallel-series requires --out <directory>");

  std::vector<SinkPaths> paths(o.inputs.size());
  if (!o.out_path.empty()) {
    std::filesystem::create_directories(o.out_path);
    std::vector<std::string> stems;
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
      const std::string stem = std::filesystem::path(o.inputs[i]).stem().string();
      if (std::find(stems.begin(), stems.end(), stem) != stems.end())
        throw resd::config_error("duplicate input basename: " + stem);
      stems.push_back(stem);
      const std::string base = (std::filesystem::path(o.out_path) / stem).string();
      paths[i].records = base + ".ndjson";
      paths[i].manifest = base + ".manifest.json";
      if (labels_ptr) paths[i].report = base + ".report.json";
    }
  }

  if (o.parallel <= 1) {
    for (std::size_t i = 0; i < o.inputs.size(); ++i)
      detect_one_file(o, o.inputs[i], labels_ptr, paths[i]);
    return 0;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> worst{0};
  const std::size_t n_workers =
      std::min<std::size_t>(std::size_t(o.parallel), o.inputs.size());
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t t = 0; t < n_workers; ++t) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < o.inputs.size();
           i = next.fetch_add(1)) {
        try {
          detect_one_file(o, o.inputs[i], labels_ptr, paths[i]);
        } catch (const std::exception& e) {
          const int code = exit_code_for(e);
          int cur = worst.load();
          while (cur < code && !worst.compare_exchange_weak(cur, code)) {
          }
          std::lock_guard<std::mutex> lk(g_err_mx);
          std::cerr << "error: " << o.inputs[i] << ": " << e.what() << '\n';
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  return worst.load();
}

// ---- bench -----------------------------------------------------------------

int cmd_bench(const DetectOptions& o) {
  if (o.repeat < 1)
    throw resd::config_error("bench: --repeat must be at least 1");
  if (o.inputs.size() != 1 || o.inputs[0] == "-")
    throw resd::config_error("bench: exactly one file input is required");

  const std::string bytes = slurp(o.inputs[0]);
  const std::uint64_t checksum = resd::fnv1a64(bytes);

  json manifest;
  manifest["subcommand"] = "bench";
  manifest["detector"] = o.detector;
  manifest["input"] = o.inputs[0];
  manifest["repeats"] = o.repeat;
  manifest["checksum_fnv1a64"] = hex64(checksum);
  manifest["config"] = config_echo(o);

  std::vector<std::string> first_records;
  bool identical = true;
  json timings = json::array();
  double total_wall = 0;
  Eigen::Index records = 0;

  for (std::int64_t rep = 0; rep < o.repeat; ++rep) {
    std::istringstream ss(bytes);
    const resd::Ingested ing = ingest_series(ss, o.format, o.inputs[0]);
    const TsEcho echo = [&ing](std::int64_t us) { return ing.echo_ts(us); };
    std::vector<std::string> lines;
    std::ostringstream sink_buf;

    if (o.detector == "shesd") {
      resd::ShesdConfig cfg;
      cfg.window = o.window;
      cfg.period = o.period > 0 ? o.period : 0;
      cfg.alpha = o.alpha;
      cfg.max_anoms = o.max_anoms;
      const auto t0 = std::chrono::steady_clock::now();
      const resd::ShesdOutcome out = resd::run_shesd(ing.series, cfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      for (const AnomalyRecord& r : out.records) {
        std::ostringstream one;
        write_record(one, r, echo);
        lines.push_back(std::move(one).str());
      }
      timings.push_back({{"total_seconds", secs}});
      total_wall += secs;
      records = Eigen::Index(out.records.size());
    } else {
      const ResdRun run = run_resd_series(
          o, ing,
          [&](const AnomalyRecord& r) {
            std::ostringstream one;
            write_record(one, r, echo);
            lines.push_back(std::move(one).str());
          },
          false);
      timings.push_back({{"total_seconds", run.summary.total_seconds},
                         {"mean_step_seconds", run.summary.mean_step_seconds},
                         {"min_step_seconds", run.summary.min_step_seconds},
                         {"max_step_seconds", run.summary.max_step_seconds},
                         {"steps", run.summary.steps}});
      total_wall += run.summary.total_seconds;
      records = run.summary.records;
      if (rep == 0) manifest["config"]["resolved_period"] = run.resolved_period;
    }
    if (rep == 0)
      first_records = std::move(lines);
    else if (lines != first_records)
      identical = false;
  }

  manifest["records"] = records;
  manifest["outputs_identical"] = identical;
  manifest["timing_per_repeat"] = timings;
  manifest["total_detection_seconds"] = total_wall;
  std::cout << manifest.dump(2) << '\n';
  if (!o.manifest_path.empty()) {
    std::ofstream f = open_out(o.manifest_path);
    f << manifest.dump(2) << '\n';
  }
  return identical ? 0 : 4;
}

// ---- synth -----------------------------------------------------------------

struct SynthOptions {
  std::int64_t n = 1680;
  std::int64_t period = 24;
  double amplitude = 10;
  double level = 100;
  double slope = 0;
  double noise_sd = 1;
  double second_harmonic = 0;
  std::int64_t outliers = 0;
  double outlier_min_sigma = 4;
  double outlier_max_sigma = 8;
  std::int64_t outlier_start = 0;
  std::int64_t outlier_min_gap = 1;
  std::int64_t start_us = 1356998400000000;
  std::int64_t cadence_us = 3600000000;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string labels_out;
};

int cmd_synth(const SynthOptions& s) {
  resd::SeasonalSpec spec;
  spec.n = s.n;
  spec.period = s.period;
  spec.amplitude = s.amplitude;
  spec.level = s.level;
  spec.slope = s.slope;
  spec.noise_sd = s.noise_sd;
  spec.second_harmonic = s.second_harmonic;
  spec.n_outliers = s.outliers;
  spec.outlier_min_sigma = s.outlier_min_sigma;
  spec.outlier_max_sigma = s.outlier_max_sigma;
  spec.outlier_start = s.outlier_start;
  spec.outlier_min_gap = s.outlier_min_gap;
  spec.t0 = s.start_us;
  spec.cadence = s.cadence_us;
  spec.seed = s.seed;
  const resd::SyntheticSeries made = resd::make_seasonal(spec);

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!s.out_path.empty()) {
    out_file = open_out(s.out_path);
    out = &out_file;
  }
  *out << "timestamp,value\n";
  for (Eigen::Index i = 0; i < made.series.size(); ++i)
    *out << resd::format_timestamp(made.series.timestamps[std::size_t(i)])
         << ',' << num_str(made.series.values[i]) << '\n';

  if (!s.labels_out.empty()) {
    std::ofstream lf = open_out(s.labels_out);
    lf << "timestamp\n";
    for (const std::int64_t ts : made.outlier_ts)
      lf << resd::format_timestamp(ts) << '\n';
  }
  std::cerr << "synth: " << made.series.size() << " rows, "
            << made.outlier_ts.size() << " injected outliers, seed "
            << spec.seed << '\n';
  return 0;
}

// ---- ingest ----------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& fmt,
               const std::string& out_path) {
  std::string bytes;
  std::string name;
  if (inputs.empty() || (inputs.size() == 1 && inputs[0] == "-")) {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    bytes = std::move(buf).str();
    name = "stdin";
  } else if (inputs.size() == 1) {
    bytes = slurp(inputs[0]);
    name = inputs[0];
  } else {
    throw resd::config_error("ingest: at most one input");
  }
  std::istringstream ss(bytes);
  const resd::Ingested ing = ingest_series(ss, fmt, name);

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    out_file = open_out(out_path);
    out = &out_file;
  }
  resd::write_csv_series(ing, *out);
  std::cerr << "ingest: " << ing.series.size() << " rows, span "
            << resd::format_timestamp(ing.series.timestamps.front()) << " .. "
            << resd::format_timestamp(ing.series.timestamps.back())
            << ", checksum " << hex64(resd::fnv1a64(bytes)) << '\n';
  return 0;
}

void add_detect_options(CLI::App* cmd, DetectOptions& o) {
  cmd->add_option("inputs", o.inputs,
                  "Input series files ('-' or none reads stdin)");
  cmd->add_option("--format", o.format, "Input format")
      ->check(CLI::IsMember({"csv", "ndjson"}))
      ->capture_default_str();
  cmd->add_option("--detector", o.detector, "Detection algorithm")
      ->check(CLI::IsMember({"resd", "shesd"}))
      ->capture_default_str();
  cmd->add_option("--alpha", o.alpha, "Test significance level")
      ->capture_default_str();
  cmd->add_option("--k", o.k,
                  "Max anomalies tested per window (0 = ceil(0.02 w))");
  cmd->add_option("--window", o.window,
                  "Streaming window w, in samples (0 = ceil(0.02 N); for "
                  "shesd, the batch length, 0 = whole series)");
  cmd->add_option("--train-window", o.train_window,
                  "Training prefix w', in samples (0 = ceil(0.10 N))");
  cmd->add_option("--period", o.period,
                  "Seasonal period (-1 auto, 0 none, >= 2 fixed)")
      ->capture_default_str();
  cmd->add_option("--max-period", o.max_period,
                  "Period search bound for --period -1 (0 = w'/2)");
  cmd->add_option("--esd-mode", o.esd_mode,
                  "Stop at the first surviving round (sequential) or flag "
                  "through the last rejection (rosner)")
      ->check(CLI::IsMember({"sequential", "rosner"}))
      ->capture_default_str();
  cmd->add_option("--refit-interval", o.refit_interval,
                  "Steps between model refits (0 = never)");
  cmd->add_option("--horizon", o.horizon,
                  "Forecast steps per fit (0 = remaining input)");
  cmd->add_option("--trend", o.trend, "Trend smoother")
      ->check(CLI::IsMember({"ma", "loess"}))
      ->capture_default_str();
  cmd->add_option("--loess-span", o.loess_span,
                  "LOESS span as a fraction of the training window")
      ->capture_default_str();
  cmd->add_flag("--no-dedupe", o.no_dedupe,
                "Report a timestamp every step its window flags it");
  cmd->add_option("--reanchor-interval", o.reanchor_interval,
                  "Slides between fresh window-statistic rebuilds (0 = off)");
  cmd->add_option("--max-anoms", o.max_anoms,
                  "shesd: max fraction of each window flagged")
      ->capture_default_str();
  cmd->add_option("--labels", o.labels_path,
                  "Ground-truth labels CSV for evaluation");
  cmd->add_option("--tolerance", o.tolerance,
                  "Match tolerance in samples (-1 = one window)")
      ->capture_default_str();
  cmd->add_option("--out", o.out_path,
                  "Record output path (directory with multiple inputs)");
  cmd->add_option("--report", o.report_path, "Write the evaluation report here");
  cmd->add_option("--manifest", o.manifest_path, "Write the run manifest here");
  cmd->add_option("--plot-data", o.plot_path,
                  "Write per-point plot CSV here (resd only)");
  cmd->add_option("--parallel-series", o.parallel,
                  "Shard multiple input files across this many workers");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "resd: streaming anomaly detection for univariate seasonal series"};
  app.require_subcommand(1);

  DetectOptions det_opts;
  CLI::App* detect = app.add_subcommand(
      "detect", "Run a detector over series files or stdin");
  add_detect_options(detect, det_opts);

  DetectOptions bench_opts;
  CLI::App* bench = app.add_subcommand(
      "bench", "Run detection repeatedly and report per-step timing");
  add_detect_options(bench, bench_opts);
  bench->add_option("--repeat", bench_opts.repeat, "Number of repeats")
      ->capture_default_str();

  SynthOptions synth_opts;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a seasonal series with injected outliers");
  synth->add_option("--n", synth_opts.n, "Series length")->capture_default_str();
  synth->add_option("--period", synth_opts.period, "Seasonal period")
      ->capture_default_str();
  synth->add_option("--amplitude", synth_opts.amplitude, "Seasonal amplitude")
      ->capture_default_str();
  synth->add_option("--level", synth_opts.level, "Base level")
      ->capture_default_str();
  synth->add_option("--slope", synth_opts.slope, "Linear trend per sample")
      ->capture_default_str();
  synth->add_option("--noise-sd", synth_opts.noise_sd, "Gaussian noise sigma")
      ->capture_default_str();
  synth->add_option("--second-harmonic", synth_opts.second_harmonic,
                    "Amplitude of a half-period component")
      ->capture_default_str();
  synth->add_option("--outliers", synth_opts.outliers,
                    "Number of outliers to inject")
      ->capture_default_str();
  synth->add_option("--outlier-min-sigma", synth_opts.outlier_min_sigma,
                    "Smallest outlier magnitude, in noise sigmas")
      ->capture_default_str();
  synth->add_option("--outlier-max-sigma", synth_opts.outlier_max_sigma,
                    "Largest outlier magnitude, in noise sigmas")
      ->capture_default_str();
  synth->add_option("--outlier-start", synth_opts.outlier_start,
                    "First index eligible for injection")
      ->capture_default_str();
  synth->add_option("--outlier-min-gap", synth_opts.outlier_min_gap,
                    "Minimum index gap between outliers")
      ->capture_default_str();
  synth->add_option("--start-us", synth_opts.start_us,
                    "First timestamp, microseconds since epoch")
      ->capture_default_str();
  synth->add_option("--cadence-us", synth_opts.cadence_us,
                    "Sample spacing in microseconds")
      ->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "RNG seed")
      ->envname("RESD_SEED")
      ->capture_default_str();
  synth->add_option("--out", synth_opts.out_path, "Series CSV path");
  synth->add_option("--labels-out", synth_opts.labels_out,
                    "Write injected-outlier labels CSV here");

  std::vector<std::string> ingest_inputs;
  std::string ingest_format = "csv";
  std::string ingest_out;
  CLI::App* ingest = app.add_subcommand(
      "ingest", "Validate a series file and round-trip it to CSV");
  ingest->add_option("inputs", ingest_inputs, "Input file ('-' reads stdin)");
  ingest->add_option("--format", ingest_format, "Input format")
      ->check(CLI::IsMember({"csv", "ndjson"}))
      ->capture_default_str();
  ingest->add_option("--out", ingest_out, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(detect)) return cmd_detect(det_opts);
    if (app.got_subcommand(bench)) return cmd_bench(bench_opts);
    if (app.got_subcommand(synth)) return cmd_synth(synth_opts);
    if (app.got_subcommand(ingest))
      return cmd_ingest(ingest_inputs, ingest_format, ingest_out);
  } catch (const resd::config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const resd::input_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const resd::stream_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
