#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "resd/errors.hpp"
#include "resd/evaluation.hpp"
#include "resd/series.hpp"

// File formats: CSV with header `timestamp,value`, NDJSON with keys
// `timestamp`/`value`, label files, and the timestamp conversions they share.
// Raw field strings are preserved so an ingest-export cycle is byte-identical.

namespace resd {

// ---- timestamps ------------------------------------------------------------

namespace detail {

inline bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] =
      std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_fixed_uint(std::string_view s, std::size_t pos,
                             std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    const char c = s[i];
    if (c < '0' || c > '9') return false;
    out = out * 10 + (c - '0');
  }
  return true;
}

}  // namespace detail

// Accepts integer epoch seconds, or ISO-8601 "YYYY-MM-DD HH:MM:SS" with an
// optional 'T' separator, fractional seconds, and trailing 'Z'. UTC assumed.
// Returns microseconds since the epoch.
inline std::int64_t parse_timestamp(std::string_view s) {
  if (std::int64_t secs = 0; detail::parse_int(s, secs)) {
    constexpr std::int64_t bound = std::numeric_limits<std::int64_t>::max() / 1000000;
    if (secs > bound || secs < -bound)
      throw input_error("timestamp out of range: " + std::string(s));
    return secs * 1000000;
  }

  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  const bool shape_ok =
      s.size() >= 19 && detail::parse_fixed_uint(s, 0, 4, y) && s[4] == '-' &&
      detail::parse_fixed_uint(s, 5, 2, mo) && s[7] == '-' &&
      detail::parse_fixed_uint(s, 8, 2, d) && (s[10] == ' ' || s[10] == 'T') &&
      detail::parse_fixed_uint(s, 11, 2, h) && s[13] == ':' &&
      detail::parse_fixed_uint(s, 14, 2, mi) && s[16] == ':' &&
      detail::parse_fixed_uint(s, 17, 2, sec);
  if (!shape_ok) throw input_error("unrecognized timestamp: " + std::string(s));

  std::int64_t frac_us = 0;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::int64_t scale = 100000;
    std::size_t digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 6) frac_us += (s[pos] - '0') * scale;
      scale /= 10;
      ++digits;
      ++pos;
    }
    if (digits == 0) throw input_error("unrecognized timestamp: " + std::string(s));
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) throw input_error("unrecognized timestamp: " + std::string(s));

  const std::chrono::year_month_day ymd{std::chrono::year(y),
                                        std::chrono::month(unsigned(mo)),
                                        std::chrono::day(unsigned(d))};
  if (!ymd.ok()) throw input_error("invalid calendar date: " + std::string(s));
  if (h > 23 || mi > 59 || sec > 60)
    throw input_error("invalid time of day: " + std::string(s));

  const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
  return ((std::int64_t(days) * 24 + h) * 60 + mi) * 60000000 +
         std::int64_t(sec) * 1000000 + frac_us;
}

inline std::string format_timestamp(std::int64_t us) {
  std::int64_t secs = us / 1000000;
  std::int64_t frac = us % 1000000;
  if (frac < 0) {
    frac += 1000000;
    secs -= 1;
  }
  const std::chrono::sys_days days{
      std::chrono::floor<std::chrono::days>(std::chrono::seconds(secs))};
  const std::chrono::year_month_day ymd(days);
  std::int64_t rem = secs - std::chrono::seconds(days.time_since_epoch()).count();
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02lld:%02lld:%02lld",
                int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
                static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  std::string out(buf);
  if (frac != 0) {
    std::snprintf(buf, sizeof(buf), ".%06lld", static_cast<long long>(frac));
    out += buf;
    while (out.back() == '0') out.pop_back();
  }
  return out;
}

// ---- ingestion -------------------------------------------------------------

struct Ingested {
  TimedSeries series;
  std::vector<std::string> raw_ts;     // verbatim timestamp fields
  std::vector<std::string> raw_value;  // verbatim value fields
  bool crlf = false;
  bool final_newline = true;

  // Raw timestamp string for an epoch-microsecond value, when it came from
  // this input; falls back to canonical formatting.
  std::string echo_ts(std::int64_t us) const {
    const auto it = std::lower_bound(series.timestamps.begin(),
                                     series.timestamps.end(), us);
    if (it != series.timestamps.end() && *it == us)
      return raw_ts[static_cast<std::size_t>(it - series.timestamps.begin())];
    return format_timestamp(us);
  }
};

namespace detail {

inline bool parse_value(std::string_view s, double& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline void append_row(Ingested& out, std::string_view ts_field,
                       std::string_view value_field, std::size_t line_no,
                       std::vector<double>& values) {
  std::int64_t ts;
  try {
    ts = parse_timestamp(ts_field);
  } catch (const input_error& e) {
    throw input_error("line " + std::to_string(line_no) + ": " + e.what());
  }
  double v = 0;
  if (!parse_value(value_field, v))
    throw input_error("line " + std::to_string(line_no) +
                      ": malformed value field '" + std::string(value_field) + "'");
  if (!std::isfinite(v))
    throw input_error("line " + std::to_string(line_no) +
                      ": non-finite value rejected");
  if (!out.series.timestamps.empty() && ts <= out.series.timestamps.back())
    throw input_error("line " + std::to_string(line_no) +
                      ": timestamps must be strictly increasing");
  out.series.timestamps.push_back(ts);
  out.raw_ts.emplace_back(ts_field);
  out.raw_value.emplace_back(value_field);
  values.push_back(v);
}

}  // namespace detail

inline Ingested read_csv_series(std::istream& in, const std::string& name) {
  Ingested out;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  bool last_line_had_newline = true;

  while (std::getline(in, line)) {
    ++line_no;
    last_line_had_newline = !in.eof();
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
      if (line_no == 1) out.crlf = true;
    }
    if (!saw_header) {
      if (line != "timestamp,value")
        throw input_error(name + ": header must be exactly 'timestamp,value'");
      saw_header = true;
      continue;
    }
    if (line.empty() && in.eof()) break;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos ||
        line.find(',', comma + 1) != std::string::npos)
      throw input_error(name + ": line " + std::to_string(line_no) +
                        ": expected exactly two comma-separated fields");
    detail::append_row(out, std::string_view(line).substr(0, comma),
                       std::string_view(line).substr(comma + 1), line_no, values);
  }
  if (!saw_header) throw input_error(name + ": empty input");
  if (values.empty()) throw input_error(name + ": no data rows");
  out.final_newline = last_line_had_newline;
  out.series.values =
      Eigen::Map<const ArrayX<double>>(values.data(), Eigen::Index(values.size()));
  return out;
}

inline Ingested read_csv_series(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open input file: " + path);
  return read_csv_series(f, path);
}

inline void write_csv_series(const Ingested& in, std::ostream& out) {
  const char* eol = in.crlf ? "\r\n" : "\n";
  out << "timestamp,value" << eol;
  for (std::size_t i = 0; i < in.raw_ts.size(); ++i) {
    out << in.raw_ts[i] << ',' << in.raw_value[i];
    if (i + 1 < in.raw_ts.size() || in.final_newline) out << eol;
  }
}

// Labels: CSV with header `timestamp` (point labels) or `start,end` (ranges).
inline std::vector<Label> read_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open labels file: " + path);
  std::vector<Label> labels;
  std::string line;
  std::size_t line_no = 0;
  bool ranges = false;
  bool saw_header = false;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!saw_header) {
      if (line == "timestamp") {
        ranges = false;
      } else if (line == "start,end") {
        ranges = true;
      } else {
        throw input_error(path + ": labels header must be 'timestamp' or 'start,end'");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    try {
      if (ranges) {
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
          throw input_error("expected two comma-separated fields");
        const std::int64_t a =
            parse_timestamp(std::string_view(line).substr(0, comma));
        const std::int64_t b =
            parse_timestamp(std::string_view(line).substr(comma + 1));
        labels.push_back({a, b});
      } else {
        const std::int64_t t = parse_timestamp(line);
        labels.push_back({t, t});
      }
    } catch (const input_error& e) {
      throw input_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!saw_header) throw input_error(path + ": empty labels file");
  std::sort(labels.begin(), labels.end(),
            [](const Label& x, const Label& y) { return x.start < y.start; });
  return labels;
}

// 64-bit FNV-1a over raw bytes; the manifest's dataset checksum.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace resd
