#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "resd/io.hpp"

using resd::format_timestamp;
using resd::parse_timestamp;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& contents) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("resd_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++) + ".csv");
    std::ofstream f(path, std::ios::binary);
    f << contents;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

std::string rewrite(const std::string& csv) {
  std::istringstream in(csv);
  const resd::Ingested ing = resd::read_csv_series(in, "test");
  std::ostringstream out;
  resd::write_csv_series(ing, out);
  return out.str();
}

}  // namespace

TEST_CASE("timestamps parse from epoch seconds and ISO text") {
  CHECK(parse_timestamp("0") == 0);
  CHECK(parse_timestamp("1356998400") == 1356998400000000);
  CHECK(parse_timestamp("-10") == -10000000);
  CHECK(parse_timestamp("1970-01-01 00:00:00") == 0);
  CHECK(parse_timestamp("1970-01-02T00:00:00Z") == 86400000000);
  CHECK(parse_timestamp("2013-01-01 00:00:00") == 1356998400000000);
  CHECK(parse_timestamp("1970-01-01 00:00:00.000001") == 1);
  CHECK(parse_timestamp("1970-01-01 00:00:00.1") == 100000);
  CHECK(parse_timestamp("1970-01-01 00:00:00.1234567") == 123456);
  CHECK(parse_timestamp("1969-12-31 23:59:58.5") == -1500000);
  CHECK(parse_timestamp("2013-12-02 21:15:00") ==
        parse_timestamp("2013-12-02T21:15:00Z"));
}

TEST_CASE("hopeless timestamps are rejected") {
  for (const char* bad :
       {"", "garbage", "2013-12-02", "2013-12-02 21:15",
        "2013-13-01 00:00:00", "2013-02-30 00:00:00", "2013-12-02 24:00:00",
        "2013-12-02 21:61:00", "2013-12-02 21:15:00X",
        "2013-12-02 21:15:00.", "12.5", "9223372036855"}) {
    CHECK_THROWS_AS(parse_timestamp(bad), resd::input_error);
  }
  CHECK_NOTHROW(parse_timestamp("9223372036854"));
}

TEST_CASE("formatting inverts parsing") {
  CHECK(format_timestamp(0) == "1970-01-01 00:00:00");
  CHECK(format_timestamp(1356998400000000) == "2013-01-01 00:00:00");
  CHECK(format_timestamp(1500000) == "1970-01-01 00:00:01.5");
  CHECK(format_timestamp(-1500000) == "1969-12-31 23:59:58.5");
  CHECK(format_timestamp(123456) == "1970-01-01 00:00:00.123456");
  for (const std::int64_t us :
       {std::int64_t(0), std::int64_t(1), std::int64_t(999999),
        std::int64_t(1386018900000000), std::int64_t(-86400000000)}) {
    CHECK(parse_timestamp(format_timestamp(us)) == us);
  }
}

TEST_CASE("csv ingestion keeps values and raw fields") {
  std::istringstream in(
      "timestamp,value\n"
      "2013-01-01 00:00:00,1.50\n"
      "1357002000,2\n");
  const resd::Ingested ing = resd::read_csv_series(in, "test");
  REQUIRE(ing.series.size() == 2);
  CHECK(ing.series.values[0] == 1.5);
  CHECK(ing.series.values[1] == 2.0);
  CHECK(ing.series.timestamps[0] == 1356998400000000);
  CHECK(ing.series.timestamps[1] == 1357002000000000);
  CHECK(ing.raw_value[0] == "1.50");
  CHECK(ing.echo_ts(1357002000000000) == "1357002000");
  CHECK(ing.echo_ts(1356998400000000) == "2013-01-01 00:00:00");
  // unseen timestamps fall back to canonical text
  CHECK(ing.echo_ts(1357005600000000) == "2013-01-01 02:00:00");
}

TEST_CASE("export is byte-identical to the source") {
  const std::string plain =
      "timestamp,value\n"
      "2013-01-01 00:00:00,1.50\n"
      "2013-01-01 01:00:00,2\n";
  CHECK(rewrite(plain) == plain);

  const std::string crlf =
      "timestamp,value\r\n"
      "1356998400,3.25\r\n"
      "1357002000,-0.5\r\n";
  CHECK(rewrite(crlf) == crlf);

  const std::string no_final_newline =
      "timestamp,value\n"
      "1356998400,1\n"
      "1357002000,2";
  CHECK(rewrite(no_final_newline) == no_final_newline);
}

TEST_CASE("csv ingestion rejects malformed input with line numbers") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return resd::read_csv_series(in, "test");
  };
  CHECK_THROWS_WITH_AS(parse(""), doctest::Contains("empty input"),
                       resd::input_error);
  CHECK_THROWS_WITH_AS(parse("timestamp,value\n"),
                       doctest::Contains("no data rows"), resd::input_error);
  CHECK_THROWS_WITH_AS(parse("time,value\n1,2\n"),
                       doctest::Contains("header"), resd::input_error);
  CHECK_THROWS_WITH_AS(
      parse("timestamp,value\n1,1\n2,2\n2,3\n"),
      doctest::Contains("line 4"), resd::input_error);
  CHECK_THROWS_WITH_AS(parse("timestamp,value\n1,abc\n"),
                       doctest::Contains("malformed value"), resd::input_error);
  CHECK_THROWS_WITH_AS(parse("timestamp,value\n1,inf\n"),
                       doctest::Contains("non-finite"), resd::input_error);
  CHECK_THROWS_WITH_AS(parse("timestamp,value\n1,nan\n"),
                       doctest::Contains("non-finite"), resd::input_error);
  CHECK_THROWS_WITH_AS(parse("timestamp,value\n1,2,3\n"),
                       doctest::Contains("two comma-separated"),
                       resd::input_error);
  CHECK_THROWS_WITH_AS(parse("timestamp,value\nbogus,2\n"),
                       doctest::Contains("line 2"), resd::input_error);
  CHECK_THROWS_AS(resd::read_csv_series("/nonexistent/path.csv"),
                  resd::input_error);
}

TEST_CASE("point labels load sorted") {
  const TempFile f(
      "timestamp\n"
      "2013-12-11 06:00:00\n"
      "1356998400\n");
  const auto labels = resd::read_labels(f.path.string());
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].start == 1356998400000000);
  CHECK(labels[0].end == labels[0].start);
  CHECK(labels[1].start == parse_timestamp("2013-12-11 06:00:00"));
}

TEST_CASE("range labels load sorted") {
  const TempFile f(
      "start,end\n"
      "2013-01-02 00:00:00,2013-01-03 00:00:00\n"
      "10,20\n");
  const auto labels = resd::read_labels(f.path.string());
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].start == 10000000);
  CHECK(labels[0].end == 20000000);
  CHECK(labels[1].start == parse_timestamp("2013-01-02 00:00:00"));
  CHECK(labels[1].end == parse_timestamp("2013-01-03 00:00:00"));
}

TEST_CASE("label files are validated") {
  const TempFile bad_header("when\n1\n");
  CHECK_THROWS_WITH_AS(resd::read_labels(bad_header.path.string()),
                       doctest::Contains("header"), resd::input_error);
  const TempFile no_comma("start,end\n1\n");
  CHECK_THROWS_WITH_AS(resd::read_labels(no_comma.path.string()),
                       doctest::Contains("line 2"), resd::input_error);
  const TempFile empty("");
  CHECK_THROWS_AS(resd::read_labels(empty.path.string()), resd::input_error);
  CHECK_THROWS_AS(resd::read_labels("/nonexistent/labels.csv"),
                  resd::input_error);
}

TEST_CASE("checksums match the reference vectors") {
  CHECK(resd::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(resd::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(resd::fnv1a64("hello") == 0xa430d84680aabd0bull);
}
