#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nerd/numerics/rng.hpp"
#include "nerd/report/csv.hpp"
#include "nerd/report/svg.hpp"
#include "nerd/util/text.hpp"

using namespace nerd;

TEST_CASE("format_double round-trips") {
  CHECK(text::format_double(0.1) == "0.10000000000000001");
  CHECK(text::format_double(2.0) == "2");
  CHECK(text::format_double(NAN) == "nan");
  CHECK(text::format_double(-INFINITY) == "-inf");
  numerics::RngStream rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    CHECK(text::parse_double(text::format_double(x)) == x);
  }
  CHECK_THROWS(text::parse_double("1.5x"));
  CHECK_THROWS(text::parse_int("3.0"));
  CHECK(text::parse_int("-42") == -42);
}

TEST_CASE("splitting") {
  const auto ws = text::split_ws("  a\tbb  c \r");
  REQUIRE(ws.size() == 3);
  CHECK(ws[1] == "bb");
  CHECK(text::split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
  CHECK(text::split("", ',').size() == 1);
}

TEST_CASE("fnv1a reference values") {
  CHECK(text::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(text::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(text::hex64(255) == "00000000000000ff");
}

TEST_CASE("atomic write then read") {
  const auto dir = std::filesystem::temp_directory_path() / "nerd_text_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "f.txt";
  text::write_file_atomic(path, "one");
  text::write_file_atomic(path, "two\n");
  CHECK(text::read_file(path) == "two\n");
  std::filesystem::remove_all(dir);
  CHECK_THROWS(text::read_file(path));
}

TEST_CASE("csv writer") {
  report::CsvWriter w({"a", "b,c"});
  w.cell("x\"y").cell(0.5);
  w.end_row();
  CHECK(w.str() == "a,\"b,c\"\n\"x\"\"y\",0.5\n");
  CHECK_THROWS_AS(w.end_row(), std::logic_error);
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  CHECK(report::matrix_csv(m, {"p", "q"}) == "label,p,q\np,0,1\nq,1,0\n");
}

TEST_CASE("svg output is well formed") {
  Matrix m(2, 3);
  m << 0, 1, 2, 3, 4, 5;
  const auto svg = report::heatmap("h", m, {"r0", "r1"});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
