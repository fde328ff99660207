#include <cmath>
#include <limits>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "wrl/error.hpp"
#include "wrl/report.hpp"

using namespace wrl;

namespace {

CsvTable curve(std::vector<double> x, std::vector<double> y, std::vector<double> sd) {
  CsvTable t;
  t.header = {"x", "y", "std"};
  for (std::size_t i = 0; i < x.size(); ++i) t.add_row({format_double(x[i]), format_double(y[i]), format_double(sd[i])});
  return t;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::string attribute(const std::string& svg, const std::string& element, const std::string& attr) {
  const std::regex re("<" + element + "[^>]*\\s" + attr + "=\"([^\"]*)\"");
  std::smatch m;
  if (!std::regex_search(svg, m, re)) return {};
  return m[1];
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, 42.0}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(3.0), "3");
}

TEST(Csv, RoundTripAndColumns) {
  const CsvTable t = curve({0, 0.5, 1}, {0.2, 0.1, 0.3}, {0, 0.01, 0.02});
  std::istringstream in(to_csv(t));
  const CsvTable back = parse_csv(in);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.column("std"), 2u);
  EXPECT_EQ(back.numeric_column("y"), (std::vector<double>{0.2, 0.1, 0.3}));
  EXPECT_THROW(back.column("nope"), DataError);
  CsvTable bad;
  bad.header = {"a", "b"};
  EXPECT_THROW(bad.add_row({"1"}), DataError);
}

TEST(Svg, TwoPointsOnePolyline) {
  const std::string svg = emit_svg_lineplot(curve({0, 1}, {0.2, 0.4}, {0.05, 0.05}), {});
  EXPECT_EQ(count(svg, "<polyline"), 1u);
  const std::string points = attribute(svg, "polyline", "points");
  std::istringstream in(points);
  std::string pair;
  int pairs = 0;
  while (in >> pair) {
    EXPECT_EQ(count(pair, ","), 1u);
    ++pairs;
  }
  EXPECT_EQ(pairs, 2);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("class=\"legend\""), std::string::npos);
  EXPECT_EQ(count(svg, "class=\"axis\""), 2u);
}

TEST(Svg, DeterministicBytes) {
  const CsvTable t = curve({1, 2, 4, 8}, {0.5, 0.4, 0.45, 0.9}, {0.1, 0.05, 0.02, 0.3});
  PlotSpec spec;
  spec.title = "loss <vs> alpha & more";
  EXPECT_EQ(emit_svg_lineplot(t, spec), emit_svg_lineplot(t, spec));
  EXPECT_NE(emit_svg_lineplot(t, spec).find("&lt;vs&gt; alpha &amp; more"), std::string::npos);
}

TEST(Svg, ZeroStdBandCoincidesWithLine) {
  const std::string svg = emit_svg_lineplot(curve({0, 0.5, 1}, {0.3, 0.1, 0.2}, {0, 0, 0}), {});
  const std::string band = attribute(svg, "path", "d");
  std::vector<std::string> line;
  std::istringstream pts(attribute(svg, "polyline", "points"));
  for (std::string p; pts >> p;) line.push_back(p);
  std::vector<std::string> outline;
  std::istringstream in(band);
  for (std::string tok; in >> tok;)
    if (tok != "M" && tok != "L" && tok != "Z") outline.push_back(tok);
  ASSERT_EQ(outline.size(), 2 * line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    EXPECT_EQ(outline[i], line[i]);
    EXPECT_EQ(outline[outline.size() - 1 - i], line[i]);
  }
}

TEST(Svg, Errors) {
  EXPECT_THROW(emit_svg_lineplot(curve({}, {}, {}), {}), DataError);
  EXPECT_THROW(emit_svg_lineplot(curve({0, 1}, {0.1, std::numeric_limits<double>::infinity()}, {0, 0}), {}),
               DataError);
  PlotSpec spec;
  spec.y_column = "loss";
  EXPECT_THROW(emit_svg_lineplot(curve({0, 1}, {0, 1}, {0, 0}), spec), DataError);
}
