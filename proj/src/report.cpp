#include "wrl/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wrl/error.hpp"

namespace wrl {

std::string format_double(double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("csv: no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numeric_column(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (c >= row.size()) throw DataError("csv: short row in column '" + name + "'");
    double v = 0.0;
    const auto& text = row[c];
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
      throw DataError("csv: '" + text + "' is not a number");
    out.push_back(v);
  }
  return out;
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw DataError("csv: row width does not match header");
  rows.push_back(std::move(row));
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  return out;
}

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string text;
  bool first = true;
  while (std::getline(in, text)) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (text.back() == ',') fields.emplace_back();
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.add_row(std::move(fields));
    }
  }
  if (first) throw DataError("csv: missing header");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return parse_csv(in);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  return s == "-0.00" ? "0.00" : s;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::string emit_svg_lineplot(const CsvTable& table, const PlotSpec& spec) {
  if (table.rows.empty()) throw DataError("plot: empty table");
  const auto xs = table.numeric_column(spec.x_column);
  const auto ys = table.numeric_column(spec.y_column);
  const auto sd = table.numeric_column(spec.std_column);
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]) || !std::isfinite(sd[i]))
      throw DataError("plot: non-finite value in row " + std::to_string(i));

  double x_lo = *std::min_element(xs.begin(), xs.end());
  double x_hi = *std::max_element(xs.begin(), xs.end());
  double y_lo = ys[0] - std::abs(sd[0]);
  double y_hi = ys[0] + std::abs(sd[0]);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    y_lo = std::min(y_lo, ys[i] - std::abs(sd[i]));
    y_hi = std::max(y_hi, ys[i] + std::abs(sd[i]));
  }
  if (x_hi == x_lo) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }

  const double left = 60, right = spec.width - 20.0, top = 40, bottom = spec.height - 50.0;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (right - left); };
  auto py = [&](double y) { return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top); };
  auto point = [&](double x, double y) { return fixed(px(x)) + "," + fixed(py(y)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\"" << spec.height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(spec.width / 2.0) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << escape(spec.title) << "</text>\n";
  svg << "<line class=\"axis\" x1=\"" << fixed(left) << "\" y1=\"" << fixed(bottom) << "\" x2=\"" << fixed(right)
      << "\" y2=\"" << fixed(bottom) << "\" stroke=\"black\"/>\n";
  svg << "<line class=\"axis\" x1=\"" << fixed(left) << "\" y1=\"" << fixed(top) << "\" x2=\"" << fixed(left)
      << "\" y2=\"" << fixed(bottom) << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << fixed(left) << "\" y=\"" << fixed(bottom + 16) << "\" font-size=\"11\">" << tick(x_lo)
      << "</text>\n";
  svg << "<text x=\"" << fixed(right) << "\" y=\"" << fixed(bottom + 16)
      << "\" text-anchor=\"end\" font-size=\"11\">" << tick(x_hi) << "</text>\n";
  svg << "<text x=\"" << fixed(left - 4) << "\" y=\"" << fixed(bottom) << "\" text-anchor=\"end\" font-size=\"11\">"
      << tick(y_lo) << "</text>\n";
  svg << "<text x=\"" << fixed(left - 4) << "\" y=\"" << fixed(top + 10)
      << "\" text-anchor=\"end\" font-size=\"11\">" << tick(y_hi) << "</text>\n";
  svg << "<text x=\"" << fixed((left + right) / 2) << "\" y=\"" << fixed(bottom + 36)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(spec.x_label.empty() ? spec.x_column : spec.x_label)
      << "</text>\n";
  svg << "<text x=\"14\" y=\"" << fixed((top + bottom) / 2) << "\" font-size=\"12\" transform=\"rotate(-90 14 "
      << fixed((top + bottom) / 2) << ")\" text-anchor=\"middle\">"
      << escape(spec.y_label.empty() ? spec.y_column : spec.y_label) << "</text>\n";

  svg << "<path class=\"band\" d=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) svg << (i ? " L " : "M ") << point(xs[i], ys[i] + std::abs(sd[i]));
  for (std::size_t i = xs.size(); i-- > 0;) svg << " L " << point(xs[i], ys[i] - std::abs(sd[i]));
  svg << " Z\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";

  svg << "<polyline points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) svg << (i ? " " : "") << point(xs[i], ys[i]);
  svg << "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";

  const std::string legend = spec.legend.empty() ? spec.y_column : spec.legend;
  svg << "<g class=\"legend\"><line x1=\"" << fixed(right - 150) << "\" y1=\"" << fixed(top + 6) << "\" x2=\""
      << fixed(right - 130) << "\" y2=\"" << fixed(top + 6)
      << "\" stroke=\"steelblue\" stroke-width=\"2\"/><text x=\"" << fixed(right - 125) << "\" y=\""
      << fixed(top + 10) << "\" font-size=\"11\">" << escape(legend) << "</text></g>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace wrl
