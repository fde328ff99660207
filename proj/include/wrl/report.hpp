#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace wrl {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header; DataError when absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> numeric_column(const std::string& name) const;
  void add_row(std::vector<std::string> row);
};

/// Plain comma-separated text, no quoting. Fields must not contain commas.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

struct PlotSpec {
  std::string title;
  std::string x_column = "x";
  std::string y_column = "y";
  std::string std_column = "std";
  std::string x_label;
  std::string y_label;
  std::string legend;
  int width = 640;
  int height = 400;
};

/// Standalone SVG: axes, one polyline through the means, a translucent
/// band of +-std around it and a one-entry legend. Throws DataError on an
/// empty table.
std::string emit_svg_lineplot(const CsvTable& table, const PlotSpec& spec);

}  // namespace wrl
