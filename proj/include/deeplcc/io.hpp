#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deeplcc {

/// Shortest round-trip decimal form ('.' separator, locale independent).
std::string format_number(double value);

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a truncated file.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// One named polyline for `line_chart_svg`.
struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal self-contained SVG line chart.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series);

}  // namespace deeplcc
