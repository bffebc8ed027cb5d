#include "deeplcc/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace deeplcc {

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, end);
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series) {
  constexpr double kWidth = 720, kHeight = 400;
  constexpr double kLeft = 60, kRight = 20, kTop = 36, kBottom = 48;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    for (double v : s.x) { x_min = std::min(x_min, v); x_max = std::max(x_max, v); }
    for (double v : s.y) { y_min = std::min(y_min, v); y_max = std::max(y_max, v); }
  }
  if (!std::isfinite(x_min)) { x_min = 0; x_max = 1; y_min = 0; y_max = 1; }
  if (x_max <= x_min) x_max = x_min + 1;
  if (y_max <= y_min) { y_max += 0.5; y_min -= 0.5; }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return kTop + (y_max - y) / (y_max - y_min) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\">"
      << escape_xml(title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_min + (x_max - x_min) * t / 4.0;
    const double yv = y_min + (y_max - y_min) * t / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << format_number(std::round(xv * 100) / 100)
        << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\">" << format_number(std::round(yv * 100) / 100)
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 8
      << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  svg << "<text transform=\"translate(14," << kTop + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(y_label)
      << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    svg << "<polyline fill=\"none\" stroke=\"" << escape_xml(s.color)
        << "\" stroke-width=\"1.2\" points=\"";
    const std::size_t count = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < count; ++i) {
      svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    svg << "\"><title>" << escape_xml(s.label) << "</title></polyline>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace deeplcc
