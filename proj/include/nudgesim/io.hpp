#pragma once

/**
 * @file
 * @brief Locale-independent CSV output and minimal SVG line charts.
 */

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <locale>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace nudgesim {

/// Shortest round-trip decimal representation; always '.' as separator.
inline std::string format_number(double value)
{
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0) return "0";  // folds -0
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

/// Fixed-precision variant for human-facing summaries.
inline std::string format_fixed(double value, int digits)
{
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed, digits);
  return std::string(buf.data(), res.ptr);
}

/// Row-oriented CSV builder. Fields are written verbatim; callers only pass
/// identifiers and numbers, so no quoting is needed.
class CsvTable
{
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  class Row
  {
  public:
    Row & operator<<(double v)
    {
      fields_.push_back(format_number(v));
      return *this;
    }
    Row & operator<<(int v)
    {
      fields_.push_back(std::to_string(v));
      return *this;
    }
    Row & operator<<(std::string_view s)
    {
      fields_.emplace_back(s);
      return *this;
    }
    Row & operator<<(const char * s) { return *this << std::string_view(s); }

  private:
    friend class CsvTable;
    std::vector<std::string> fields_;
  };

  void add(const Row & row)
  {
    require_dims(row.fields_.size() == header_.size(), "CSV row has " + std::to_string(row.fields_.size()) + " fields, header has " +
                                                           std::to_string(header_.size()));
    rows_.push_back(row.fields_);
  }

  std::size_t size() const { return rows_.size(); }

  std::string str() const
  {
    std::string out;
    auto line = [&](const std::vector<std::string> & f) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (i) out += ',';
        out += f[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto & r : rows_) line(r);
    return out;
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Write bytes exactly (binary mode, so '\n' stays '\n' everywhere).
inline void write_file(const std::filesystem::path & path, const std::string & content)
{
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::InvalidArgument, "cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw Error(Errc::InvalidArgument, "failed writing " + path.string());
}

struct LineSeries
{
  std::string label;
  std::vector<double> x, y;
  bool dashed = false;
};

/// Single-panel line chart with axes, ticks and a legend.
inline std::string svg_line_chart(const std::vector<LineSeries> & series, const std::string & title, const std::string & x_label,
                                  const std::string & y_label, bool legend = true)
{
  constexpr double width = 720, height = 440, left = 64, top = 36, bottom = 52;
  const double right = legend ? 190 : 24;
  const double pw = width - left - right, ph = height - top - bottom;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto & s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  y0 = std::min(y0, 0.0);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  y1 += 0.05 * (y1 - y0);

  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1 - (y - y0) / (y1 - y0)) * ph; };
  auto esc = [](const std::string & s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };

  static const char * palette[] = {"#1f5fbf", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e", "#a6761d", "#666666"};
  std::ostringstream o;
  o.imbue(std::locale::classic());
  o << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height << R"(" font-family="sans-serif" font-size="12">)"
    << '\n';
  o << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  o << R"(<text x=")" << width / 2 << R"(" y="20" text-anchor="middle" font-size="14">)" << esc(title) << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double yv = y0 + (y1 - y0) * i / 5.0, xv = x0 + (x1 - x0) * i / 5.0;
    o << R"(<line x1=")" << left << R"(" x2=")" << left + pw << R"(" y1=")" << py(yv) << R"(" y2=")" << py(yv)
      << R"(" stroke="#e0e0e0"/>)" << '\n';
    o << R"(<text x=")" << left - 6 << R"(" y=")" << py(yv) + 4 << R"(" text-anchor="end">)" << format_fixed(yv, 2) << "</text>\n";
    o << R"(<text x=")" << px(xv) << R"(" y=")" << top + ph + 16 << R"(" text-anchor="middle">)" << format_fixed(xv, 0) << "</text>\n";
  }
  o << R"(<rect x=")" << left << R"(" y=")" << top << R"(" width=")" << pw << R"(" height=")" << ph
    << R"(" fill="none" stroke="black"/>)" << '\n';
  o << R"(<text x=")" << left + pw / 2 << R"(" y=")" << height - 12 << R"(" text-anchor="middle">)" << esc(x_label) << "</text>\n";
  o << R"(<text transform="translate(16,)" << top + ph / 2 << R"svg() rotate(-90)" text-anchor="middle">)svg" << esc(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto & s = series[k];
    const char * color = palette[k % std::size(palette)];
    o << R"(<polyline fill="none" stroke=")" << color << R"(" stroke-width="1.6")" << (s.dashed ? R"( stroke-dasharray="6,4")" : "")
      << R"( points=")";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << px(s.x[i]) << ',' << py(s.y[i]);
    o << R"("/>)" << '\n';
    if (legend) {
      const double ly = top + 14 + 18 * static_cast<double>(k);
      o << R"(<line x1=")" << left + pw + 12 << R"(" x2=")" << left + pw + 40 << R"(" y1=")" << ly << R"(" y2=")" << ly << R"(" stroke=")"
        << color << R"(" stroke-width="1.6")" << (s.dashed ? R"( stroke-dasharray="6,4")" : "") << "/>\n";
      o << R"(<text x=")" << left + pw + 46 << R"(" y=")" << ly + 4 << R"(">)" << esc(s.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace nudgesim
