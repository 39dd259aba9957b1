#pragma once
// Experiment report container plus CSV/SVG/meta writers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fdsic/units.hpp"

namespace fdsic {

struct Table {
  std::string name;  // file stem
  std::string x_label;
  std::string y_label;
  std::vector<std::string> columns;  // curve identifiers (x_axis excluded)
  std::vector<double> x;
  std::vector<std::vector<double>> rows;  // rows[i][j] for column j
  bool heatmap = false;

  void add_row(double xv, std::vector<double> vals) {
    if (vals.size() != columns.size()) throw InvalidArgument("row width mismatch in table " + name);
    x.push_back(xv);
    rows.push_back(std::move(vals));
  }
  std::vector<double> column(const std::string& c) const {
    const auto it = std::find(columns.begin(), columns.end(), c);
    if (it == columns.end()) throw InvalidArgument("no column " + c + " in " + name);
    const auto j = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[j]);
    return v;
  }
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
  bool required = true;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<Table> tables;
  std::vector<Check> checks;
  std::vector<std::pair<std::string, std::string>> meta;

  void add_meta(const std::string& k, const std::string& v) { meta.emplace_back(k, v); }
  void add_check(std::string name, bool ok, std::string detail, bool required = true) {
    checks.push_back({std::move(name), ok, std::move(detail), required});
  }
  bool all_required_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed || !c.required; });
  }
  const Table& table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    throw InvalidArgument("no table " + name);
  }
};

inline std::string fmt9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_csv(const Table& t, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "x_axis";
  for (const auto& c : t.columns) f << ',' << c;
  f << '\n';
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    f << fmt9(t.x[i]);
    for (double v : t.rows[i]) f << ',' << fmt9(v);
    f << '\n';
  }
}

namespace detail {

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline std::string palette(std::size_t i) {
  static const char* p[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return p[i % 10];
}

// Viridis-like ramp from dark blue to yellow.
inline std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(68 + t * (253 - 68));
  const int g = static_cast<int>(1 + t * (231 - 1));
  const int b = static_cast<int>(84 + t * (37 - 84));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace detail

inline std::string render_svg(const Table& t) {
  const double W = 760, H = 480, l = 70, r = 200, top = 30, bot = 50;
  const double pw = W - l - r, ph = H - top - bot;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << l << "\" y=\"18\" font-size=\"14\" font-family=\"sans-serif\">" << detail::esc(t.name)
    << "</text>\n";
  if (t.x.empty() || t.columns.empty()) {
    s << "</svg>\n";
    return s.str();
  }
  double x0 = *std::min_element(t.x.begin(), t.x.end()), x1 = *std::max_element(t.x.begin(), t.x.end());
  if (x1 == x0) x1 = x0 + 1;
  auto fx = [&](double v) { return l + (v - x0) / (x1 - x0) * pw; };

  if (t.heatmap) {
    double lo = kInf, hi = -kInf;
    for (const auto& row : t.rows)
      for (double v : row)
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    const double cw = pw / t.x.size(), ch = ph / t.columns.size();
    for (std::size_t i = 0; i < t.x.size(); ++i)
      for (std::size_t j = 0; j < t.columns.size(); ++j) {
        const double v = t.rows[i][j];
        const double u = std::isfinite(v) && hi > lo ? (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo)) : 1.0;
        s << "<rect x=\"" << l + i * cw << "\" y=\"" << top + ph - (j + 1) * ch << "\" width=\"" << cw + 0.5
          << "\" height=\"" << ch + 0.5 << "\" fill=\"" << detail::heat_color(1.0 - u) << "\"/>\n";
      }
    s << "<text x=\"" << l + pw + 10 << "\" y=\"" << top + 20 << "\" font-size=\"11\" font-family=\"sans-serif\">min "
      << fmt9(lo) << "</text>\n<text x=\"" << l + pw + 10 << "\" y=\"" << top + 36
      << "\" font-size=\"11\" font-family=\"sans-serif\">max " << fmt9(hi) << "</text>\n";
    s << "<text x=\"" << l + pw + 10 << "\" y=\"" << top + 52 << "\" font-size=\"11\" font-family=\"sans-serif\">rows: "
      << detail::esc(t.columns.front()) << " .. " << detail::esc(t.columns.back()) << "</text>\n";
  } else {
    double y0 = kInf, y1 = -kInf;
    for (const auto& row : t.rows)
      for (double v : row)
        if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
    if (!(y1 > y0)) y1 = y0 + 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto fy = [&](double v) { return top + ph - (v - y0) / (y1 - y0) * ph; };
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      s << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << detail::palette(j) << "\" points=\"";
      for (std::size_t i = 0; i < t.x.size(); ++i)
        if (std::isfinite(t.rows[i][j])) s << fx(t.x[i]) << ',' << fy(t.rows[i][j]) << ' ';
      s << "\"/>\n";
      s << "<text x=\"" << l + pw + 10 << "\" y=\"" << top + 14 + 16 * j << "\" font-size=\"11\" font-family=\"sans-serif\" fill=\""
        << detail::palette(j) << "\">" << detail::esc(t.columns[j]) << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
      const double v = y0 + (y1 - y0) * k / 4.0;
      s << "<text x=\"4\" y=\"" << fy(v) + 4 << "\" font-size=\"10\" font-family=\"sans-serif\">" << fmt9(v) << "</text>\n";
    }
  }
  s << "<rect x=\"" << l << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = x0 + (x1 - x0) * k / 4.0;
    s << "<text x=\"" << fx(v) - 10 << "\" y=\"" << top + ph + 16 << "\" font-size=\"10\" font-family=\"sans-serif\">"
      << fmt9(v) << "</text>\n";
  }
  s << "<text x=\"" << l + pw / 2 - 30 << "\" y=\"" << H - 10 << "\" font-size=\"12\" font-family=\"sans-serif\">"
    << detail::esc(t.x_label) << "</text>\n";
  s << "<text x=\"12\" y=\"" << top - 8 << "\" font-size=\"11\" font-family=\"sans-serif\">" << detail::esc(t.y_label)
    << "</text>\n</svg>\n";
  return s.str();
}

// <stem>.csv/.svg per table (first table uses the experiment name), plus meta.txt.
inline void write_report(const ExperimentReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < rep.tables.size(); ++i) {
    const auto& t = rep.tables[i];
    const std::string stem = i == 0 ? rep.experiment : rep.experiment + "_" + t.name;
    write_csv(t, dir / (stem + ".csv"));
    std::ofstream(dir / (stem + ".svg")) << render_svg(t);
  }
  std::ofstream m(dir / "meta.txt");
  m << "experiment = " << rep.experiment << '\n';
  for (const auto& [k, v] : rep.meta) m << k << " = " << v << '\n';
  for (const auto& c : rep.checks)
    m << "check." << c.name << " = " << (c.passed ? "pass" : "fail") << (c.required ? "" : " (informational)")
      << " | " << c.detail << '\n';
}

}  // namespace fdsic
