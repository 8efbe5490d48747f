#pragma once

// Static SVG charts: correlation-vs-step lines and per-layer decomposition
// bars. Output depends only on the data, so identical inputs give identical
// files.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rabit/analysis.hpp"
#include "rabit/csv.hpp"

namespace rabit::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline constexpr double kW = 640, kH = 400, kPad = 56;
inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b"};

inline std::string num(double v) { return csv::format_double(std::round(v * 100.0) / 100.0); }

struct Range {
  double lo = 0.0, hi = 1.0;
  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double map(double v, double a, double b) const {
    return hi == lo ? (a + b) / 2 : a + (v - lo) / (hi - lo) * (b - a);
  }
};

inline void open(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kW) << "\" height=\""
     << num(kH) << "\" viewBox=\"0 0 " << num(kW) << ' ' << num(kH) << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(kW / 2) << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
}

inline void axes(std::ostream& os, const Range& xr, const Range& yr, const std::string& xl,
                 const std::string& yl) {
  const double x0 = kPad, x1 = kW - kPad, y0 = kH - kPad, y1 = kPad;
  os << "<g stroke=\"black\" stroke-width=\"1\">"
     << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\""
     << num(y0) << "\"/>"
     << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\""
     << num(y1) << "\"/></g>\n";
  if (yr.lo < 0.0 && yr.hi > 0.0) {
    const double yz = yr.map(0.0, y0, y1);
    os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(yz) << "\" x2=\"" << num(x1)
       << "\" y2=\"" << num(yz) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  os << "<g font-family=\"sans-serif\" font-size=\"11\">";
  for (int t = 0; t <= 4; ++t) {
    const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    os << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(yr.map(fy, y0, y1) + 4)
       << "\" text-anchor=\"end\">" << csv::format_double(std::round(fy * 1e4) / 1e4)
       << "</text>";
    const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    os << "<text x=\"" << num(xr.map(fx, x0, x1)) << "\" y=\"" << num(y0 + 16)
       << "\" text-anchor=\"middle\">" << csv::format_double(std::round(fx * 1e4) / 1e4)
       << "</text>";
  }
  os << "<text x=\"" << num(kW / 2) << "\" y=\"" << num(kH - 12)
     << "\" text-anchor=\"middle\">" << xl << "</text>"
     << "<text x=\"14\" y=\"" << num(kH / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << num(kH / 2) << ")\">" << yl << "</text></g>\n";
}

}  // namespace detail

/// Polyline per series with a legend.
inline void line_chart(std::ostream& os, std::span<const Series> series,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
  using namespace detail;
  Range xr{0.0, 0.0}, yr{0.0, 0.0};
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (first) {
        xr = {s.x[i], s.x[i]};
        yr = {s.y[i], s.y[i]};
        first = false;
      }
      xr.include(s.x[i]);
      yr.include(s.y[i]);
    }
  open(os, title);
  axes(os, xr, yr, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      os << (i ? " " : "") << num(xr.map(s.x[i], kPad, kW - kPad)) << ','
         << num(yr.map(s.y[i], kH - kPad, kPad));
    os << "\"/>\n";
    const double ly = kPad + 16.0 * static_cast<double>(k);
    os << "<rect x=\"" << num(kW - kPad - 120) << "\" y=\"" << num(ly - 8) << "\" width=\"10\" "
       << "height=\"10\" fill=\"" << color << "\"/><text x=\"" << num(kW - kPad - 106)
       << "\" y=\"" << num(ly + 1) << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name
       << "</text>\n";
  }
  os << "</svg>\n";
}

/// Per layer: a c_prime bar rising from 0 and a covariance bar hanging from
/// its top, so the bar's net height is total.
inline void decomposition_bars(std::ostream& os, std::span<const LayerDecomposition> rows,
                               const std::string& title) {
  using namespace detail;
  Range xr{0.0, static_cast<double>(std::max<std::size_t>(rows.size(), 1))};
  Range yr{0.0, 0.0};
  for (const auto& r : rows) {
    yr.include(r.d.c_prime);
    yr.include(r.d.total);
    yr.include(r.d.cov);
  }
  if (yr.hi == yr.lo) yr.hi = yr.lo + 1.0;
  open(os, title);
  axes(os, xr, yr, "layer", "error terms");
  const double slot = (kW - 2 * kPad) / xr.hi;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& d = rows[i].d;
    const double left = kPad + slot * (static_cast<double>(i) + 0.2);
    const double width = slot * 0.6;
    auto bar = [&](double a, double b, const char* fill) {
      const double ya = yr.map(a, kH - kPad, kPad), yb = yr.map(b, kH - kPad, kPad);
      os << "<rect x=\"" << num(left) << "\" y=\"" << num(std::min(ya, yb)) << "\" width=\""
         << num(width) << "\" height=\"" << num(std::fabs(ya - yb)) << "\" fill=\"" << fill
         << "\"/>\n";
    };
    bar(0.0, d.c_prime, "#1f77b4");
    bar(d.c_prime, d.total, d.cov < 0.0 ? "#2ca02c" : "#d62728");
    const double yt = yr.map(d.total, kH - kPad, kPad);
    os << "<line x1=\"" << num(left) << "\" y1=\"" << num(yt) << "\" x2=\"" << num(left + width)
       << "\" y2=\"" << num(yt) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  os << "<g font-family=\"sans-serif\" font-size=\"11\">"
     << "<rect x=\"" << num(kW - kPad - 150) << "\" y=\"" << num(kPad - 8)
     << "\" width=\"10\" height=\"10\" fill=\"#1f77b4\"/><text x=\"" << num(kW - kPad - 136)
     << "\" y=\"" << num(kPad + 1) << "\">c_prime</text>"
     << "<rect x=\"" << num(kW - kPad - 150) << "\" y=\"" << num(kPad + 8)
     << "\" width=\"10\" height=\"10\" fill=\"#2ca02c\"/><text x=\"" << num(kW - kPad - 136)
     << "\" y=\"" << num(kPad + 17) << "\">amp*corr (total = line)</text></g>\n";
  os << "</svg>\n";
}

}  // namespace rabit::svg
