#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace orbistab::svg {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  std::string label;
  std::string dash;  // stroke-dasharray, empty for solid
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool log_y = false;
  int width = 640;
  int height = 400;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Minimal line chart; enough to eyeball a trace, not a plotting library.
inline std::string render(const Chart& c) {
  const double left = 70, right = 20, top = 36, bottom = 50;
  const double pw = c.width - left - right;
  const double ph = c.height - top - bottom;
  auto ty = [&](double v) { return c.log_y ? std::log10(std::max(v, 1e-300)) : v; };

  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : c.series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (c.log_y && s.y[i] <= 0.0) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (x0 > x1) x0 = 0, x1 = 1;
  if (y0 > y1) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return top + (1.0 - (ty(v) - y0) / (y1 - y0)) * ph; };

  using detail::num;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(c.width) +
                    "\" height=\"" + std::to_string(c.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
  out += "<text x=\"" + num(c.width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::escape(c.title) + "</text>\n";
  out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(c.height - 10.0) + "\" text-anchor=\"middle\">" +
         detail::escape(c.x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(top + ph / 2) + ")\">" + detail::escape(c.y_label) + "</text>\n";

  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    const double yv = y0 + (y1 - y0) * k / 4.0;
    out += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" + num(xv) +
           "</text>\n";
    const double ypix = top + (1.0 - (yv - y0) / (y1 - y0)) * ph;
    const std::string label = c.log_y ? "1e" + num(yv) : num(yv);
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(ypix + 4) + "\" text-anchor=\"end\">" + label + "</text>\n";
  }

  int legend_row = 0;
  for (const auto& s : c.series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (c.log_y && s.y[i] <= 0.0)) continue;
      pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.2\"";
    if (!s.dash.empty()) out += " stroke-dasharray=\"" + s.dash + "\"";
    out += " points=\"" + pts + "\"/>\n";
    if (!s.label.empty()) {
      const double ly = top + 14 + 16 * legend_row++;
      out += "<line x1=\"" + num(left + pw - 110) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(left + pw - 90) +
             "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + s.color + "\"/>\n";
      out += "<text x=\"" + num(left + pw - 86) + "\" y=\"" + num(ly) + "\">" + detail::escape(s.label) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace orbistab::svg
