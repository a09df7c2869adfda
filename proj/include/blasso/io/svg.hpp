#pragma once

#include <blasso/core.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace blasso::io {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional half-widths of the error bars
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_x = false;
  int width = 560;
  int height = 400;
  std::vector<Series> series;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace detail

/// Line plot with optional error bars rendered as standalone SVG 1.1.
inline std::string render_svg(const PlotSpec& spec) {
  const double left = 70, right = 150, top = 40, bottom = 55;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (spec.log_x && !(s.x[i] > 0))) continue;
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i] - e);
      ymax = std::max(ymax, s.y[i] + e);
    }
  }
  if (!(xmin <= xmax)) xmin = 0, xmax = 1;
  if (!(ymin <= ymax)) ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };
  using detail::num;

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(spec.width) +
       "\" height=\"" + std::to_string(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(spec.width) + "\" height=\"" + std::to_string(spec.height) +
       "\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::escape(spec.title) + "</text>\n";
  o += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double xv = spec.log_x ? std::pow(10.0, fx) : fx;
    const double sx = left + pw * i / 4.0;
    o += "<line x1=\"" + num(sx) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(sx) + "\" y2=\"" +
         num(top + ph + 5) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(sx) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" +
         detail::tick_label(xv) + "</text>\n";
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    const double sy = top + ph - ph * i / 4.0;
    o += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(sy) + "\" x2=\"" + num(left) + "\" y2=\"" + num(sy) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(left - 8) + "\" y=\"" + num(sy + 4) + "\" text-anchor=\"end\">" +
         detail::tick_label(yv) + "</text>\n";
  }
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(spec.height - 12.0) + "\" text-anchor=\"middle\">" +
       detail::escape(spec.xlabel) + "</text>\n";
  o += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num(top + ph / 2) + ")\">" + detail::escape(spec.ylabel) + "</text>\n";
  double ly = top + 10;
  for (const auto& s : spec.series) {
    const std::string dash = s.dashed ? " stroke-dasharray=\"5,3\"" : "";
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (spec.log_x && !(s.x[i] > 0))) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(px(s.x[i])) + "," + num(py(s.y[i]));
      if (i < s.err.size() && std::isfinite(s.err[i]) && s.err[i] > 0) {
        const double x = px(s.x[i]), y0 = py(s.y[i] - s.err[i]), y1 = py(s.y[i] + s.err[i]);
        o += "<line x1=\"" + num(x) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x) + "\" y2=\"" + num(y1) +
             "\" stroke=\"" + s.color + "\"/>\n";
        o += "<line x1=\"" + num(x - 3) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x + 3) + "\" y2=\"" + num(y0) +
             "\" stroke=\"" + s.color + "\"/>\n";
        o += "<line x1=\"" + num(x - 3) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x + 3) + "\" y2=\"" + num(y1) +
             "\" stroke=\"" + s.color + "\"/>\n";
      }
    }
    o += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" + dash + " points=\"" + pts +
         "\"/>\n";
    o += "<line x1=\"" + num(left + pw + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw + 30) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" + dash + "/>\n";
    o += "<text x=\"" + num(left + pw + 35) + "\" y=\"" + num(ly + 4) + "\">" + detail::escape(s.label) +
         "</text>\n";
    ly += 18;
  }
  o += "</svg>\n";
  return o;
}

}  // namespace blasso::io
