#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace umvf::io {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct LinePlot {
  std::string title;
  std::string x_label = "k";
  std::string y_label;
  std::vector<Series> series;
  int width = 720;
  int height = 360;
};

namespace detail {

inline std::string escape_xml(const std::string& s) {
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

inline std::string num(double v, const char* fmt = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

/// Round tick step (1, 2 or 5 times a power of ten) giving about `target`
/// intervals over [lo, hi].
inline double tick_step(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace detail

inline std::string render_svg(const LinePlot& plot) {
  using detail::num;
  const double ml = 70, mr = 150, mt = 36, mb = 48;
  const double pw = plot.width - ml - mr, ph = plot.height - mt - mb;

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : plot.series) {
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) {
      if (std::isfinite(v)) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    const double pad = std::max(std::abs(ymin) * 0.1, 1e-12);
    ymin -= pad;
    ymax += pad;
  }
  const double ystep = detail::tick_step(ymin, ymax);
  ymin = std::floor(ymin / ystep) * ystep;
  ymax = std::ceil(ymax / ystep) * ystep;
  const double xstep = detail::tick_step(xmin, xmax);

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(plot.width) + "\" height=\"" +
       std::to_string(plot.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(ml + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::escape_xml(plot.title) + "</text>\n";

  const char* yfmt = ystep < 0.01 ? "%.3g" : "%.2f";
  for (double y = ymin; y <= ymax + 0.5 * ystep; y += ystep) {
    s += "<line x1=\"" + num(ml) + "\" x2=\"" + num(ml + pw) + "\" y1=\"" + num(sy(y)) + "\" y2=\"" + num(sy(y)) +
         "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(sy(y) + 4) + "\" text-anchor=\"end\">" + num(y, yfmt) +
         "</text>\n";
  }
  for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + 1e-9; x += xstep) {
    s += "<text x=\"" + num(sx(x)) + "\" y=\"" + num(mt + ph + 16) + "\" text-anchor=\"middle\">" + num(x, "%g") +
         "</text>\n";
  }
  s += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(plot.height - 10.0) + "\" text-anchor=\"middle\">" +
       detail::escape_xml(plot.x_label) + "</text>\n";
  s += "<text transform=\"translate(16," + num(mt + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       detail::escape_xml(plot.y_label) + "</text>\n";

  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const Series& ser = plot.series[i];
    s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"1.5\"";
    if (ser.dashed) s += " stroke-dasharray=\"5,3\"";
    s += " points=\"";
    const std::size_t len = std::min(ser.x.size(), ser.y.size());
    for (std::size_t j = 0; j < len; ++j) {
      if (!std::isfinite(ser.y[j])) continue;
      s += num(sx(ser.x[j])) + "," + num(sy(ser.y[j])) + " ";
    }
    s += "\"/>\n";
    const double ly = mt + 14 + 18.0 * static_cast<double>(i);
    s += "<line x1=\"" + num(ml + pw + 12) + "\" x2=\"" + num(ml + pw + 36) + "\" y1=\"" + num(ly) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + ser.color + "\" stroke-width=\"2\"" +
         (ser.dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
    s += "<text x=\"" + num(ml + pw + 42) + "\" y=\"" + num(ly + 4) + "\">" + detail::escape_xml(ser.name) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace umvf::io
