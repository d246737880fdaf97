#include "carl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace carl::harness {

namespace {

constexpr double kW = 640, kH = 400;
constexpr double kL = 64, kR = 24, kT = 40, kB = 48;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string header(const std::string& title) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
       "height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"16\">" +
       title + "</text>\n";
  return s;
}

void axis_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    hi = lo + 1.0;
    lo -= 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

}  // namespace

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series) {
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool any = false;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!any) {
        xlo = xhi = x;
        ylo = yhi = y;
        any = true;
      }
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  axis_range(xlo, xhi);
  axis_range(ylo, yhi);

  auto px = [&](double x) {
    return kL + (x - xlo) / (xhi - xlo) * (kW - kL - kR);
  };
  auto py = [&](double y) {
    return kH - kB - (y - ylo) / (yhi - ylo) * (kH - kT - kB);
  };

  std::string svg = header(title);
  // axes
  svg += "<line x1=\"" + fmt(kL) + "\" y1=\"" + fmt(kH - kB) + "\" x2=\"" +
         fmt(kW - kR) + "\" y2=\"" + fmt(kH - kB) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(kL) + "\" y1=\"" + fmt(kT) + "\" x2=\"" +
         fmt(kL) + "\" y2=\"" + fmt(kH - kB) + "\" stroke=\"black\"/>\n";
  // ticks
  for (int i = 0; i <= 5; ++i) {
    const double fx = xlo + (xhi - xlo) * i / 5.0;
    const double fy = ylo + (yhi - ylo) * i / 5.0;
    svg += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(kH - kB + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">" +
           fmt_tick(fx) + "</text>\n";
    svg += "<text x=\"" + fmt(kL - 6) + "\" y=\"" + fmt(py(fy) + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">" +
           fmt_tick(fy) + "</text>\n";
  }
  svg += "<text x=\"" + fmt((kL + kW - kR) / 2) + "\" y=\"" + fmt(kH - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">" +
         x_label + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt((kT + kH - kB) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 " +
         fmt((kT + kH - kB) / 2) + ")\">" + y_label + "</text>\n";

  int li = 0;
  for (const auto& s : series) {
    if (!s.points.empty()) {
      std::string pts;
      for (const auto& [x, y] : s.points) {
        pts += fmt(px(x));
        pts += ',';
        pts += fmt(py(y));
        pts += ' ';
      }
      svg += "<polyline fill=\"none\" stroke=\"" + s.color +
             "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    svg += "<text x=\"" + fmt(kW - kR - 4) + "\" y=\"" +
           fmt(kT + 14 + 14 * li) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\" fill=\"" +
           s.color + "\">" + s.name + "</text>\n";
    ++li;
  }
  svg += "</svg>\n";
  return svg;
}

std::string bar_chart_svg(const std::string& title,
                          const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  double lo = 0.0, hi = 1.0;
  if (!values.empty()) {
    lo = std::min(0.0, *std::min_element(values.begin(), values.end()));
    hi = *std::max_element(values.begin(), values.end());
  }
  axis_range(lo, hi);
  auto py = [&](double y) {
    return kH - kB - (y - lo) / (hi - lo) * (kH - kT - kB);
  };
  std::string svg = header(title);
  svg += "<line x1=\"" + fmt(kL) + "\" y1=\"" + fmt(kH - kB) + "\" x2=\"" +
         fmt(kW - kR) + "\" y2=\"" + fmt(kH - kB) +
         "\" stroke=\"black\"/>\n";
  const std::size_t n = values.size();
  const double span = (kW - kL - kR) / std::max<std::size_t>(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kL + span * i + span * 0.15;
    const double w = span * 0.7;
    const double y = py(std::max(values[i], 0.0));
    const double h = std::abs(py(0.0) - py(values[i]));
    svg += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" +
           fmt(w) + "\" height=\"" + fmt(h) +
           "\" fill=\"steelblue\"/>\n";
    svg += "<text x=\"" + fmt(x + w / 2) + "\" y=\"" + fmt(kH - kB + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           (i < labels.size() ? labels[i] : "") + "</text>\n";
    svg += "<text x=\"" + fmt(x + w / 2) + "\" y=\"" + fmt(y - 4) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">" +
           fmt_tick(values[i]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace carl::harness
