#pragma once

// Minimal deterministic SVG charts: fixed canvas, fixed number formats,
// output is a pure function of the inputs.

#include <string>
#include <utility>
#include <vector>

namespace carl::harness {

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series);

std::string bar_chart_svg(const std::string& title,
                          const std::vector<std::string>& labels,
                          const std::vector<double>& values);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace carl::harness
