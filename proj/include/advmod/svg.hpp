#pragma once

#include <string>
#include <vector>

namespace advmod::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  std::vector<Series> series;
};

/// Polyline per series with point markers, axes, ticks and a legend.
std::string line_plot(const LinePlot& plot);

/// Escapes &, <, >, " for use in text and attribute values.
std::string escape(const std::string& text);

/// Fixed-precision coordinate formatting so output is byte-stable.
std::string coord(double v);

}  // namespace advmod::svg
