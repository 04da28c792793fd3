#include "advmod/svg.hpp"

#include <cmath>
#include <cstdio>

namespace advmod::svg {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string line_plot(const LinePlot& plot) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double xr = plot.x_max > plot.x_min ? plot.x_max - plot.x_min : 1.0;
  const double yr = plot.y_max > plot.y_min ? plot.y_max - plot.y_min : 1.0;
  const auto px = [&](double x) { return kLeft + (x - plot.x_min) / xr * pw; };
  const auto py = [&](double y) { return kTop + ph - (y - plot.y_min) / yr * ph; };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + coord(kWidth) + "\" height=\"" +
                    coord(kHeight) + "\" viewBox=\"0 0 " + coord(kWidth) + " " + coord(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + coord(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         escape(plot.title) + "</text>\n";
  out += "<rect x=\"" + coord(kLeft) + "\" y=\"" + coord(kTop) + "\" width=\"" + coord(pw) + "\" height=\"" +
         coord(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double xv = plot.x_min + xr * i / 5.0;
    const double yv = plot.y_min + yr * i / 5.0;
    char lab[32];
    std::snprintf(lab, sizeof lab, "%g", std::round(xv * 100.0) / 100.0);
    out += "<text x=\"" + coord(px(xv)) + "\" y=\"" + coord(kTop + ph + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + lab + "</text>\n";
    std::snprintf(lab, sizeof lab, "%g", std::round(yv * 100.0) / 100.0);
    out += "<text x=\"" + coord(kLeft - 8) + "\" y=\"" + coord(py(yv) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + lab + "</text>\n";
    out += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(py(yv)) + "\" x2=\"" + coord(kLeft + pw) + "\" y2=\"" +
           coord(py(yv)) + "\" stroke=\"#dddddd\"/>\n";
  }
  out += "<text x=\"" + coord(kLeft + pw / 2) + "\" y=\"" + coord(kHeight - 16) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + escape(plot.x_label) + "</text>\n";
  out += "<text x=\"18\" y=\"" + coord(kTop + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " +
         coord(kTop + ph / 2) + ")\">" + escape(plot.y_label) + "</text>\n";

  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const auto& ser = plot.series[s];
    const char* color = kColors[s % (sizeof kColors / sizeof kColors[0])];
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      if (!pts.empty()) pts += ' ';
      pts += coord(px(ser.x[i])) + "," + coord(py(ser.y[i]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      out += "<circle cx=\"" + coord(px(ser.x[i])) + "\" cy=\"" + coord(py(ser.y[i])) + "\" r=\"3\" fill=\"" +
             color + "\"/>\n";
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    out += "<line x1=\"" + coord(kLeft + pw + 12) + "\" y1=\"" + coord(ly) + "\" x2=\"" + coord(kLeft + pw + 32) +
           "\" y2=\"" + coord(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + coord(kLeft + pw + 38) + "\" y=\"" + coord(ly + 4) + "\" font-size=\"11\">" +
           escape(ser.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace advmod::svg
