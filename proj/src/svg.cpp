//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/svg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "canondiff/errors.h"

namespace canondiff {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string &s) {
  std::string out;
  for (char c: s) {
    switch (c) {
    case '<':
      out += "&lt;";
      break;
    case '>':
      out += "&gt;";
      break;
    case '&':
      out += "&amp;";
      break;
    default:
      out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const {
    const double span = x1 > x0 ? x1 - x0 : 1.0;
    return kLeft + (x - x0) / span * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    const double span = y1 > y0 ? y1 - y0 : 1.0;
    return kHeight - kBottom - (y - y0) / span * (kHeight - kTop - kBottom);
  }
};

std::string open(const Frame &f, const PlotLabels &l) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
                  + fmt(kWidth) + "\" height=\"" + fmt(kHeight)
                  + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" "
       "font-size=\"15\">" + escape(l.title) + "</text>\n";
  s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"" + fmt(kHeight - 10)
       + "\" text-anchor=\"middle\">" + escape(l.x) + "</text>\n";
  s += "<text transform=\"translate(16," + fmt(kHeight / 2)
       + ") rotate(-90)\" text-anchor=\"middle\">" + escape(l.y) + "</text>\n";
  s += "<path d=\"M" + fmt(kLeft) + " " + fmt(kTop) + " V"
       + fmt(kHeight - kBottom) + " H" + fmt(kWidth - kRight)
       + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(kHeight - kBottom + 16)
         + "\" text-anchor=\"middle\">" + tick(xv) + "</text>\n";
    s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(f.py(yv) + 4)
         + "\" text-anchor=\"end\">" + tick(yv) + "</text>\n";
  }
  return s;
}

}  // namespace

std::string svg_line_plot(std::span<const double> y, const PlotLabels &labels) {
  Frame f{ 0.0, std::max<double>(1.0, static_cast<double>(y.size()) - 1.0),
           0.0, 1.0 };
  bool any = false;
  for (double v: y) {
    if (!std::isfinite(v))
      continue;
    f.y0 = any ? std::min(f.y0, v) : v;
    f.y1 = any ? std::max(f.y1, v) : v;
    any = true;
  }
  std::string s = open(f, labels);
  std::string path;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]))
      continue;
    path += (path.empty() ? "M" : " L") + fmt(f.px(static_cast<double>(i)))
            + " " + fmt(f.py(y[i]));
  }
  if (!path.empty())
    s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"#1f5fa8\" "
         "stroke-width=\"1.2\"/>\n";
  return s + "</svg>\n";
}

std::string svg_histogram(std::span<const double> values, int bins,
                          const PlotLabels &labels,
                          std::optional<double> marker) {
  if (bins < 1)
    throw ContractViolation("histogram needs at least one bin");
  std::vector<double> v;
  for (double x: values)
    if (std::isfinite(x))
      v.push_back(x);
  double lo = 0.0, hi = 1.0;
  if (!v.empty()) {
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
  }
  if (marker) {
    lo = std::min(lo, *marker);
    hi = std::max(hi, *marker);
  }
  if (hi <= lo)
    hi = lo + 1.0;
  std::vector<int> count(bins, 0);
  for (double x: v) {
    const int b = std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins));
    ++count[b];
  }
  const int top = std::max(1, *std::max_element(count.begin(), count.end()));
  const Frame f{ lo, hi, 0.0, static_cast<double>(top) };
  std::string s = open(f, labels);
  const double w = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    if (!count[b])
      continue;
    const double x0 = f.px(lo + b * w), x1 = f.px(lo + (b + 1) * w);
    const double y = f.py(count[b]);
    s += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y) + "\" width=\""
         + fmt(x1 - x0) + "\" height=\"" + fmt(f.py(0.0) - y)
         + "\" fill=\"#7aa6d6\" stroke=\"#1f5fa8\"/>\n";
  }
  if (marker)
    s += "<line x1=\"" + fmt(f.px(*marker)) + "\" x2=\"" + fmt(f.px(*marker))
         + "\" y1=\"" + fmt(kTop) + "\" y2=\"" + fmt(kHeight - kBottom)
         + "\" stroke=\"#c0392b\" stroke-dasharray=\"5,4\"/>\n";
  return s + "</svg>\n";
}

}  // namespace canondiff
