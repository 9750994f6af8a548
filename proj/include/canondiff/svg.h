//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_SVG_H_
#define CANONDIFF_SVG_H_

#include <optional>
#include <span>
#include <string>

namespace canondiff {

struct PlotLabels {
  std::string title;
  std::string x;
  std::string y;
};

// Polyline of y against its index. Non-finite values are skipped.
std::string svg_line_plot(std::span<const double> y, const PlotLabels &labels);

// Histogram with `bins` equal-width bins over the finite values' range. A
// dashed vertical line is drawn at `marker` when given.
std::string svg_histogram(std::span<const double> values, int bins,
                          const PlotLabels &labels,
                          std::optional<double> marker = std::nullopt);

}  // namespace canondiff

#endif  // CANONDIFF_SVG_H_
