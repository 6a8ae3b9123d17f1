#pragma once

#include <string>
#include <vector>

#include "vbcp/linalg.hpp"

namespace vbcp {

/// Static plot rendering: self-contained SVG strings with no timestamps
/// or environment-dependent content, so identical inputs give identical
/// bytes.

struct HeatmapSpec {
  std::string title;
  std::string xlabel;  // axis2 (columns)
  std::string ylabel;  // axis1 (rows)
  std::vector<double> x;  // column labels
  std::vector<double> y;  // row labels
  Matrix values;          // y.size() rows x x.size() cols, expected in [0,1]
};

std::string render_heatmap(const HeatmapSpec& spec);

struct CurvePlotSpec {
  struct Series {
    std::string label;
    int dash_group = 0;  // 0 solid, 1 dashed, 2 dotted, cycles
    std::vector<double> x;
    std::vector<double> mean, lo, hi;          // aggregate line and band
    std::vector<std::vector<double>> lines;    // optional per-run traces
  };

  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_y = false;  // log10 vertical scale (non-positives clamped)
  std::vector<Series> series;
};

std::string render_curves(const CurvePlotSpec& spec);

}  // namespace vbcp
