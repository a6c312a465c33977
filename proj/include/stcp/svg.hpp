#pragma once

#include <string>
#include <vector>

namespace stcp {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool line = true;
  bool markers = false;
  bool dashed = false;
};

/// Axis ranges with lo == hi are taken from the finite data. Non-finite
/// points are skipped and break polylines.
struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;
  bool diagonal = false;  // y = x reference line
  std::vector<PlotSeries> series;
};

/// Standalone SVG document; numbers printed at fixed precision, so equal
/// specs give equal bytes.
[[nodiscard]] std::string render_svg(const PlotSpec& spec);

}  // namespace stcp
