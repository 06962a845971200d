#pragma once

#include <string>
#include <vector>

namespace wpcm {

struct SvgSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool points = false;  // scatter instead of polyline
  std::string label;
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  std::vector<double> hlines;  // dashed horizontal reference lines
  bool log_y = false;
  int width = 720;
  int height = 420;
};

// Self-contained SVG document. Non-finite values are skipped.
std::string render_svg(const SvgPlot& plot);

}  // namespace wpcm
