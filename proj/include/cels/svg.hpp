#pragma once

#include <string>
#include <vector>

namespace cels {

// Minimal hand-emitted SVG charts; no plotting dependency.

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
};

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::vector<SvgSeries>& series, int width = 720,
                           int height = 420);

// Original, NUN and counterfactual polylines with a saliency heat strip.
std::string instance_plot_svg(const std::vector<double>& x,
                              const std::vector<double>& nun,
                              const std::vector<double>& cf,
                              const std::vector<double>& theta,
                              const std::string& title, int width = 840,
                              int height = 480);

}  // namespace cels
