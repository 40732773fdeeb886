#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gtpde {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;  ///< scatter points instead of a polyline
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_y = false;
  int width = 640;
  int height = 420;
};

std::string line_plot_svg(const PlotSpec& spec, const std::vector<Series>& series);
void write_line_plot(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace gtpde
