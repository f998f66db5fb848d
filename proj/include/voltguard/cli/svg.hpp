#pragma once

#include <string>
#include <vector>

namespace voltguard::cli {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool markers_only = false;  ///< scatter instead of polyline
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 640;
    int height = 400;
};

/// Standalone SVG document with axes, tick labels and a legend.
std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace voltguard::cli
