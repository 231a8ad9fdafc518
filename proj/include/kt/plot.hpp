#pragma once

#include <string>
#include <vector>

namespace kt {

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
    bool line = true;  // false: markers only
    std::string color; // empty: auto from a fixed palette
};

struct PlotOptions {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
    bool identity = false;   // draw the y = x guide line
    double band = 0.0;       // > 1: shade [y/band, y*band] around y = x
    int width = 760, height = 520;
};

// Self-contained SVG (inline styling, no external references). Non-finite and
// non-positive-on-log points are dropped.
void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const PlotOptions& options);

}  // namespace kt
