#pragma once

// Minimal self-contained SVG line charts for run artifacts. Each figure is a
// vertical stack of panels sharing the time axis.

#include <filesystem>
#include <string>
#include <vector>

namespace flowobs {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;   // truth/measured curves are dashed, estimates solid
};

struct PlotPanel {
    std::string title;
    std::string y_label;
    std::vector<PlotSeries> series;
};

struct PlotFigure {
    std::string x_label = "time [min]";
    std::vector<PlotPanel> panels;
    int width = 760;
    int panel_height = 260;
    std::size_t max_points = 2000;   // series are decimated above this
};

std::string render_svg(const PlotFigure& figure);
void write_svg(const std::filesystem::path& path, const PlotFigure& figure);

}  // namespace flowobs
