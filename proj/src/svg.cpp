#include "flowobs/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowobs/error.hpp"

namespace flowobs {

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v, const char* fmt = "%.2f") {
    char buf[48];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

std::string tick_label(double v) { return num(v, "%.4g"); }

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!(lo <= hi)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo <= 1e-300 + 1e-12 * std::abs(hi)) {
            const double pad = std::max(std::abs(hi) * 0.05, 1e-12);
            lo -= pad;
            hi += pad;
        }
    }
};

void render_panel(std::ostringstream& out, const PlotPanel& panel, const PlotFigure& fig, double top) {
    const double left = 80.0, right = 20.0, head = 28.0, foot = 40.0;
    const double w = fig.width - left - right;
    const double h = fig.panel_height - head - foot;
    const double y0 = top + head;

    Range xr, yr;
    for (const auto& s : panel.series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xr.add(s.x[i]);
            yr.add(s.y[i]);
        }
    }
    xr.finish();
    yr.finish();
    auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * w; };
    auto py = [&](double y) { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; };

    out << "<text x=\"" << num(left) << "\" y=\"" << num(top + 18) << "\" font-size=\"14\">" << escape(panel.title)
        << "</text>\n";
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(y0) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = xr.lo + (xr.hi - xr.lo) * k / 4.0;
        const double fy = yr.lo + (yr.hi - yr.lo) * k / 4.0;
        out << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(px(fx)) << "\" y2=\""
            << num(y0 + h) << "\" stroke=\"#ddd\"/>\n";
        out << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(left + w) << "\" y2=\""
            << num(py(fy)) << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(y0 + h + 16) << "\" font-size=\"11\" text-anchor=\"middle\">"
            << tick_label(fx) << "</text>\n";
        out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(fy) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
            << tick_label(fy) << "</text>\n";
    }
    out << "<text x=\"" << num(left + w / 2) << "\" y=\"" << num(y0 + h + 34)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(fig.x_label) << "</text>\n";
    out << "<text x=\"14\" y=\"" << num(y0 + h / 2) << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << num(y0 + h / 2) << ")\">" << escape(panel.y_label) << "</text>\n";

    double legend_y = y0 + 14;
    for (const auto& s : panel.series) {
        const std::size_t n = std::min(s.x.size(), s.y.size());
        const std::size_t stride = std::max<std::size_t>(1, (n + fig.max_points - 1) / std::max<std::size_t>(1, fig.max_points));
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) out << " stroke-dasharray=\"6,4\"";
        out << " points=\"";
        for (std::size_t i = 0; i < n; i += stride) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            out << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
        }
        if (n > 0 && (n - 1) % stride != 0 && std::isfinite(s.y[n - 1]))
            out << num(px(s.x[n - 1])) << ',' << num(py(s.y[n - 1]));
        out << "\"/>\n";
        out << "<line x1=\"" << num(left + w - 150) << "\" y1=\"" << num(legend_y) << "\" x2=\"" << num(left + w - 120)
            << "\" y2=\"" << num(legend_y) << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
            << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
        out << "<text x=\"" << num(left + w - 114) << "\" y=\"" << num(legend_y + 4) << "\" font-size=\"11\">"
            << escape(s.label) << "</text>\n";
        legend_y += 16;
    }
}

}  // namespace

std::string render_svg(const PlotFigure& figure) {
    std::ostringstream out;
    const int height = figure.panel_height * static_cast<int>(std::max<std::size_t>(1, figure.panels.size()));
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << figure.width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    double top = 0.0;
    for (const auto& panel : figure.panels) {
        render_panel(out, panel, figure, top);
        top += figure.panel_height;
    }
    out << "</svg>\n";
    return out.str();
}

void write_svg(const std::filesystem::path& path, const PlotFigure& figure) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot open " + path.string() + " for writing");
    out << render_svg(figure);
}

}  // namespace flowobs
