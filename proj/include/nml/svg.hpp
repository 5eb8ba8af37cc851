#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace nml::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

// Minimal line chart. CSV output is the contract; these plots are a viewing
// convenience only.
inline void write_chart(const std::string& path, const std::string& title, const std::vector<Series>& series) {
    const double w = 720, h = 420, ml = 70, mr = 20, mt = 40, mb = 40;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (first) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                first = false;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };

    std::ofstream out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + k * (xmax - xmin) / 4.0;
        const double yv = ymin + k * (ymax - ymin) / 4.0;
        out << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
            << fmt(xv) << "</text>\n";
        out << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
            << fmt(yv) << "</text>\n";
    }
    double legend_y = mt + 6;
    for (const auto& s : series) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) out << " stroke-dasharray=\"6 4\"";
        out << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            out << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        out << "\"/>\n";
        out << "<text x=\"" << w - mr - 6 << "\" y=\"" << legend_y << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
            << s.color << "\">" << s.name << "</text>\n";
        legend_y += 14;
    }
    out << "</svg>\n";
}

}  // namespace nml::svg
