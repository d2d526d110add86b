#include "oocd/chart.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "oocd/errors.hpp"

namespace oocd {

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series) {
    const int W = 640, H = 420, ml = 70, mr = 30, mt = 50, mb = 60;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' font-family='sans-serif' font-size='12'>\n";
    out << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
    out << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
        << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        out << "<text x='" << px(xv) << "' y='" << H - mb + 18
            << "' text-anchor='middle'>" << xv << "</text>\n";
        out << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
            << "' text-anchor='end'>" << yv << "</text>\n";
        out << "<line x1='" << ml << "' y1='" << py(yv) << "' x2='" << W - mr << "' y2='"
            << py(yv) << "' stroke='#dddddd'/>\n";
    }
    out << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 16
        << "' text-anchor='middle'>" << x_label << "</text>\n";
    out << "<text x='18' y='" << (mt + H - mb) / 2 << "' text-anchor='middle' transform='rotate(-90 18 "
        << (mt + H - mb) / 2 << ")'>" << y_label << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 5];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (const auto& [x, y] : series[s].points) out << px(x) << "," << py(y) << " ";
        out << "'/>\n";
        for (const auto& [x, y] : series[s].points) {
            out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='" << color
                << "'/>\n";
        }
        out << "<text x='" << W - mr - 4 << "' y='" << mt + 16 * (s + 1)
            << "' text-anchor='end' fill='" << color << "'>" << series[s].name << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace oocd
