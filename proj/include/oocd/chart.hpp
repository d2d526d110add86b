#pragma once

#include <string>
#include <utility>
#include <vector>

namespace oocd {

struct ChartSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Minimal SVG line chart, one file per chart.
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series);

}  // namespace oocd
