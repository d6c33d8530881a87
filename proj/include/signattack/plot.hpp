#pragma once

#include <string>
#include <vector>

namespace signattack {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Renders a simple line chart (axes, ticks, legend) to an image file.
void line_chart(const std::string& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<PlotSeries>& series);

// Grouped bar chart; one bar per (group, series) pair.
void bar_chart(const std::string& path, const std::string& title,
               const std::vector<std::string>& groups, const std::vector<std::string>& series,
               const std::vector<std::vector<double>>& values);

}  // namespace signattack
