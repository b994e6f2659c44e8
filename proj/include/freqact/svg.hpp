#pragma once

#include <string>
#include <vector>

namespace freqact::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

// Multi-series line chart with axes, ticks, and a legend.
std::string line_chart(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel,
                       const std::vector<Series>& series, int width = 720,
                       int height = 440);

// Scatter with one text label per point (Pareto fronts and the like).
std::string scatter(const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<double>& x,
                    const std::vector<double>& y,
                    const std::vector<std::string>& labels, int width = 720,
                    int height = 440);

// Row-major heat map; cell (r, c) colored by values[r*cols + c] on a dark
// low / bright high ramp with a value-range legend.
std::string heatmap(const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, int rows, int cols,
                    const std::vector<double>& values, int width = 720,
                    int height = 440);

}  // namespace freqact::svg
