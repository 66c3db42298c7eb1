#pragma once

#include <string>
#include <vector>

namespace dncl::svg {

// Minimal SVG writers for the report artifacts. No third-party plotting:
// rect grids and polylines cover everything the harness emits.

void write_heatmap(const std::vector<double>& matrix, int n, const std::string& title,
                   const std::string& path);

struct Series {
    std::string label;
    std::string color; // e.g. "#d62728"
    std::vector<double> values;
    bool dashed = false;
};

// Categorical x-axis (one tick per label, left to right).
void write_curves(const std::vector<std::string>& x_labels, const std::vector<Series>& series,
                  const std::string& title, const std::string& y_label, const std::string& path);

} // namespace dncl::svg
