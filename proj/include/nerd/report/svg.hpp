#pragma once

#include <string>
#include <vector>

#include "nerd/numerics/linalg.hpp"
#include "nerd/types.hpp"

namespace nerd::report {

struct Series {
  std::string name;
  Vector x;
  Vector y;
  Vector band;  ///< optional +/- band around y (empty = none)
};

/// Minimal deterministic SVG plots. Output depends only on the inputs, so
/// identical data gives identical bytes.
std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

/// Scatter with an optional fitted line y = intercept + slope * x.
std::string scatter_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& groups, const double* intercept = nullptr,
                         const double* slope = nullptr);

std::string heatmap(const std::string& title, const Matrix& values, const std::vector<std::string>& labels);

std::string dendrogram(const std::string& title, const numerics::Dendrogram& tree,
                       const std::vector<std::string>& leaf_labels);

}  // namespace nerd::report
