#pragma once

#include <vector>

#include "imagesi/core.hpp"

namespace imagesi {

struct EvalScore {
  double silhouette = 0.0;
  double adjusted = 0.0;  ///< 2 × silhouette; 1.0 is the target spread
  Eigen::Index n = 0;
  int classes = 0;
};

/// Mean silhouette over points for integer class codes. Points in a singleton
/// class score 0.
double silhouette(const Coords& coords, const std::vector<int>& classes);

/// Silhouette of the layout against labels for every layout point.
double silhouette(const Layout2D& layout, const LabelMap& labels);

EvalScore adjusted_silhouette(const Layout2D& layout, const LabelMap& labels);

}  // namespace imagesi
