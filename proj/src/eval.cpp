#include "imagesi/eval.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

namespace imagesi {

double silhouette(const Coords& coords, const std::vector<int>& classes) {
  const Eigen::Index n = coords.rows();
  if (n == 0) throw Error(Errc::invalid_argument, "silhouette: empty layout");
  if (static_cast<Eigen::Index>(classes.size()) != n) {
    throw Error(Errc::invalid_argument, "silhouette: label count does not match point count");
  }
  if (n < 3) throw Error(Errc::invalid_argument, "silhouette: need at least 3 points");

  // Re-code to 0..k-1 so arbitrary class codes work.
  std::map<int, int> code;
  for (int c : classes) code.emplace(c, 0);
  int k = 0;
  for (auto& [c, v] : code) v = k++;
  if (k < 2) throw Error(Errc::invalid_argument, "silhouette: need at least 2 classes");

  std::vector<int> cls(classes.size());
  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    cls[i] = code[classes[i]];
    size[static_cast<std::size_t>(cls[i])] += 1.0;
  }

  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[static_cast<std::size_t>(cls[static_cast<std::size_t>(j)])] += (coords.row(i) - coords.row(j)).norm();
    }
    const auto own = static_cast<std::size_t>(cls[static_cast<std::size_t>(i)]);
    if (size[own] <= 1.0) continue;  // singleton scores 0
    const double a = sums[own] / (size[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c == own) continue;
      b = std::min(b, sums[c] / size[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double silhouette(const Layout2D& layout, const LabelMap& labels) {
  if (layout.n() == 0) throw Error(Errc::invalid_argument, "silhouette: empty layout");
  return silhouette(layout.coords, labels.encode(layout.ids));
}

EvalScore adjusted_silhouette(const Layout2D& layout, const LabelMap& labels) {
  EvalScore s;
  s.silhouette = silhouette(layout, labels);
  s.adjusted = 2.0 * s.silhouette;
  s.n = layout.n();
  const auto codes = labels.encode(layout.ids);
  s.classes = static_cast<int>(std::set<int>(codes.begin(), codes.end()).size());
  return s;
}

}  // namespace imagesi
