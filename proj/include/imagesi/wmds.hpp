#pragma once

#include <iosfwd>

#include "imagesi/core.hpp"
#include "imagesi/mds.hpp"

namespace imagesi {

/// Non-negative per-feature weights summing to one.
class WeightVector {
 public:
  static WeightVector uniform(Eigen::Index d);
  /// Validates the simplex invariants (tolerance 1e-9 on the sum).
  explicit WeightVector(Vector w);

  const Vector& values() const noexcept { return w_; }
  Eigen::Index d() const noexcept { return w_.size(); }
  double operator[](Eigen::Index k) const { return w_(k); }

 private:
  Vector w_;
};

/// sqrt(sum_k w_k (x_k - y_k)^2)
double weighted_distance(const Eigen::Ref<const Eigen::RowVectorXd>& xi,
                         const Eigen::Ref<const Eigen::RowVectorXd>& xj, const WeightVector& w);

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(const Vector& v);

struct WmdsConfig {
  int steps = 500;
  double step_size = 0.05;

  void validate() const;
};

/// Stress between mean-normalized moved-point 2D distances and weighted
/// feature distances (normalized by their mean over all dataset pairs).
/// Returns +inf when every weighted distance is zero.
double wmds_inverse_loss(const WeightVector& w, const FeatureMatrix& features, const InteractionSpec& interaction);

/// Analytic gradient of wmds_inverse_loss with respect to the raw weights.
Vector wmds_inverse_gradient(const Vector& w, const FeatureMatrix& features, const InteractionSpec& interaction);

/// Projected gradient descent from uniform weights; a step that raises the loss
/// is rejected and the step size halved. Returns the best iterate.
WeightVector wmds_inverse(const InteractionSpec& interaction, const FeatureMatrix& features,
                          const WmdsConfig& cfg = {});

/// Scales column k by sqrt(w_k) and projects without a head.
Layout2D wmds_project(const FeatureMatrix& features, const WeightVector& w, const MdsConfig& cfg = {});

/// CSV `feature_index,weight`.
void write_weights_csv(std::ostream& out, const WeightVector& w);

}  // namespace imagesi
