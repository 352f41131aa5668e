#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "imagesi/core.hpp"

namespace imagesi {

/// Parameter blocks of the residual head M(x) = x + B·tanh(A·x + a) + b.
/// Also used as the gradient container.
struct HeadParams {
  Matrix A;  ///< hidden × d
  Vector a;  ///< hidden
  Matrix B;  ///< d × hidden
  Vector b;  ///< d

  static HeadParams zeros(Eigen::Index d, Eigen::Index hidden);

  Eigen::Index d() const noexcept { return B.rows(); }
  Eigen::Index hidden() const noexcept { return A.rows(); }
  Eigen::Index size() const noexcept { return A.size() + a.size() + B.size() + b.size(); }

  /// Row-major concatenation A, a, B, b.
  Vector flatten() const;
  static HeadParams unflatten(const Vector& flat, Eigen::Index d, Eigen::Index hidden);

  bool all_finite() const;
};

/// Trainable residual transform over frozen features. A fresh head has a zero
/// output layer (B = 0, b = 0) and is therefore exactly the identity.
class EmbeddingHead {
 public:
  /// `hidden` ≤ 0 means hidden = d. A is drawn N(0, 1/d) from `seed`.
  static EmbeddingHead identity(Eigen::Index d, Eigen::Index hidden = 0, RngSeed seed = {});

  explicit EmbeddingHead(HeadParams params);

  const HeadParams& params() const noexcept { return params_; }
  Eigen::Index d() const noexcept { return params_.d(); }
  Eigen::Index hidden() const noexcept { return params_.hidden(); }

  /// Row-wise M(x) for an n×d matrix.
  Matrix forward(const Matrix& x) const;

  friend bool operator==(const EmbeddingHead& l, const EmbeddingHead& r);

 private:
  HeadParams params_;
};

FeatureMatrix apply_head(const EmbeddingHead& head, const FeatureMatrix& features);

struct LossResult {
  double loss = 0.0;
  HeadParams grad;
};

/// Stress between normalized target 2D distances and normalized embedding
/// distances, summed over moved pairs. Targets are divided by their mean over
/// moved pairs; embedding distances by their mean over all dataset pairs.
LossResult mds_inverse_loss(const EmbeddingHead& head, const FeatureMatrix& features,
                            const InteractionSpec& interaction);

struct TripletConfig {
  double eps_p = 0.35;
  double eps_n = 0.70;
  double margin = 1.0;
  int triplets_per_anchor = 4;

  void validate() const;
};

struct Triplet {
  ItemId anchor;
  ItemId positive;
  ItemId negative;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletPools {
  std::vector<ItemId> positives;  ///< d(a,v) < eps_p
  std::vector<ItemId> negatives;  ///< d(a,v) > eps_n
};

TripletPools build_triplet_pools(const ItemId& anchor, const InteractionSpec& interaction,
                                 const TripletConfig& cfg);

/// Up to `triplets_per_anchor` uniform draws per anchor whose pools are both
/// non-empty, anchors visited in interaction order.
std::vector<Triplet> sample_triplets(const InteractionSpec& interaction, const TripletConfig& cfg,
                                     RngSeed seed);

/// Mean hinge max(0, d(a,p) - d(a,n) + margin) over triplets, with embedding
/// distances divided by their mean over all dataset pairs.
LossResult triplet_margin_loss(const EmbeddingHead& head, const FeatureMatrix& features,
                               const std::vector<Triplet>& triplets, double margin);

struct TrainConfig {
  int epochs = 100;
  double step_size = 1e-3;
  RngSeed seed{0};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct FineTuneResult {
  EmbeddingHead head;
  /// Loss before each step, then the loss after the last step (epochs + 1 entries).
  std::vector<double> loss_trace;
};

using ProgressFn = std::function<void(int epoch, int epochs, double loss)>;

/// Full-batch Adam on the loss selected by interaction.method, starting from
/// `head`. Returns the lowest-loss iterate seen, so the result never scores
/// worse than the starting head. When `triplets` is null and the method is
/// triplet, triplets are drawn with sample_triplets(…, cfg.seed).
FineTuneResult fine_tune(const EmbeddingHead& head, const FeatureMatrix& features,
                         const InteractionSpec& interaction, const TripletConfig& tcfg,
                         const TrainConfig& cfg, const std::vector<Triplet>* triplets = nullptr,
                         const ProgressFn& progress = {});

// Checkpoints: JSON with dimensions and the four blocks in row-major order.
std::string head_to_json(const EmbeddingHead& head);
EmbeddingHead head_from_json(std::string_view text);
void save_head(const std::filesystem::path& path, const EmbeddingHead& head);
EmbeddingHead load_head(const std::filesystem::path& path);

}  // namespace imagesi
