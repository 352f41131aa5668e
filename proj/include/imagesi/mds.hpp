#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "imagesi/core.hpp"

namespace imagesi {

class EmbeddingHead;

struct MdsConfig {
  int max_iters = 300;
  double rel_tol = 1e-6;
  /// Only used for the random fallback start when classical MDS collapses.
  RngSeed seed{0};

  void validate() const;
};

using PairMask = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

/// Raw MDS stress: sum over pairs of (layout distance - target)^2.
/// With no mask every i<j pair contributes.
double stress(const DistanceMatrix& target, const Coords& layout, const PairMask* mask = nullptr);
double stress(const DistanceMatrix& target, const Layout2D& layout, const PairMask* mask = nullptr);

/// Torgerson scaling: top two eigenpairs of the double-centred squared
/// distances. Each axis is sign-fixed so its largest-magnitude loading is
/// positive. Coordinates are not normalized.
Layout2D classical_mds_init(const DistanceMatrix& d, const std::vector<ItemId>& ids = {});

struct SmacofResult {
  Layout2D layout;                  ///< normalized into the unit square
  std::vector<double> stress_trace; ///< stress of the start followed by each iterate
  Coords raw;                       ///< final iterate before normalization
};

/// Stress majorization with unit weights (Guttman transform).
SmacofResult smacof(const DistanceMatrix& d, const Layout2D& init, const MdsConfig& cfg = {});

/// Full forward projection: optional head, Euclidean distances scaled to unit
/// mean, classical start, SMACOF, normalization.
Layout2D project(const FeatureMatrix& features, const EmbeddingHead* head = nullptr,
                 const MdsConfig& cfg = {});

/// Same as project() but starting from already-computed embeddings.
Layout2D project_embeddings(const std::vector<ItemId>& ids, const Matrix& embeddings,
                            const MdsConfig& cfg = {});

}  // namespace imagesi
