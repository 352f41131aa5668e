#include "imagesi/mds.hpp"

#include <cmath>
#include <random>

#include "imagesi/finetune.hpp"

namespace imagesi {

void MdsConfig::validate() const {
  if (max_iters < 1) throw Error(Errc::invalid_argument, "mds: max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw Error(Errc::invalid_argument, "mds: rel_tol must be > 0");
}

double stress(const DistanceMatrix& target, const Coords& layout, const PairMask* mask) {
  const Eigen::Index n = target.rows();
  if (target.cols() != n || layout.rows() != n) {
    throw Error(Errc::invalid_argument, "stress: dimension mismatch between target (" + std::to_string(n) +
                                            ") and layout (" + std::to_string(layout.rows()) + ")");
  }
  double s = 0.0;
  if (mask) {
    for (const auto& [i, j] : *mask) {
      if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
        throw Error(Errc::invalid_argument, "stress: invalid mask pair");
      }
      const double r = (layout.row(i) - layout.row(j)).norm() - target(i, j);
      s += r * r;
    }
    return s;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = (layout.row(i) - layout.row(j)).norm() - target(i, j);
      s += r * r;
    }
  }
  return s;
}

double stress(const DistanceMatrix& target, const Layout2D& layout, const PairMask* mask) {
  return stress(target, layout.coords, mask);
}

Layout2D classical_mds_init(const DistanceMatrix& d, const std::vector<ItemId>& ids) {
  const Eigen::Index n = d.rows();
  if (n < 3) throw Error(Errc::invalid_argument, "classical MDS needs at least 3 points");
  if (d.cols() != n) throw Error(Errc::invalid_argument, "classical MDS: distance matrix is not square");
  if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != n) {
    throw Error(Errc::invalid_argument, "classical MDS: id count does not match matrix size");
  }

  // B = -1/2 J D² J
  Matrix sq = d.array().square().matrix();
  const Vector row_mean = sq.rowwise().mean();
  const Vector col_mean = sq.colwise().mean().transpose();
  const double grand = sq.mean();
  Matrix gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      gram(i, j) = -0.5 * (sq(i, j) - row_mean(i) - col_mean(j) + grand);
  gram = 0.5 * (gram + gram.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw Error(Errc::numerical, "classical MDS: eigendecomposition failed");

  Layout2D out{ids, Coords::Zero(n, 2)};
  if (out.ids.empty()) {
    out.ids.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out.ids.push_back(std::to_string(i));
  }
  for (int axis = 0; axis < 2; ++axis) {
    const Eigen::Index col = n - 1 - axis;  // eigenvalues ascend
    const double lambda = std::max(0.0, eig.eigenvalues()(col));
    Vector v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.coords.col(axis) = v * std::sqrt(lambda);
  }
  return out;
}

namespace {

Coords guttman_step(const DistanceMatrix& d, const Coords& x) {
  const Eigen::Index n = d.rows();
  Matrix b = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = (x.row(i) - x.row(j)).norm();
      const double v = dist > 0.0 ? -d(i, j) / dist : 0.0;
      b(i, j) = v;
      b(j, i) = v;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) b(i, i) = -b.row(i).sum();
  return (b * x) / static_cast<double>(n);
}

Coords random_start(Eigen::Index n, RngSeed seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Coords c(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, 0) = u(rng);
    c(i, 1) = u(rng);
  }
  return c;
}

}  // namespace

SmacofResult smacof(const DistanceMatrix& d, const Layout2D& init, const MdsConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = d.rows();
  if (d.cols() != n || init.n() != n) {
    throw Error(Errc::invalid_argument, "smacof: init has " + std::to_string(init.n()) +
                                            " points, distance matrix has " + std::to_string(n));
  }
  if (!d.allFinite()) throw Error(Errc::numerical, "smacof: non-finite distances");

  Coords x = init.coords;
  const double spread = (x.colwise().maxCoeff() - x.colwise().minCoeff()).maxCoeff();
  if (!(spread > 0.0)) x = random_start(n, cfg.seed);

  SmacofResult res;
  double current = stress(d, x);
  res.stress_trace.push_back(current);
  for (int it = 0; it < cfg.max_iters && current > 0.0; ++it) {
    Coords next = guttman_step(d, x);
    const double s = stress(d, next);
    res.stress_trace.push_back(s);
    const double improvement = current - s;
    x = std::move(next);
    const bool converged = improvement < cfg.rel_tol * current;
    current = s;
    if (converged) break;
  }
  res.raw = x;
  res.layout = normalize_layout(Layout2D{init.ids, x});
  return res;
}

Layout2D project_embeddings(const std::vector<ItemId>& ids, const Matrix& embeddings, const MdsConfig& cfg) {
  cfg.validate();
  const DistanceMatrix dn = mean_normalized(pairwise_distances(embeddings));
  const Layout2D init = classical_mds_init(dn, ids);
  return smacof(dn, init, cfg).layout;
}

Layout2D project(const FeatureMatrix& features, const EmbeddingHead* head, const MdsConfig& cfg) {
  if (head) return project_embeddings(features.ids(), apply_head(*head, features).data(), cfg);
  return project_embeddings(features.ids(), features.data(), cfg);
}

}  // namespace imagesi
