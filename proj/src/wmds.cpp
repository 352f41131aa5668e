#include "imagesi/wmds.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

namespace imagesi {

WeightVector WeightVector::uniform(Eigen::Index d) {
  if (d < 1) throw Error(Errc::invalid_argument, "weights: d must be positive");
  return WeightVector(Vector::Constant(d, 1.0 / static_cast<double>(d)));
}

WeightVector::WeightVector(Vector w) : w_(std::move(w)) {
  if (w_.size() < 1) throw Error(Errc::invalid_argument, "weights: empty weight vector");
  if (!w_.allFinite()) throw Error(Errc::invalid_argument, "weights: non-finite entry");
  if (w_.minCoeff() < 0.0) throw Error(Errc::invalid_argument, "weights: negative entry");
  if (std::abs(w_.sum() - 1.0) > 1e-9) throw Error(Errc::invalid_argument, "weights: entries must sum to 1");
}

double weighted_distance(const Eigen::Ref<const Eigen::RowVectorXd>& xi,
                         const Eigen::Ref<const Eigen::RowVectorXd>& xj, const WeightVector& w) {
  if (xi.size() != w.d() || xj.size() != w.d()) {
    throw Error(Errc::invalid_argument, "weighted_distance: length mismatch");
  }
  return std::sqrt(((xi - xj).array().square() * w.values().transpose().array()).sum());
}

Vector project_to_simplex(const Vector& v) {
  // Sort-based projection: find the largest rho with u_rho > (sum_{i<=rho} u_i - 1) / rho.
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumsum += u[i];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  Vector out = (v.array() - theta).max(0.0).matrix();
  const double s = out.sum();
  if (s > 0.0) out /= s;  // absorbs rounding so the sum is 1 to machine precision
  return out;
}

void WmdsConfig::validate() const {
  if (steps < 1) throw Error(Errc::invalid_argument, "wmds: steps must be >= 1");
  if (!(step_size > 0.0)) throw Error(Errc::invalid_argument, "wmds: step_size must be > 0");
}

namespace {

struct Problem {
  std::vector<Eigen::Index> idx;  // moved rows
  DistanceMatrix target;          // m × m, mean-normalized
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  // sq[p](k): squared feature difference of pair p = (i<j) in row-major pair order
  Matrix sq;
};

Problem make_problem(const FeatureMatrix& features, const InteractionSpec& interaction) {
  validate_interaction(interaction, features);
  Problem pb;
  pb.n = features.n();
  pb.d = features.d();
  for (const auto& p : interaction.moved) pb.idx.push_back(features.require_index(p.id));
  try {
    pb.target = mean_normalized(pairwise_distances(interaction.coords()));
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate) throw;
    throw Error(Errc::degenerate, "degenerate interaction: all moved points coincide");
  }
  const Matrix& x = features.data();
  pb.sq.resize(pb.n * (pb.n - 1) / 2, pb.d);
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < pb.n; ++i)
    for (Eigen::Index j = i + 1; j < pb.n; ++j) pb.sq.row(p++) = (x.row(i) - x.row(j)).array().square();
  return pb;
}

Eigen::Index pair_index(Eigen::Index n, Eigen::Index i, Eigen::Index j) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

struct Evaluation {
  double loss = std::numeric_limits<double>::infinity();
  Vector grad;
};

Evaluation evaluate(const Problem& pb, const Vector& w, bool with_grad) {
  Evaluation ev;
  const Vector dist = (pb.sq * w).cwiseMax(0.0).cwiseSqrt();
  const double pairs = static_cast<double>(dist.size());
  const double mean = dist.sum() / pairs;
  if (!(mean > 0.0)) return ev;

  const auto m = static_cast<Eigen::Index>(pb.idx.size());
  double loss = 0.0;
  Vector direct = Vector::Zero(pb.d);
  double through_mean = 0.0;
  for (Eigen::Index u = 0; u < m; ++u) {
    for (Eigen::Index v = u + 1; v < m; ++v) {
      const auto p = pair_index(pb.n, pb.idx[static_cast<std::size_t>(u)], pb.idx[static_cast<std::size_t>(v)]);
      const double s = dist(p) / mean;
      const double r = pb.target(u, v) - s;
      loss += r * r;
      if (!with_grad) continue;
      const double g = -2.0 * r;
      through_mean += g * s;
      if (dist(p) > 0.0) direct += (g / (2.0 * dist(p) * mean)) * pb.sq.row(p).transpose();
    }
  }
  ev.loss = loss;
  if (with_grad) {
    Vector mean_grad = Vector::Zero(pb.d);  // d(mean)/dw * pairs
    for (Eigen::Index p = 0; p < dist.size(); ++p)
      if (dist(p) > 0.0) mean_grad += pb.sq.row(p).transpose() / (2.0 * dist(p));
    ev.grad = direct - (through_mean / (mean * pairs)) * mean_grad;
  }
  return ev;
}

}  // namespace

double wmds_inverse_loss(const WeightVector& w, const FeatureMatrix& features, const InteractionSpec& interaction) {
  if (w.d() != features.d()) throw Error(Errc::invalid_argument, "wmds: weight length does not match features");
  return evaluate(make_problem(features, interaction), w.values(), false).loss;
}

Vector wmds_inverse_gradient(const Vector& w, const FeatureMatrix& features, const InteractionSpec& interaction) {
  if (w.size() != features.d()) throw Error(Errc::invalid_argument, "wmds: weight length does not match features");
  auto ev = evaluate(make_problem(features, interaction), w, true);
  if (!std::isfinite(ev.loss)) throw Error(Errc::degenerate, "wmds: all weighted distances are zero");
  return ev.grad;
}

WeightVector wmds_inverse(const InteractionSpec& interaction, const FeatureMatrix& features, const WmdsConfig& cfg) {
  cfg.validate();
  const Problem pb = make_problem(features, interaction);
  Vector w = WeightVector::uniform(features.d()).values();
  Evaluation cur = evaluate(pb, w, true);
  if (!std::isfinite(cur.loss)) throw Error(Errc::degenerate, "wmds: all feature distances are zero");

  double step = cfg.step_size;
  for (int it = 0; it < cfg.steps && step > 1e-14; ++it) {
    const Vector candidate = project_to_simplex(w - step * cur.grad);
    Evaluation next = evaluate(pb, candidate, true);
    if (next.loss > cur.loss || !std::isfinite(next.loss)) {
      step *= 0.5;
      continue;
    }
    w = candidate;
    cur = std::move(next);
  }
  return WeightVector(w);
}

Layout2D wmds_project(const FeatureMatrix& features, const WeightVector& w, const MdsConfig& cfg) {
  if (w.d() != features.d()) throw Error(Errc::invalid_argument, "wmds: weight length does not match features");
  Matrix scaled = features.data() * w.values().cwiseSqrt().asDiagonal();
  return project_embeddings(features.ids(), scaled, cfg);
}

void write_weights_csv(std::ostream& out, const WeightVector& w) {
  out << "feature_index,weight\n";
  for (Eigen::Index k = 0; k < w.d(); ++k) out << k << ',' << format_double(w[k]) << '\n';
}

}  // namespace imagesi
