#include "imagesi/finetune.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace imagesi {

// --- parameters -------------------------------------------------------------

HeadParams HeadParams::zeros(Eigen::Index d, Eigen::Index hidden) {
  return {Matrix::Zero(hidden, d), Vector::Zero(hidden), Matrix::Zero(d, hidden), Vector::Zero(d)};
}

Vector HeadParams::flatten() const {
  Vector out(size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) out(k++) = A(i, j);
  for (Eigen::Index i = 0; i < a.size(); ++i) out(k++) = a(i);
  for (Eigen::Index i = 0; i < B.rows(); ++i)
    for (Eigen::Index j = 0; j < B.cols(); ++j) out(k++) = B(i, j);
  for (Eigen::Index i = 0; i < b.size(); ++i) out(k++) = b(i);
  return out;
}

HeadParams HeadParams::unflatten(const Vector& flat, Eigen::Index d, Eigen::Index hidden) {
  HeadParams p = zeros(d, hidden);
  if (flat.size() != p.size()) throw Error(Errc::invalid_argument, "head parameters: wrong flat length");
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p.A.rows(); ++i)
    for (Eigen::Index j = 0; j < p.A.cols(); ++j) p.A(i, j) = flat(k++);
  for (Eigen::Index i = 0; i < p.a.size(); ++i) p.a(i) = flat(k++);
  for (Eigen::Index i = 0; i < p.B.rows(); ++i)
    for (Eigen::Index j = 0; j < p.B.cols(); ++j) p.B(i, j) = flat(k++);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b(i) = flat(k++);
  return p;
}

bool HeadParams::all_finite() const {
  return A.allFinite() && a.allFinite() && B.allFinite() && b.allFinite();
}

// --- head -------------------------------------------------------------------

EmbeddingHead EmbeddingHead::identity(Eigen::Index d, Eigen::Index hidden, RngSeed seed) {
  if (d < 1) throw Error(Errc::invalid_argument, "embedding head: d must be positive");
  if (hidden <= 0) hidden = d;
  HeadParams p = HeadParams::zeros(d, hidden);
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (Eigen::Index i = 0; i < p.A.rows(); ++i)
    for (Eigen::Index j = 0; j < p.A.cols(); ++j) p.A(i, j) = normal(rng);
  return EmbeddingHead(std::move(p));
}

EmbeddingHead::EmbeddingHead(HeadParams params) : params_(std::move(params)) {
  const auto d = params_.B.rows();
  const auto h = params_.A.rows();
  if (d < 1 || h < 1 || params_.A.cols() != d || params_.a.size() != h || params_.B.cols() != h ||
      params_.b.size() != d) {
    throw Error(Errc::invalid_argument, "embedding head: inconsistent parameter shapes");
  }
  if (!params_.all_finite()) throw Error(Errc::numerical, "embedding head: non-finite parameter");
}

bool operator==(const EmbeddingHead& l, const EmbeddingHead& r) {
  const auto& p = l.params_;
  const auto& q = r.params_;
  return p.A.rows() == q.A.rows() && p.A.cols() == q.A.cols() && p.A == q.A && p.a == q.a &&
         p.B == q.B && p.b == q.b;
}

namespace {

struct Forward {
  Matrix hidden;  // n × h, tanh activations
  Matrix out;     // n × d
};

Forward forward_cached(const HeadParams& p, const Matrix& x) {
  Forward f;
  Matrix z = x * p.A.transpose();
  z.rowwise() += p.a.transpose();
  f.hidden = z.array().tanh().matrix();
  f.out = x;
  f.out.noalias() += f.hidden * p.B.transpose();
  f.out.rowwise() += p.b.transpose();
  return f;
}

HeadParams backward(const HeadParams& p, const Matrix& x, const Forward& f, const Matrix& grad_out) {
  HeadParams g;
  g.B = grad_out.transpose() * f.hidden;
  g.b = grad_out.colwise().sum().transpose();
  const Matrix grad_z = ((grad_out * p.B).array() * (1.0 - f.hidden.array().square())).matrix();
  g.A = grad_z.transpose() * x;
  g.a = grad_z.colwise().sum().transpose();
  return g;
}

void check_width(const EmbeddingHead& head, const FeatureMatrix& features) {
  if (features.d() != head.d()) {
    throw Error(Errc::invalid_argument, "embedding head expects width " + std::to_string(head.d()) +
                                            ", features have " + std::to_string(features.d()));
  }
}

// Embedding distances over the whole dataset, scaled by their mean over all pairs.
struct Geometry {
  Forward fwd;
  DistanceMatrix dist;
  double mean = 0.0;
  double pairs = 0.0;

  double normalized(Eigen::Index i, Eigen::Index j) const { return dist(i, j) / mean; }
};

Geometry embed(const HeadParams& p, const Matrix& x) {
  Geometry g;
  g.fwd = forward_cached(p, x);
  g.dist = pairwise_distances(g.fwd.out);
  const Eigen::Index n = x.rows();
  g.pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += g.dist(i, j);
  g.mean = sum / g.pairs;
  if (!(g.mean > 0.0)) throw Error(Errc::degenerate, "all embeddings coincide");
  return g;
}

// pair_grad(i, j), i < j, holds dL/d(normalized distance). Chains through the
// mean and the Euclidean norms into the head parameters.
HeadParams backprop_pairs(const HeadParams& p, const Matrix& x, const Geometry& g, const Matrix& pair_grad) {
  const Eigen::Index n = x.rows();
  double through_mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) through_mean += pair_grad(i, j) * g.normalized(i, j);
  const double shared = through_mean / (g.mean * g.pairs);

  Matrix grad_out = Matrix::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = g.dist(i, j);
      if (s == 0.0) continue;  // ‖·‖ has no gradient at 0
      const double w = (pair_grad(i, j) / g.mean - shared) / s;
      const Eigen::RowVectorXd diff = w * (g.fwd.out.row(i) - g.fwd.out.row(j));
      grad_out.row(i) += diff;
      grad_out.row(j) -= diff;
    }
  }
  return backward(p, x, g.fwd, grad_out);
}

void accumulate(Matrix& pair_grad, Eigen::Index i, Eigen::Index j, double v) {
  if (i < j) pair_grad(i, j) += v;
  else pair_grad(j, i) += v;
}

}  // namespace

Matrix EmbeddingHead::forward(const Matrix& x) const {
  if (x.cols() != d()) {
    throw Error(Errc::invalid_argument, "embedding head expects width " + std::to_string(d()) +
                                            ", got " + std::to_string(x.cols()));
  }
  return forward_cached(params_, x).out;
}

FeatureMatrix apply_head(const EmbeddingHead& head, const FeatureMatrix& features) {
  check_width(head, features);
  return features.with_data(head.forward(features.data()));
}

// --- MDS⁻¹ ------------------------------------------------------------------

LossResult mds_inverse_loss(const EmbeddingHead& head, const FeatureMatrix& features,
                            const InteractionSpec& interaction) {
  check_width(head, features);
  validate_interaction(interaction, features);
  const auto m = static_cast<Eigen::Index>(interaction.moved.size());
  std::vector<Eigen::Index> idx;
  for (const auto& p : interaction.moved) idx.push_back(features.require_index(p.id));

  DistanceMatrix target;
  try {
    target = mean_normalized(pairwise_distances(interaction.coords()));
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate) throw;
    throw Error(Errc::degenerate, "degenerate interaction: all moved points coincide");
  }

  const Matrix& x = features.data();
  const Geometry g = embed(head.params(), x);
  Matrix pair_grad = Matrix::Zero(x.rows(), x.rows());
  double loss = 0.0;
  for (Eigen::Index u = 0; u < m; ++u) {
    for (Eigen::Index v = u + 1; v < m; ++v) {
      const auto i = idx[static_cast<std::size_t>(u)];
      const auto j = idx[static_cast<std::size_t>(v)];
      const double r = target(u, v) - g.normalized(i, j);
      loss += r * r;
      accumulate(pair_grad, i, j, -2.0 * r);
    }
  }
  return {loss, backprop_pairs(head.params(), x, g, pair_grad)};
}

// --- triplets ---------------------------------------------------------------

void TripletConfig::validate() const {
  if (!(eps_p > 0.0) || !(eps_n > 0.0)) throw Error(Errc::invalid_argument, "triplet: eps_p and eps_n must be > 0");
  if (!(eps_p < eps_n)) throw Error(Errc::invalid_argument, "triplet: eps_p must be < eps_n");
  if (!(margin > 0.0)) throw Error(Errc::invalid_argument, "triplet: margin must be > 0");
  if (triplets_per_anchor < 1) throw Error(Errc::invalid_argument, "triplet: triplets_per_anchor must be >= 1");
}

TripletPools build_triplet_pools(const ItemId& anchor, const InteractionSpec& interaction,
                                 const TripletConfig& cfg) {
  cfg.validate();
  const MovedPoint* a = nullptr;
  for (const auto& p : interaction.moved)
    if (p.id == anchor) a = &p;
  if (!a) throw Error(Errc::not_found, "anchor \"" + anchor + "\" is not among the moved points");

  TripletPools pools;
  for (const auto& v : interaction.moved) {
    if (v.id == anchor) continue;
    const double dist = std::hypot(v.x - a->x, v.y - a->y);
    if (dist < cfg.eps_p) pools.positives.push_back(v.id);
    if (dist > cfg.eps_n) pools.negatives.push_back(v.id);
  }
  return pools;
}

std::vector<Triplet> sample_triplets(const InteractionSpec& interaction, const TripletConfig& cfg, RngSeed seed) {
  cfg.validate();
  if (interaction.moved.size() < 2) throw Error(Errc::invalid_argument, "triplets need at least 2 moved points");
  Rng rng = make_rng(seed);
  std::vector<Triplet> out;
  for (const auto& a : interaction.moved) {
    const auto pools = build_triplet_pools(a.id, interaction, cfg);
    if (pools.positives.empty() || pools.negatives.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_p(0, pools.positives.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_n(0, pools.negatives.size() - 1);
    for (int t = 0; t < cfg.triplets_per_anchor; ++t) {
      const auto& pos = pools.positives[pick_p(rng)];
      const auto& neg = pools.negatives[pick_n(rng)];
      out.push_back({a.id, pos, neg});
    }
  }
  if (out.empty()) {
    throw Error(Errc::invalid_argument,
                "no valid triplets: no anchor has both a positive (d < eps_p) and a negative (d > eps_n)");
  }
  return out;
}

LossResult triplet_margin_loss(const EmbeddingHead& head, const FeatureMatrix& features,
                               const std::vector<Triplet>& triplets, double margin) {
  check_width(head, features);
  if (triplets.empty()) throw Error(Errc::invalid_argument, "triplet loss: empty triplet list");
  const Matrix& x = features.data();
  const Geometry g = embed(head.params(), x);
  Matrix pair_grad = Matrix::Zero(x.rows(), x.rows());
  const double weight = 1.0 / static_cast<double>(triplets.size());
  double loss = 0.0;
  for (const auto& t : triplets) {
    const auto ia = features.require_index(t.anchor);
    const auto ip = features.require_index(t.positive);
    const auto in = features.require_index(t.negative);
    const double hinge = g.normalized(ia, ip) - g.normalized(ia, in) + margin;
    if (hinge <= 0.0) continue;
    loss += weight * hinge;
    accumulate(pair_grad, ia, ip, weight);
    accumulate(pair_grad, ia, in, -weight);
  }
  return {loss, backprop_pairs(head.params(), x, g, pair_grad)};
}

// --- training ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::invalid_argument, "train: epochs must be >= 1");
  if (!(step_size > 0.0)) throw Error(Errc::invalid_argument, "train: step_size must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw Error(Errc::invalid_argument, "train: invalid Adam moments");
  }
}

FineTuneResult fine_tune(const EmbeddingHead& head, const FeatureMatrix& features,
                         const InteractionSpec& interaction, const TripletConfig& tcfg,
                         const TrainConfig& cfg, const std::vector<Triplet>* triplets,
                         const ProgressFn& progress) {
  cfg.validate();
  check_width(head, features);

  std::function<LossResult(const EmbeddingHead&)> objective;
  std::vector<Triplet> sampled;
  switch (interaction.method) {
    case Method::mds_inverse:
      validate_interaction(interaction, features);
      objective = [&](const EmbeddingHead& h) { return mds_inverse_loss(h, features, interaction); };
      break;
    case Method::triplet:
      tcfg.validate();
      if (!triplets) {
        validate_interaction(interaction, features);
        sampled = sample_triplets(interaction, tcfg, cfg.seed);
        triplets = &sampled;
      }
      objective = [&](const EmbeddingHead& h) { return triplet_margin_loss(h, features, *triplets, tcfg.margin); };
      break;
    case Method::wmds_inverse:
      throw Error(Errc::invalid_argument, "fine_tune: wmds_inverse re-weights features and does not train a head");
  }

  const Eigen::Index d = head.d();
  const Eigen::Index h = head.hidden();
  Vector theta = head.params().flatten();
  Vector m1 = Vector::Zero(theta.size());
  Vector m2 = Vector::Zero(theta.size());
  double pow1 = 1.0;
  double pow2 = 1.0;

  FineTuneResult res{head, {}};
  res.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
  double best = std::numeric_limits<double>::infinity();
  EmbeddingHead current = head;

  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const LossResult lr = objective(current);
    if (!std::isfinite(lr.loss) || !lr.grad.all_finite()) {
      std::ostringstream msg;
      msg << "fine_tune: non-finite loss or gradient at epoch " << epoch << " (loss " << lr.loss << ", last finite "
          << (res.loss_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : res.loss_trace.back())
          << ", step size " << cfg.step_size << ")";
      throw Error(Errc::numerical, msg.str());
    }
    res.loss_trace.push_back(lr.loss);
    if (lr.loss < best) {
      best = lr.loss;
      res.head = current;
    }
    if (progress) progress(epoch, cfg.epochs, lr.loss);
    if (epoch == cfg.epochs) break;

    const Vector g = lr.grad.flatten();
    pow1 *= cfg.beta1;
    pow2 *= cfg.beta2;
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Vector m1_hat = m1 / (1.0 - pow1);
    const Vector m2_hat = m2 / (1.0 - pow2);
    theta.array() -= cfg.step_size * m1_hat.array() / (m2_hat.array().sqrt() + cfg.epsilon);
    current = EmbeddingHead(HeadParams::unflatten(theta, d, h));
  }
  return res;
}

// --- checkpoints ------------------------------------------------------------

namespace {

nlohmann::json block_json(const Vector& flat, Eigen::Index begin, Eigen::Index count) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index k = 0; k < count; ++k) arr.push_back(flat(begin + k));
  return arr;
}

}  // namespace

std::string head_to_json(const EmbeddingHead& head) {
  const auto& p = head.params();
  const Vector flat = p.flatten();
  nlohmann::json j;
  j["format"] = "imagesi-head";
  j["version"] = 1;
  j["d"] = p.d();
  j["hidden"] = p.hidden();
  Eigen::Index k = 0;
  j["A"] = block_json(flat, k, p.A.size());
  k += p.A.size();
  j["a"] = block_json(flat, k, p.a.size());
  k += p.a.size();
  j["B"] = block_json(flat, k, p.B.size());
  k += p.B.size();
  j["b"] = block_json(flat, k, p.b.size());
  return j.dump();
}

EmbeddingHead head_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("head checkpoint: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "imagesi-head") {
    throw Error(Errc::parse_error, "head checkpoint: not an imagesi-head document");
  }
  try {
  const auto d = j.at("d").get<Eigen::Index>();
  const auto h = j.at("hidden").get<Eigen::Index>();
  if (d < 1 || h < 1) throw Error(Errc::parse_error, "head checkpoint: invalid dimensions");
  HeadParams shape = HeadParams::zeros(d, h);
  Vector flat(shape.size());
  Eigen::Index k = 0;
  const std::pair<const char*, Eigen::Index> blocks[] = {
      {"A", shape.A.size()}, {"a", shape.a.size()}, {"B", shape.B.size()}, {"b", shape.b.size()}};
  for (const auto& [name, count] : blocks) {
    const auto& arr = j.at(name);
    if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != count) {
      throw Error(Errc::parse_error, std::string("head checkpoint: block ") + name + " has wrong length");
    }
    for (const auto& v : arr) flat(k++) = v.get<double>();
  }
  return EmbeddingHead(HeadParams::unflatten(flat, d, h));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("head checkpoint: ") + e.what());
  }
}

void save_head(const std::filesystem::path& path, const EmbeddingHead& head) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::not_found, "cannot write head checkpoint " + path.string());
  out << head_to_json(head) << '\n';
}

EmbeddingHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::not_found, "cannot open head checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return head_from_json(ss.str());
}

}  // namespace imagesi
