#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "imagesi/mds.hpp"
#include "imagesi/wmds.hpp"
#include "oracles.hpp"

using namespace imagesi;

namespace {

std::vector<ItemId> make_ids(Eigen::Index n) {
  std::vector<ItemId> ids;
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
  return ids;
}

Vector random_simplex(std::mt19937_64& rng, Eigen::Index d) {
  std::exponential_distribution<double> e(1.0);
  Vector w(d);
  for (Eigen::Index k = 0; k < d; ++k) w(k) = e(rng);
  return w / w.sum();
}

void check_simplex(const Vector& w) {
  CHECK(w.minCoeff() >= 0.0);
  CHECK(std::abs(w.sum() - 1.0) <= 1e-9);
}

double pearson(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean();
  const Vector y = b.array() - b.mean();
  return x.dot(y) / (x.norm() * y.norm());
}

}  // namespace

TEST_CASE("WeightVector invariants") {
  check_simplex(WeightVector::uniform(5).values());
  CHECK_THROWS_AS(WeightVector{Vector::Constant(3, 0.5)}, Error);
  Vector neg(2);
  neg << 1.5, -0.5;
  CHECK_THROWS_AS(WeightVector{neg}, Error);
}

TEST_CASE("weighted_distance") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 2 + trial % 9;
    const Matrix x = oracle::random_matrix(rng, 2, d);
    const double euclid = (x.row(0) - x.row(1)).norm();
    CHECK(std::abs(weighted_distance(x.row(0), x.row(1), WeightVector::uniform(d)) - euclid / std::sqrt(double(d))) <
          1e-12);

    Vector one = Vector::Zero(d);
    one(0) = 1.0;
    CHECK(weighted_distance(x.row(0), x.row(1), WeightVector(one)) == doctest::Approx(std::abs(x(0, 0) - x(1, 0))));

    const Vector w = random_simplex(rng, d);
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) s += w(k) * (x(0, k) - x(1, k)) * (x(0, k) - x(1, k));
    CHECK(weighted_distance(x.row(0), x.row(1), WeightVector(w)) == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
  }
}

TEST_CASE("project_to_simplex") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector v = oracle::random_matrix(rng, 2 + trial % 10, 1, 3.0);
    const Vector p = project_to_simplex(v);
    check_simplex(p);
    // Optimality: no feasible random point is closer to v.
    for (int probe = 0; probe < 10; ++probe) {
      const Vector q = random_simplex(rng, v.size());
      CHECK((p - v).norm() <= (q - v).norm() + 1e-12);
    }
  }
  const Vector already = random_simplex(rng, 6);
  CHECK((project_to_simplex(already) - already).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("wmds_inverse_gradient matches finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 5 + trial % 6;
    const Eigen::Index d = 2 + trial % 7;
    const FeatureMatrix fm(make_ids(n), oracle::random_matrix(rng, n, d));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    InteractionSpec spec{Method::wmds_inverse, {}, {}};
    for (Eigen::Index i = 0; i < 4; ++i) spec.moved.push_back({fm.ids()[static_cast<std::size_t>(i)], u(rng), u(rng)});
    const Vector w = random_simplex(rng, d);
    const auto loss = [&](const Vector& v) {
      // The loss is defined for any positive vector; evaluate without the simplex check.
      const Matrix scaled = fm.data() * v.cwiseSqrt().asDiagonal();
      const DistanceMatrix e = pairwise_distances(scaled);
      const double mu = e.sum() / static_cast<double>(n * (n - 1));
      double t_sum = 0.0;
      std::vector<double> t;
      for (std::size_t i = 0; i < spec.moved.size(); ++i)
        for (std::size_t j = i + 1; j < spec.moved.size(); ++j) {
          t.push_back(std::hypot(spec.moved[i].x - spec.moved[j].x, spec.moved[i].y - spec.moved[j].y));
          t_sum += t.back();
        }
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t i = 0; i < spec.moved.size(); ++i)
        for (std::size_t j = i + 1; j < spec.moved.size(); ++j, ++k) {
          const double r = t[k] / (t_sum / static_cast<double>(t.size())) -
                           e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / mu;
          s += r * r;
        }
      return s;
    };
    CHECK(loss(w) == doctest::Approx(wmds_inverse_loss(WeightVector(w), fm, spec)).epsilon(1e-12));
    CHECK(oracle::max_rel_error(wmds_inverse_gradient(w, fm, spec), oracle::central_diff(loss, w, 1e-6)) < 1e-4);
  }
}

TEST_CASE("wmds_inverse") {
  SUBCASE("classes separated only along feature 1") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<ItemId> ids = make_ids(20);
    Matrix x(20, 2);
    for (Eigen::Index i = 0; i < 20; ++i) x.row(i) << noise(rng) * 3.0, (i < 10 ? 0.0 : 2.0) + noise(rng);
    const FeatureMatrix fm(ids, x);
    InteractionSpec spec{Method::wmds_inverse, {}, {}};
    for (int i = 0; i < 4; ++i) spec.moved.push_back({ids[static_cast<std::size_t>(i)], 0.0, 0.0});
    for (int i = 10; i < 14; ++i) spec.moved.push_back({ids[static_cast<std::size_t>(i)], 1.0, 1.0});
    const auto w = wmds_inverse(spec, fm);
    check_simplex(w.values());
    CHECK(w[1] > 0.9);
    CHECK(wmds_inverse_loss(w, fm, spec) <= wmds_inverse_loss(WeightVector::uniform(2), fm, spec));
  }
  SUBCASE("already optimal uniform weights are kept") {
    // Moved 2D distances proportional to the uniform-weight distances.
    Matrix x(4, 2);
    x << 0, 0, 1, 0, 0, 1, 1, 1;
    const FeatureMatrix fm(make_ids(4), x);
    InteractionSpec spec{Method::wmds_inverse, {{"p0", 0, 0}, {"p1", 1, 0}, {"p2", 0, 1}, {"p3", 1, 1}}, {}};
    const auto w = wmds_inverse(spec, fm);
    CHECK(wmds_inverse_loss(WeightVector::uniform(2), fm, spec) < 1e-28);
    CHECK((w.values() - WeightVector::uniform(2).values()).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("never worse than uniform on random instances") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Index d = 2 + trial % 6;
      const FeatureMatrix fm(make_ids(12), oracle::random_matrix(rng, 12, d));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      InteractionSpec spec{Method::wmds_inverse, {}, {}};
      for (std::size_t i = 0; i < 5; ++i) spec.moved.push_back({fm.ids()[i], u(rng), u(rng)});
      WmdsConfig cfg;
      cfg.steps = 100;
      const auto w = wmds_inverse(spec, fm, cfg);
      check_simplex(w.values());
      CHECK(wmds_inverse_loss(w, fm, spec) <= wmds_inverse_loss(WeightVector::uniform(d), fm, spec));
    }
  }
  SUBCASE("coincident moved points are rejected") {
    const FeatureMatrix fm(make_ids(3), Matrix::Identity(3, 2));
    InteractionSpec spec{Method::wmds_inverse, {{"p0", 0.4, 0.4}, {"p1", 0.4, 0.4}}, {}};
    CHECK_THROWS_AS(wmds_inverse(spec, fm), Error);
  }
}

TEST_CASE("wmds_project") {
  std::mt19937_64 rng(6);
  const FeatureMatrix fm(make_ids(15), oracle::random_matrix(rng, 15, 4));

  SUBCASE("uniform weights reproduce the unweighted projection") {
    const auto a = wmds_project(fm, WeightVector::uniform(4));
    const auto b = project(fm);
    CHECK((a.coords - b.coords).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("a zero-weight feature has no influence") {
    Vector w(4);
    w << 0.5, 0.0, 0.3, 0.2;
    Matrix perturbed = fm.data();
    perturbed.col(1) = oracle::random_matrix(rng, 15, 1, 10.0);
    const auto a = wmds_project(fm, WeightVector(w));
    const auto b = wmds_project(fm.with_data(perturbed), WeightVector(w));
    CHECK(a.coords == b.coords);
  }
  SUBCASE("all mass on one feature orders items by it") {
    Vector w = Vector::Zero(4);
    w(2) = 1.0;
    const auto l = wmds_project(fm, WeightVector(w));
    // The layout is one-dimensional; take its principal axis.
    const Coords centred = l.coords.rowwise() - l.coords.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(centred.transpose() * centred);
    const Vector axis = centred * eig.eigenvectors().col(1);
    CHECK(std::abs(pearson(axis, fm.data().col(2))) > 0.99);
  }
}

TEST_CASE("weights CSV") {
  std::ostringstream out;
  Vector w(2);
  w << 0.25, 0.75;
  write_weights_csv(out, WeightVector(w));
  CHECK(out.str() == "feature_index,weight\n0,0.25\n1,0.75\n");
}
