#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "imagesi/eval.hpp"
#include "oracles.hpp"

using namespace imagesi;

namespace {

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int classes) {
  std::uniform_int_distribution<int> c(0, classes - 1);
  std::vector<int> out(n);
  for (auto& l : out) l = c(rng);
  // Every instance needs at least two classes.
  out[0] = 0;
  out[1] = 1;
  return out;
}

Layout2D as_layout(const Coords& c, const std::vector<int>& labels, LabelMap& map) {
  std::unordered_map<ItemId, std::string> raw;
  std::vector<ItemId> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ids.push_back("p" + std::to_string(i));
    raw[ids.back()] = "c" + std::to_string(labels[i]);
  }
  map = LabelMap(raw);
  return {ids, c};
}

}  // namespace

TEST_CASE("silhouette of separated clusters") {
  std::mt19937_64 rng(1);
  Coords c = oracle::random_matrix(rng, 20, 2, 0.01);
  std::vector<int> labels(20);
  for (int i = 10; i < 20; ++i) {
    c(i, 0) += 10.0;
    labels[static_cast<std::size_t>(i)] = 1;
  }
  CHECK(silhouette(c, labels) > 0.99);
}

TEST_CASE("random labels on one cloud score near zero") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Coords c = oracle::random_matrix(rng, 200, 2);
    CHECK(std::abs(silhouette(c, random_labels(rng, 200, 2))) < 0.15);
  }
}

TEST_CASE("silhouette matches the brute-force oracle") {
  SUBCASE("ten fixed points") {
    Coords c(10, 2);
    c << 0, 0, 0.1, 0.2, 0.3, 0.1, 0.2, 0.4, 0.9, 0.1, 1.0, 1.0, 0.8, 0.9, 0.7, 1.0, 0.4, 0.6, 0.95, 0.85;
    const std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    CHECK(std::abs(silhouette(c, labels) - oracle::silhouette(c, labels)) < 1e-12);
  }
  SUBCASE("random instances, including singleton classes") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 3 + static_cast<std::size_t>(trial) % 28;
      const Coords c = oracle::random_matrix(rng, static_cast<Eigen::Index>(n), 2);
      const auto labels = random_labels(rng, n, 2 + trial % 4);
      const double s = silhouette(c, labels);
      CHECK(std::abs(s - oracle::silhouette(c, labels)) < 1e-12);
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("silhouette invariances") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Coords c = oracle::random_matrix(rng, 25, 2);
    const auto labels = random_labels(rng, 25, 3);
    const double s = silhouette(c, labels);

    const double theta = 0.3 + trial;
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const Coords moved = (c * rot.transpose() * 3.7).rowwise() + Eigen::RowVector2d(5.0, -2.0);
    CHECK(silhouette(moved, labels) == doctest::Approx(s).epsilon(1e-12));
    Coords mirrored = c;
    mirrored.col(0) *= -1.0;
    CHECK(silhouette(mirrored, labels) == doctest::Approx(s).epsilon(1e-12));

    std::vector<Eigen::Index> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Coords pc(25, 2);
    std::vector<int> pl(25);
    for (std::size_t i = 0; i < 25; ++i) {
      pc.row(static_cast<Eigen::Index>(i)) = c.row(perm[i]);
      pl[i] = labels[static_cast<std::size_t>(perm[i])];
    }
    CHECK(silhouette(pc, pl) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("adjusted silhouette doubles exactly") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Coords c = oracle::random_matrix(rng, 12, 2);
    const auto labels = random_labels(rng, 12, 2);
    LabelMap map;
    const auto layout = as_layout(c, labels, map);
    const auto score = adjusted_silhouette(layout, map);
    CHECK(score.adjusted == 2.0 * score.silhouette);
    CHECK(score.silhouette == silhouette(layout, map));
    CHECK(score.n == 12);
    CHECK(score.classes == 2);
  }

  SUBCASE("silhouette 0.5 is adjusted to 1.0") {
    // 1 × 15/8 rectangle, diagonal 17/8: every point has a = 1 and b = (15/8 + 17/8) / 2 = 2.
    Coords c(4, 2);
    c << 0, 0, 1, 0, 0, 1.875, 1, 1.875;
    LabelMap map;
    const auto layout = as_layout(c, {0, 0, 1, 1}, map);
    const auto score = adjusted_silhouette(layout, map);
    CHECK(score.silhouette == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(score.adjusted == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("silhouette 0 is adjusted to 0") {
    // 1 × 3/4 rectangle, diagonal 5/4: a = 1 and b = (3/4 + 5/4) / 2 = 1.
    Coords c(4, 2);
    c << 0, 0, 1, 0, 0, 0.75, 1, 0.75;
    LabelMap map;
    const auto layout = as_layout(c, {0, 0, 1, 1}, map);
    CHECK(adjusted_silhouette(layout, map).adjusted == 0.0);
  }
}

TEST_CASE("silhouette preconditions") {
  Coords c(3, 2);
  c << 0, 0, 1, 0, 0, 1;
  CHECK_THROWS_AS(silhouette(c, {0, 0, 0}), Error);
  CHECK_THROWS_AS(silhouette(Coords(c.topRows(2)), {0, 1}), Error);
}
