#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "imagesi/mds.hpp"
#include "imagesi/sim.hpp"

using namespace imagesi;

namespace {

const Benchmark& bench() {
  static const Benchmark b = generate_synthetic_benchmark();
  return b;
}

SimConfig tiny(std::vector<Method> methods, std::vector<int> ks, int reps) {
  SimConfig cfg;
  cfg.methods = std::move(methods);
  cfg.k_values = std::move(ks);
  cfg.repetitions = reps;
  cfg.seed = RngSeed{7};
  cfg.train.epochs = 20;
  return cfg;
}

}  // namespace

TEST_CASE("simulate_interaction") {
  const auto& labels = bench().secondary;
  SUBCASE("k=4 with two classes") {
    const auto spec = simulate_interaction(labels, 4, RngSeed{1});
    REQUIRE(spec.moved.size() == 8);
    std::map<std::string, int> per_class;
    for (const auto& m : spec.moved) ++per_class[labels.at(m.id)];
    CHECK(per_class.size() == 2);
    for (const auto& [cls, count] : per_class) CHECK(count == 4);
    for (const auto& a : spec.moved)
      for (const auto& b : spec.moved) {
        const double d = std::hypot(a.x - b.x, a.y - b.y);
        if (labels.at(a.id) == labels.at(b.id)) CHECK(std::abs(d) < 1e-12);
        else CHECK(std::abs(d - std::sqrt(2.0)) < 1e-12);
      }
  }
  SUBCASE("k=1 puts two points on opposite corners") {
    const auto spec = simulate_interaction(labels, 1, RngSeed{2});
    REQUIRE(spec.moved.size() == 2);
    CHECK(std::hypot(spec.moved[0].x - spec.moved[1].x, spec.moved[0].y - spec.moved[1].y) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  }
  SUBCASE("deterministic, and seeds matter") {
    const auto a = simulate_interaction(labels, 3, RngSeed{5});
    const auto b = simulate_interaction(labels, 3, RngSeed{5});
    CHECK(a.ids() == b.ids());
    CHECK(a.coords() == b.coords());
    CHECK(simulate_interaction(labels, 3, RngSeed{6}).ids() != a.ids());
  }
  SUBCASE("k larger than a class") { CHECK_THROWS_AS(simulate_interaction(labels, 21, RngSeed{1}), Error); }
}

TEST_CASE("class anchors") {
  CHECK(class_anchor(0, 2) == Eigen::RowVector2d(0, 0));
  CHECK(class_anchor(1, 2) == Eigen::RowVector2d(1, 1));
  std::set<std::pair<double, double>> seen;
  for (int i = 0; i < 8; ++i) seen.insert({class_anchor(i, 8)(0), class_anchor(i, 8)(1)});
  CHECK(seen.size() == 8);
}

TEST_CASE("label-driven triplet sampling") {
  const auto& labels = bench().secondary;
  SUBCASE("k=2: one positive and two negatives per anchor") {
    const auto spec = simulate_interaction(labels, 2, RngSeed{1}, Method::triplet);
    const auto triplets = simulate_triplet_interaction_sampling(spec, labels, RngSeed{2}, 50);
    std::map<ItemId, std::set<ItemId>> pos, neg;
    for (const auto& t : triplets) {
      pos[t.anchor].insert(t.positive);
      neg[t.anchor].insert(t.negative);
    }
    CHECK(pos.size() == 4);
    for (const auto& [a, p] : pos) CHECK(p.size() == 1);
    for (const auto& [a, n] : neg) CHECK(n.size() == 2);
  }
  SUBCASE("candidate sets equal the coordinate-threshold pools") {
    for (int k = 2; k <= 8; k += 2) {
      const auto spec = simulate_interaction(labels, k, RngSeed{static_cast<std::uint64_t>(k)}, Method::triplet);
      for (const auto& m : spec.moved) {
        const auto pools = build_triplet_pools(m.id, spec, {});
        std::set<ItemId> p(pools.positives.begin(), pools.positives.end());
        std::set<ItemId> n(pools.negatives.begin(), pools.negatives.end());
        std::set<ItemId> lp, ln;
        for (const auto& o : spec.moved) {
          if (o.id == m.id) continue;
          (labels.at(o.id) == labels.at(m.id) ? lp : ln).insert(o.id);
        }
        CHECK(p == lp);
        CHECK(n == ln);
      }
      for (const auto& t : simulate_triplet_interaction_sampling(spec, labels, RngSeed{3}, 4)) {
        CHECK(labels.at(t.anchor) == labels.at(t.positive));
        CHECK(t.anchor != t.positive);
        CHECK(labels.at(t.anchor) != labels.at(t.negative));
      }
    }
  }
  SUBCASE("k=1 is rejected") {
    const auto spec = simulate_interaction(labels, 1, RngSeed{1}, Method::triplet);
    CHECK_THROWS_AS(simulate_triplet_interaction_sampling(spec, labels, RngSeed{2}), Error);
  }
}

TEST_CASE("SimConfig validation") {
  auto cfg = tiny({Method::triplet}, {1}, 1);
  try {
    cfg.validate();
    FAIL("k=1 with triplet must be rejected");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("k >= 2") != std::string::npos);
  }
  CHECK_NOTHROW(tiny({Method::mds_inverse}, {1}, 1).validate());
  CHECK_THROWS_AS(tiny({Method::mds_inverse}, {}, 1).validate(), Error);
  CHECK_THROWS_AS(tiny({Method::mds_inverse}, {2}, 0).validate(), Error);
  CHECK_THROWS_AS(tiny({Method::mds_inverse}, {21}, 1).validate(bench().secondary, bench().features.ids()), Error);
}

TEST_CASE("run_simulation") {
  const auto& b = bench();
  SUBCASE("one cell gives one row") {
    const auto r = run_simulation(b.features, b.secondary, tiny({Method::mds_inverse}, {2}, 1));
    REQUIRE(r.rows.size() == 1);
    CHECK_FALSE(r.rows[0].error);
    REQUIRE(r.aggregates.size() == 1);
    CHECK(r.aggregates[0].std == 0.0);
    CHECK(r.aggregates[0].mean == r.rows[0].adjusted_score);
  }
  SUBCASE("bit-identical across runs, thread counts and cell orders") {
    const auto cfg = tiny({Method::wmds_inverse, Method::mds_inverse, Method::triplet}, {2, 4}, 2);
    const auto a = run_simulation(b.features, b.secondary, cfg);
    const auto again = run_simulation(b.features, b.secondary, cfg);
    CHECK(a == again);
    RunOptions opts;
    opts.threads = 3;
    opts.order.resize(a.rows.size());
    std::iota(opts.order.rbegin(), opts.order.rend(), 0);
    CHECK(run_simulation(b.features, b.secondary, cfg, opts) == a);
    for (const auto& row : a.rows) {
      CHECK_FALSE(row.error);
      CHECK(row.seed == cell_seed(cfg.seed, row.method, row.k, row.repetition).value);
      CHECK(row.adjusted_score == run_cell(b.features, b.secondary, cfg, row.method, row.k, row.repetition));
    }
  }
  SUBCASE("aggregates use the sample standard deviation") {
    const auto r = run_simulation(b.features, b.secondary, tiny({Method::wmds_inverse}, {2}, 3));
    REQUIRE(r.rows.size() == 3);
    double mean = 0.0;
    for (const auto& row : r.rows) mean += row.adjusted_score / 3.0;
    double ss = 0.0;
    for (const auto& row : r.rows) ss += (row.adjusted_score - mean) * (row.adjusted_score - mean);
    CHECK(r.aggregates[0].mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(r.aggregates[0].std == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  }
  SUBCASE("invalid order is rejected") {
    RunOptions opts;
    opts.order = {0, 0};
    CHECK_THROWS_AS(run_simulation(b.features, b.secondary, tiny({Method::mds_inverse}, {2}, 2), opts), Error);
  }
}

TEST_CASE("synthetic benchmark") {
  SUBCASE("default shape") {
    const auto& b = bench();
    CHECK(b.features.n() == 40);
    CHECK(b.primary.classes().size() == 2);
    CHECK(b.secondary.classes().size() == 2);
    for (const auto& p : b.primary.classes())
      for (const auto& s : b.secondary.classes()) {
        int count = 0;
        for (const auto& id : b.features.ids()) count += b.primary.at(id) == p && b.secondary.at(id) == s;
        CHECK(count == 10);
      }
  }
  SUBCASE("noise-free 2D has four distinct points") {
    BenchmarkConfig cfg;
    cfg.noise = 0.0;
    cfg.d = 2;
    const auto b = generate_synthetic_benchmark(cfg);
    std::set<std::pair<double, double>> rows;
    for (Eigen::Index i = 0; i < b.features.n(); ++i) rows.insert({b.features.data()(i, 0), b.features.data()(i, 1)});
    CHECK(rows.size() == 4);
  }
  SUBCASE("baseline projection follows the dominant factor") {
    const auto& b = bench();
    const auto layout = project(b.features);
    CHECK(adjusted_silhouette(layout, b.primary).adjusted > adjusted_silhouette(layout, b.secondary).adjusted);
  }
  SUBCASE("deterministic") {
    CHECK(generate_synthetic_benchmark().features.data() == bench().features.data());
  }
}

TEST_CASE("report serialization") {
  const auto& b = bench();
  auto r = run_simulation(b.features, b.secondary, tiny({Method::mds_inverse, Method::triplet}, {2}, 2));
  std::ostringstream csv, agg, svg;
  write_report_csv(csv, r);
  write_aggregate_csv(agg, r);
  write_report_svg(svg, r);
  const std::string rows = csv.str();
  const std::string aggregates = agg.str();
  CHECK(rows.rfind("method,k,repetition,seed,adjusted_score\n", 0) == 0);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 5);
  CHECK(aggregates.rfind("method,k,mean,std\n", 0) == 0);
  CHECK(std::count(aggregates.begin(), aggregates.end(), '\n') == 3);
  CHECK(svg.str().find("<svg") != std::string::npos);
  CHECK(svg.str().find("triplet") != std::string::npos);

  r.rows[0].error = "boom";
  r.recompute_aggregates();
  CHECK(r.find(Method::mds_inverse, 2)->count == 1);
  std::ostringstream failed;
  write_report_csv(failed, r);
  CHECK(failed.str().find(",nan\n") != std::string::npos);
}

TEST_CASE("SimConfig JSON") {
  auto cfg = tiny({Method::triplet, Method::wmds_inverse}, {2, 6}, 3);
  cfg.triplet.margin = 0.5;
  cfg.mds.max_iters = 77;
  const auto back = sim_config_from_json(sim_config_to_json(cfg));
  CHECK(back.methods == cfg.methods);
  CHECK(back.k_values == cfg.k_values);
  CHECK(back.repetitions == 3);
  CHECK(back.seed == cfg.seed);
  CHECK(back.train.epochs == 20);
  CHECK(back.triplet.margin == 0.5);
  CHECK(back.mds.max_iters == 77);
  CHECK_THROWS_AS(sim_config_from_json(R"({"bogus": 1})"), Error);
  CHECK_THROWS_AS(sim_config_from_json(R"({"methods": ["pca"]})"), Error);
  CHECK_THROWS_AS(sim_config_from_json("[1,2]"), Error);
}
