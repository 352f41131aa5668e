#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "imagesi/core.hpp"
#include "imagesi/eval.hpp"
#include "imagesi/finetune.hpp"
#include "imagesi/mds.hpp"
#include "imagesi/wmds.hpp"

namespace imagesi {

struct SimConfig {
  std::vector<Method> methods{Method::wmds_inverse, Method::mds_inverse, Method::triplet};
  std::vector<int> k_values{2, 4, 6, 8};
  int repetitions = 10;
  RngSeed seed{0};
  TrainConfig train;
  TripletConfig triplet;
  MdsConfig mds;
  WmdsConfig wmds;
  /// Hidden width of fresh heads; ≤ 0 means the feature width.
  Eigen::Index hidden = 0;

  /// Checks the configuration on its own (no dataset).
  void validate() const;
  /// Additionally checks k against the class sizes of `labels` over `ids`.
  void validate(const LabelMap& labels, const std::vector<ItemId>& ids) const;
};

struct ReportRow {
  Method method = Method::triplet;
  int k = 0;
  int repetition = 0;
  std::uint64_t seed = 0;
  double adjusted_score = 0.0;
  std::optional<std::string> error;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Aggregate {
  Method method = Method::triplet;
  int k = 0;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation; 0 for a single row
  int count = 0;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<Aggregate> aggregates;

  /// Rebuilds aggregates from successful rows, ordered by first appearance.
  void recompute_aggregates();
  const Aggregate* find(Method m, int k) const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Unit-square target for class `index` of `count`: corners (0,0), (1,1),
/// (1,0), (0,1), then edge midpoints.
Eigen::RowVector2d class_anchor(int index, int count);

/// Samples k items per class (members ordered by id) and stacks each class on
/// its anchor, so within-class distances are 0 and the two-class cross distance is √2.
InteractionSpec simulate_interaction(const LabelMap& labels, int k, RngSeed seed,
                                     Method method = Method::mds_inverse);

/// Label-driven triplets over the moved points: `passes` rounds with every
/// moved point as anchor, a same-class positive and an other-class negative.
std::vector<Triplet> simulate_triplet_interaction_sampling(const InteractionSpec& interaction, const LabelMap& labels,
                                                           RngSeed seed, int passes = 1);

struct RunOptions {
  unsigned threads = 1;
  /// Cell execution order (indices into the method × k × repetition grid). Empty = natural order.
  std::vector<std::size_t> order;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Seed of one sweep cell.
RngSeed cell_seed(RngSeed base, Method m, int k, int repetition) noexcept;

/// Scores one method on one simulated interaction (fresh model state).
double run_cell(const FeatureMatrix& features, const LabelMap& labels, const SimConfig& cfg, Method method, int k,
                int repetition);

EvalReport run_simulation(const FeatureMatrix& features, const LabelMap& labels, const SimConfig& cfg,
                          const RunOptions& opts = {});

struct Benchmark {
  FeatureMatrix features;
  LabelMap primary;    ///< dominant factor ("shark"/"snake")
  LabelMap secondary;  ///< secondary factor ("open"/"closed")
};

struct BenchmarkConfig {
  int n_per_cell = 10;
  Eigen::Index d = 16;
  double dominant_gap = 3.0;
  double secondary_gap = 1.0;
  double noise = 0.3;
  RngSeed seed{7};
};

/// 2×2 factorial clusters: the dominant factor offsets a random unit direction
/// by dominant_gap, the secondary factor an orthogonal one by secondary_gap,
/// plus isotropic Gaussian noise.
Benchmark generate_synthetic_benchmark(const BenchmarkConfig& cfg = {});

// --- serialization ----------------------------------------------------------

void write_report_csv(std::ostream& out, const EvalReport& report);
void write_aggregate_csv(std::ostream& out, const EvalReport& report);
/// Mean adjusted score vs k, one polyline per method.
void write_report_svg(std::ostream& out, const EvalReport& report);

std::string report_to_json(const EvalReport& report);
/// Parses a SimConfig JSON object; unknown keys are rejected.
SimConfig sim_config_from_json(std::string_view text);
std::string sim_config_to_json(const SimConfig& cfg);

}  // namespace imagesi
