#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "imagesi/error.hpp"

namespace imagesi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Symmetric n×n matrix of non-negative distances with a zero diagonal.
using DistanceMatrix = Eigen::MatrixXd;

using ItemId = std::string;

struct RngSeed {
  std::uint64_t value = 0;

  friend bool operator==(RngSeed, RngSeed) = default;
};

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;
RngSeed derive_seed(RngSeed parent, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

using Rng = std::mt19937_64;
inline Rng make_rng(RngSeed seed) { return Rng(seed.value); }

/// Frozen base embeddings, one row per item.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::vector<ItemId> ids, Matrix data);

  const std::vector<ItemId>& ids() const noexcept { return ids_; }
  const Matrix& data() const noexcept { return data_; }
  Eigen::Index n() const noexcept { return data_.rows(); }
  Eigen::Index d() const noexcept { return data_.cols(); }

  std::optional<Eigen::Index> index_of(std::string_view id) const;
  Eigen::Index require_index(std::string_view id) const;

  /// Same ids, replaced data (e.g. after the embedding head). Width may change.
  FeatureMatrix with_data(Matrix data) const;

 private:
  std::vector<ItemId> ids_;
  Matrix data_;
  std::unordered_map<ItemId, Eigen::Index> index_;
};

class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::unordered_map<ItemId, std::string> labels) : labels_(std::move(labels)) {}

  const std::string& at(std::string_view id) const;
  bool contains(std::string_view id) const { return labels_.count(std::string(id)) != 0; }
  std::size_t size() const noexcept { return labels_.size(); }

  /// Distinct labels in lexicographic order.
  std::vector<std::string> classes() const;

  /// Class index (into classes()) for each id, in the given order.
  std::vector<int> encode(const std::vector<ItemId>& ids) const;

  /// Members of each class, in the order they appear in `ids`.
  std::map<std::string, std::vector<ItemId>> members(const std::vector<ItemId>& ids) const;

  const std::unordered_map<ItemId, std::string>& raw() const noexcept { return labels_; }

 private:
  std::unordered_map<ItemId, std::string> labels_;
};

struct Layout2D {
  std::vector<ItemId> ids;
  Coords coords;

  Eigen::Index n() const noexcept { return coords.rows(); }
};

enum class Method { wmds_inverse, mds_inverse, triplet };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);
constexpr int method_index(Method m) noexcept { return static_cast<int>(m); }

struct MovedPoint {
  ItemId id;
  double x = 0.0;
  double y = 0.0;
};

/// The set of user-moved points with their 2D targets.
struct InteractionSpec {
  Method method = Method::triplet;
  std::vector<MovedPoint> moved;
  /// Optional seed for the stochastic parts of the update (triplet sampling).
  std::optional<std::uint64_t> seed;

  Coords coords() const;
  std::vector<ItemId> ids() const;
};

/// Checks ≥2 moved points, known and unique ids, finite coordinates. Throws
/// Errc::invalid_argument with one detail line per offending point.
void validate_interaction(const InteractionSpec& spec, const FeatureMatrix& features);

/// Validates and maps the moved coordinates into the unit square. Coordinates
/// already inside [0,1]² are kept verbatim; otherwise the moved set is
/// rescaled with normalize_layout.
InteractionSpec prepare_interaction(const InteractionSpec& spec, const FeatureMatrix& features);

// --- layout geometry --------------------------------------------------------

/// Aspect-preserving min–max rescale into [0,1]². The longer axis spans [0,1];
/// the shorter axis is centred at 0.5. A degenerate axis maps to 0.5.
Layout2D normalize_layout(const Layout2D& layout);

/// Euclidean distances between rows.
DistanceMatrix pairwise_distances(const Matrix& points);

/// Divides by the mean off-diagonal entry. Throws Errc::degenerate when that mean is 0.
DistanceMatrix mean_normalized(const DistanceMatrix& d);

// --- dataset I/O ------------------------------------------------------------

struct Dataset {
  FeatureMatrix features;
  std::optional<LabelMap> labels;
};

FeatureMatrix parse_features_csv(std::istream& in, const std::string& source = "features");
LabelMap parse_labels_csv(std::istream& in, const FeatureMatrix& features,
                          const std::string& source = "labels");
Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::optional<std::filesystem::path>& labels_path = std::nullopt);

void write_features_csv(std::ostream& out, const FeatureMatrix& features);
void write_labels_csv(std::ostream& out, const std::vector<ItemId>& ids, const LabelMap& labels);
void write_layout_csv(std::ostream& out, const Layout2D& layout);
Layout2D parse_layout_csv(std::istream& in, const std::string& source = "layout");

/// Shortest round-trip decimal representation.
std::string format_double(double v);

// --- interaction JSON -------------------------------------------------------

InteractionSpec parse_interaction_json(std::string_view text);
std::string interaction_to_json(const InteractionSpec& spec);

}  // namespace imagesi
