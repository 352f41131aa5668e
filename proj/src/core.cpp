#include "imagesi/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace imagesi {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::parse_error: return "parse_error";
    case Errc::not_found: return "not_found";
    case Errc::conflict: return "conflict";
    case Errc::degenerate: return "degenerate";
    case Errc::numerical: return "numerical";
  }
  return "unknown";
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngSeed derive_seed(RngSeed parent, std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  std::uint64_t h = mix64(parent.value);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return RngSeed{h};
}

// --- FeatureMatrix ----------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::vector<ItemId> ids, Matrix data)
    : ids_(std::move(ids)), data_(std::move(data)) {
  if (static_cast<Eigen::Index>(ids_.size()) != data_.rows()) {
    throw Error(Errc::invalid_argument, "feature matrix: id count does not match row count");
  }
  if (data_.rows() < 3) {
    throw Error(Errc::invalid_argument, "feature matrix: need at least 3 items");
  }
  if (data_.cols() < 2) {
    throw Error(Errc::invalid_argument, "feature matrix: need at least 2 features");
  }
  if (!data_.allFinite()) {
    throw Error(Errc::invalid_argument, "feature matrix: non-finite entry");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i].empty()) {
      throw Error(Errc::invalid_argument, "feature matrix: empty id at row " + std::to_string(i));
    }
    if (!index_.emplace(ids_[i], static_cast<Eigen::Index>(i)).second) {
      throw Error(Errc::invalid_argument, "feature matrix: duplicate id \"" + ids_[i] + "\"");
    }
  }
}

std::optional<Eigen::Index> FeatureMatrix::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index FeatureMatrix::require_index(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error(Errc::not_found, "unknown item id \"" + std::string(id) + "\"");
  return *idx;
}

FeatureMatrix FeatureMatrix::with_data(Matrix data) const {
  if (data.rows() != n()) {
    throw Error(Errc::invalid_argument, "feature matrix: replacement has wrong row count");
  }
  FeatureMatrix out;
  out.ids_ = ids_;
  out.index_ = index_;
  if (!data.allFinite()) throw Error(Errc::numerical, "feature matrix: non-finite entry");
  out.data_ = std::move(data);
  return out;
}

// --- LabelMap ---------------------------------------------------------------

const std::string& LabelMap::at(std::string_view id) const {
  auto it = labels_.find(std::string(id));
  if (it == labels_.end()) throw Error(Errc::not_found, "no label for id \"" + std::string(id) + "\"");
  return it->second;
}

std::vector<std::string> LabelMap::classes() const {
  std::set<std::string> s;
  for (const auto& [id, label] : labels_) s.insert(label);
  return {s.begin(), s.end()};
}

std::vector<int> LabelMap::encode(const std::vector<ItemId>& ids) const {
  const auto cls = classes();
  std::vector<int> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& label = at(id);
    out.push_back(static_cast<int>(std::lower_bound(cls.begin(), cls.end(), label) - cls.begin()));
  }
  return out;
}

std::map<std::string, std::vector<ItemId>> LabelMap::members(const std::vector<ItemId>& ids) const {
  std::map<std::string, std::vector<ItemId>> out;
  for (const auto& id : ids) out[at(id)].push_back(id);
  return out;
}

// --- Method / interaction ---------------------------------------------------

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::wmds_inverse: return "wmds_inverse";
    case Method::mds_inverse: return "mds_inverse";
    case Method::triplet: return "triplet";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "wmds_inverse") return Method::wmds_inverse;
  if (name == "mds_inverse") return Method::mds_inverse;
  if (name == "triplet") return Method::triplet;
  throw Error(Errc::invalid_argument,
              "unknown method \"" + std::string(name) + "\" (expected wmds_inverse, mds_inverse or triplet)");
}

Coords InteractionSpec::coords() const {
  Coords c(static_cast<Eigen::Index>(moved.size()), 2);
  for (std::size_t i = 0; i < moved.size(); ++i) {
    c(static_cast<Eigen::Index>(i), 0) = moved[i].x;
    c(static_cast<Eigen::Index>(i), 1) = moved[i].y;
  }
  return c;
}

std::vector<ItemId> InteractionSpec::ids() const {
  std::vector<ItemId> out;
  out.reserve(moved.size());
  for (const auto& p : moved) out.push_back(p.id);
  return out;
}

void validate_interaction(const InteractionSpec& spec, const FeatureMatrix& features) {
  std::vector<std::string> problems;
  if (spec.moved.size() < 2) {
    problems.push_back("at least 2 moved points are required, got " + std::to_string(spec.moved.size()));
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < spec.moved.size(); ++i) {
    const auto& p = spec.moved[i];
    const std::string where = "moved[" + std::to_string(i) + "] (\"" + p.id + "\"): ";
    if (!features.index_of(p.id)) problems.push_back(where + "unknown id");
    if (!seen.insert(p.id).second) problems.push_back(where + "duplicate id");
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) problems.push_back(where + "non-finite coordinate");
  }
  if (!problems.empty()) {
    std::string msg = "invalid interaction: " + problems.front();
    if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
    throw Error(Errc::invalid_argument, msg, std::move(problems));
  }
}

InteractionSpec prepare_interaction(const InteractionSpec& spec, const FeatureMatrix& features) {
  validate_interaction(spec, features);
  const Coords c = spec.coords();
  const double range = (c.colwise().maxCoeff() - c.colwise().minCoeff()).maxCoeff();
  if (range == 0.0) {
    throw Error(Errc::degenerate, "degenerate interaction: all moved points coincide");
  }
  if (c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0) return spec;

  Layout2D l{spec.ids(), c};
  const Layout2D normalized = normalize_layout(l);
  InteractionSpec out = spec;
  for (std::size_t i = 0; i < out.moved.size(); ++i) {
    out.moved[i].x = normalized.coords(static_cast<Eigen::Index>(i), 0);
    out.moved[i].y = normalized.coords(static_cast<Eigen::Index>(i), 1);
  }
  return out;
}

// --- geometry ---------------------------------------------------------------

Layout2D normalize_layout(const Layout2D& layout) {
  const Coords& c = layout.coords;
  if (c.rows() < 2) throw Error(Errc::degenerate, "degenerate layout: fewer than 2 points");
  if (!c.allFinite()) throw Error(Errc::numerical, "layout has non-finite coordinates");
  const Eigen::RowVector2d lo = c.colwise().minCoeff();
  const Eigen::RowVector2d hi = c.colwise().maxCoeff();
  const Eigen::RowVector2d range = hi - lo;
  const double scale = range.maxCoeff();
  if (scale == 0.0) throw Error(Errc::degenerate, "degenerate layout: all points coincide");

  Layout2D out{layout.ids, Coords(c.rows(), 2)};
  for (int axis = 0; axis < 2; ++axis) {
    if (range(axis) == 0.0) {
      out.coords.col(axis).setConstant(0.5);
      continue;
    }
    const double offset = (range(axis) == scale) ? 0.0 : 0.5 * (1.0 - range(axis) / scale);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      double v = (c(i, axis) - lo(axis)) / scale;
      if (offset != 0.0) v += offset;
      out.coords(i, axis) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

DistanceMatrix pairwise_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (points.row(i) - points.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

DistanceMatrix mean_normalized(const DistanceMatrix& d) {
  const Eigen::Index n = d.rows();
  if (n < 2) throw Error(Errc::degenerate, "distance matrix needs at least 2 points");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += d(i, j);
  const double mean = sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
  if (!(mean > 0.0)) throw Error(Errc::degenerate, "all pairwise distances are zero");
  return d / mean;
}

// --- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool getline_stripped(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

double parse_number(std::string_view field, const std::string& where) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(Errc::parse_error, where + "non-numeric value \"" + std::string(field) + "\"");
  }
  if (!std::isfinite(v)) throw Error(Errc::parse_error, where + "non-finite value \"" + std::string(field) + "\"");
  return v;
}

void strip_bom(std::string& s) {
  if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF &&
      static_cast<unsigned char>(s[1]) == 0xBB && static_cast<unsigned char>(s[2]) == 0xBF) {
    s.erase(0, 3);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

FeatureMatrix parse_features_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!getline_stripped(in, line)) throw Error(Errc::parse_error, at_line(source, 1) + "empty file");
  strip_bom(line);
  const auto header = split_csv(line);
  if (header.size() < 3 || trim(header[0]) != "id") {
    throw Error(Errc::parse_error, at_line(source, 1) + "expected header id,f0,f1,...");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t k = 0; k < d; ++k) {
    if (trim(header[k + 1]) != "f" + std::to_string(k)) {
      throw Error(Errc::parse_error, at_line(source, 1) + "expected column f" + std::to_string(k) +
                                         ", got \"" + std::string(trim(header[k + 1])) + "\"");
    }
  }

  std::vector<ItemId> ids;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (getline_stripped(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = at_line(source, lineno);
    const auto fields = split_csv(line);
    if (fields.size() != d + 1) {
      throw Error(Errc::parse_error, where + "malformed row: expected " + std::to_string(d + 1) +
                                         " fields, got " + std::to_string(fields.size()));
    }
    std::string id(trim(fields[0]));
    if (id.empty()) throw Error(Errc::parse_error, where + "empty id");
    if (!seen.insert(id).second) throw Error(Errc::parse_error, where + "duplicate id \"" + id + "\"");
    for (std::size_t k = 0; k < d; ++k) values.push_back(parse_number(fields[k + 1], where));
    ids.push_back(std::move(id));
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  Matrix data(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k)
      data(i, k) = values[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(k)];
  return FeatureMatrix(std::move(ids), std::move(data));
}

LabelMap parse_labels_csv(std::istream& in, const FeatureMatrix& features, const std::string& source) {
  std::string line;
  if (!getline_stripped(in, line)) throw Error(Errc::parse_error, at_line(source, 1) + "empty file");
  strip_bom(line);
  const auto header = split_csv(line);
  if (header.size() != 2 || trim(header[0]) != "id" || trim(header[1]) != "label") {
    throw Error(Errc::parse_error, at_line(source, 1) + "expected header id,label");
  }
  std::unordered_map<ItemId, std::string> labels;
  std::size_t lineno = 1;
  while (getline_stripped(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = at_line(source, lineno);
    const auto fields = split_csv(line);
    if (fields.size() != 2) throw Error(Errc::parse_error, where + "malformed row: expected 2 fields");
    std::string id(trim(fields[0]));
    std::string label(trim(fields[1]));
    if (!features.index_of(id)) throw Error(Errc::parse_error, where + "label for unknown id \"" + id + "\"");
    if (label.empty()) throw Error(Errc::parse_error, where + "empty label");
    if (!labels.emplace(id, std::move(label)).second) {
      throw Error(Errc::parse_error, where + "duplicate id \"" + id + "\"");
    }
  }
  for (const auto& id : features.ids()) {
    if (!labels.count(id)) throw Error(Errc::parse_error, source + ": missing label for id \"" + id + "\"");
  }
  return LabelMap(std::move(labels));
}

Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::optional<std::filesystem::path>& labels_path) {
  std::ifstream fin(features_path);
  if (!fin) throw Error(Errc::not_found, "cannot open features file " + features_path.string());
  Dataset ds{parse_features_csv(fin, features_path.string()), std::nullopt};
  if (labels_path) {
    std::ifstream lin(*labels_path);
    if (!lin) throw Error(Errc::not_found, "cannot open labels file " + labels_path->string());
    ds.labels = parse_labels_csv(lin, ds.features, labels_path->string());
  }
  return ds;
}

void write_features_csv(std::ostream& out, const FeatureMatrix& features) {
  out << "id";
  for (Eigen::Index k = 0; k < features.d(); ++k) out << ",f" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < features.n(); ++i) {
    out << features.ids()[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < features.d(); ++k) out << ',' << format_double(features.data()(i, k));
    out << '\n';
  }
}

void write_labels_csv(std::ostream& out, const std::vector<ItemId>& ids, const LabelMap& labels) {
  out << "id,label\n";
  for (const auto& id : ids) out << id << ',' << labels.at(id) << '\n';
}

void write_layout_csv(std::ostream& out, const Layout2D& layout) {
  out << "id,x,y\n";
  for (Eigen::Index i = 0; i < layout.n(); ++i) {
    out << layout.ids[static_cast<std::size_t>(i)] << ',' << format_double(layout.coords(i, 0)) << ','
        << format_double(layout.coords(i, 1)) << '\n';
  }
}

Layout2D parse_layout_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!getline_stripped(in, line) || trim(line) != "id,x,y") {
    throw Error(Errc::parse_error, at_line(source, 1) + "expected header id,x,y");
  }
  std::vector<ItemId> ids;
  std::vector<double> xy;
  std::size_t lineno = 1;
  while (getline_stripped(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = at_line(source, lineno);
    const auto fields = split_csv(line);
    if (fields.size() != 3) throw Error(Errc::parse_error, where + "malformed row: expected 3 fields");
    ids.emplace_back(trim(fields[0]));
    xy.push_back(parse_number(fields[1], where));
    xy.push_back(parse_number(fields[2], where));
  }
  Layout2D out{std::move(ids), Coords(static_cast<Eigen::Index>(xy.size() / 2), 2)};
  for (Eigen::Index i = 0; i < out.coords.rows(); ++i) {
    out.coords(i, 0) = xy[static_cast<std::size_t>(2 * i)];
    out.coords(i, 1) = xy[static_cast<std::size_t>(2 * i + 1)];
  }
  return out;
}

// --- interaction JSON -------------------------------------------------------

InteractionSpec parse_interaction_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("interaction: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::parse_error, "interaction: expected a JSON object");
  if (!j.contains("method") || !j["method"].is_string()) {
    throw Error(Errc::parse_error, "interaction: missing string field \"method\"");
  }
  if (!j.contains("moved") || !j["moved"].is_array()) {
    throw Error(Errc::parse_error, "interaction: missing array field \"moved\"");
  }
  InteractionSpec spec;
  spec.method = parse_method(j["method"].get<std::string>());
  std::size_t i = 0;
  for (const auto& p : j["moved"]) {
    const std::string where = "interaction: moved[" + std::to_string(i++) + "]: ";
    if (!p.is_object() || !p.contains("id") || !p["id"].is_string()) {
      throw Error(Errc::parse_error, where + "expected {\"id\": string, \"x\": number, \"y\": number}");
    }
    if (!p.contains("x") || !p["x"].is_number() || !p.contains("y") || !p["y"].is_number()) {
      throw Error(Errc::parse_error, where + "x and y must be numbers");
    }
    spec.moved.push_back({p["id"].get<std::string>(), p["x"].get<double>(), p["y"].get<double>()});
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw Error(Errc::parse_error, "interaction: seed must be unsigned");
    spec.seed = j["seed"].get<std::uint64_t>();
  }
  return spec;
}

std::string interaction_to_json(const InteractionSpec& spec) {
  nlohmann::json j;
  j["method"] = std::string(method_name(spec.method));
  j["moved"] = nlohmann::json::array();
  for (const auto& p : spec.moved) j["moved"].push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}});
  if (spec.seed) j["seed"] = *spec.seed;
  return j.dump();
}

}  // namespace imagesi
