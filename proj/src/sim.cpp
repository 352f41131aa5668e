#include "imagesi/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace imagesi {

namespace {

constexpr std::uint64_t kSelectionStream = 0x5e1ec7;
constexpr std::uint64_t kHeadStream = 1;
constexpr std::uint64_t kTripletStream = 2;

std::string k_constraint_message(int k) {
  return "triplet requires k >= 2 (at least two samples per category are needed to form anchor-positive pairs), got k=" +
         std::to_string(k);
}

}  // namespace

void SimConfig::validate() const {
  if (methods.empty()) throw Error(Errc::invalid_argument, "simulation: no methods selected");
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size()) {
    throw Error(Errc::invalid_argument, "simulation: duplicate method");
  }
  if (k_values.empty()) throw Error(Errc::invalid_argument, "simulation: no k values");
  if (repetitions < 1) throw Error(Errc::invalid_argument, "simulation: repetitions must be >= 1");
  const bool uses_triplet = std::find(methods.begin(), methods.end(), Method::triplet) != methods.end();
  for (int k : k_values) {
    if (k < 1) throw Error(Errc::invalid_argument, "simulation: k must be positive, got " + std::to_string(k));
    if (uses_triplet && k < 2) throw Error(Errc::invalid_argument, k_constraint_message(k));
  }
  train.validate();
  triplet.validate();
  mds.validate();
  wmds.validate();
}

void SimConfig::validate(const LabelMap& labels, const std::vector<ItemId>& ids) const {
  validate();
  const auto members = labels.members(ids);
  if (members.size() < 2) throw Error(Errc::invalid_argument, "simulation: labels need at least 2 classes");
  if (members.size() > 8) throw Error(Errc::invalid_argument, "simulation: at most 8 classes are supported");
  std::size_t smallest = ids.size();
  for (const auto& [label, m] : members) smallest = std::min(smallest, m.size());
  for (int k : k_values) {
    if (static_cast<std::size_t>(k) > smallest) {
      throw Error(Errc::invalid_argument, "simulation: k=" + std::to_string(k) + " exceeds the smallest class size (" +
                                              std::to_string(smallest) + ")");
    }
  }
}

void EvalReport::recompute_aggregates() {
  std::vector<std::pair<Method, int>> keys;
  std::map<std::pair<Method, int>, std::vector<double>> scores;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.k);
    if (!scores.count(key)) keys.push_back(key);
    auto& s = scores[key];
    if (!r.error) s.push_back(r.adjusted_score);
  }
  aggregates.clear();
  for (const auto& key : keys) {
    const auto& s = scores[key];
    Aggregate a{key.first, key.second, std::numeric_limits<double>::quiet_NaN(), 0.0, static_cast<int>(s.size())};
    if (!s.empty()) {
      a.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
      if (s.size() > 1) {
        double ss = 0.0;
        for (double v : s) ss += (v - a.mean) * (v - a.mean);
        a.std = std::sqrt(ss / static_cast<double>(s.size() - 1));
      }
    }
    aggregates.push_back(a);
  }
}

const Aggregate* EvalReport::find(Method m, int k) const {
  for (const auto& a : aggregates)
    if (a.method == m && a.k == k) return &a;
  return nullptr;
}

Eigen::RowVector2d class_anchor(int index, int count) {
  static const double anchors[8][2] = {{0, 0}, {1, 1}, {1, 0}, {0, 1}, {0.5, 0}, {1, 0.5}, {0.5, 1}, {0, 0.5}};
  if (index < 0 || index >= count || count > 8) {
    throw Error(Errc::invalid_argument, "class_anchor: supports up to 8 classes");
  }
  return {anchors[index][0], anchors[index][1]};
}

InteractionSpec simulate_interaction(const LabelMap& labels, int k, RngSeed seed, Method method) {
  if (k < 1) throw Error(Errc::invalid_argument, "simulate_interaction: k must be positive");
  std::map<std::string, std::vector<ItemId>> members;
  for (const auto& [id, label] : labels.raw()) members[label].push_back(id);
  if (members.size() < 2) throw Error(Errc::invalid_argument, "simulate_interaction: need at least 2 classes");

  Rng rng = make_rng(seed);
  InteractionSpec spec;
  spec.method = method;
  int c = 0;
  const int count = static_cast<int>(members.size());
  for (auto& [label, ids] : members) {
    if (static_cast<std::size_t>(k) > ids.size()) {
      throw Error(Errc::invalid_argument, "simulate_interaction: k=" + std::to_string(k) + " exceeds size " +
                                              std::to_string(ids.size()) + " of class \"" + label + "\"");
    }
    std::sort(ids.begin(), ids.end());
    // partial Fisher–Yates: the first k entries become a uniform sample
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), ids.size() - 1);
      std::swap(ids[static_cast<std::size_t>(i)], ids[pick(rng)]);
    }
    const auto anchor = class_anchor(c++, count);
    for (int i = 0; i < k; ++i) spec.moved.push_back({ids[static_cast<std::size_t>(i)], anchor(0), anchor(1)});
  }
  return spec;
}

std::vector<Triplet> simulate_triplet_interaction_sampling(const InteractionSpec& interaction, const LabelMap& labels,
                                                           RngSeed seed, int passes) {
  if (passes < 1) throw Error(Errc::invalid_argument, "triplet sampling: passes must be >= 1");
  std::map<std::string, std::vector<ItemId>> by_class;
  for (const auto& p : interaction.moved) by_class[labels.at(p.id)].push_back(p.id);
  if (by_class.size() < 2) throw Error(Errc::invalid_argument, "triplet sampling: moved points span a single class");
  for (const auto& [label, ids] : by_class) {
    if (ids.size() < 2) {
      throw Error(Errc::invalid_argument, "triplet sampling: class \"" + label + "\" has a single moved sample; " +
                                              k_constraint_message(static_cast<int>(ids.size())));
    }
  }

  Rng rng = make_rng(seed);
  std::vector<Triplet> out;
  for (int pass = 0; pass < passes; ++pass) {
    for (const auto& a : interaction.moved) {
      const auto& label = labels.at(a.id);
      std::vector<ItemId> positives;
      std::vector<ItemId> negatives;
      for (const auto& p : interaction.moved) {
        if (p.id == a.id) continue;
        (labels.at(p.id) == label ? positives : negatives).push_back(p.id);
      }
      std::uniform_int_distribution<std::size_t> pick_p(0, positives.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_n(0, negatives.size() - 1);
      const auto& pos = positives[pick_p(rng)];
      const auto& neg = negatives[pick_n(rng)];
      out.push_back({a.id, pos, neg});
    }
  }
  return out;
}

RngSeed cell_seed(RngSeed base, Method m, int k, int repetition) noexcept {
  return derive_seed(base, static_cast<std::uint64_t>(method_index(m)), static_cast<std::uint64_t>(k),
                     static_cast<std::uint64_t>(repetition));
}

double run_cell(const FeatureMatrix& features, const LabelMap& labels, const SimConfig& cfg, Method method, int k,
                int repetition) {
  const RngSeed seed = cell_seed(cfg.seed, method, k, repetition);
  // The selection stream ignores the method, so every method sees the same moved points.
  const RngSeed selection = derive_seed(cfg.seed, kSelectionStream, static_cast<std::uint64_t>(k),
                                        static_cast<std::uint64_t>(repetition));
  const InteractionSpec interaction = simulate_interaction(labels, k, selection, method);

  Layout2D layout;
  switch (method) {
    case Method::wmds_inverse: {
      const WeightVector w = wmds_inverse(interaction, features, cfg.wmds);
      layout = wmds_project(features, w, cfg.mds);
      break;
    }
    case Method::mds_inverse: {
      const auto head = EmbeddingHead::identity(features.d(), cfg.hidden, derive_seed(seed, kHeadStream));
      TrainConfig train = cfg.train;
      train.seed = derive_seed(seed, kTripletStream);
      const auto tuned = fine_tune(head, features, interaction, cfg.triplet, train);
      layout = project(features, &tuned.head, cfg.mds);
      break;
    }
    case Method::triplet: {
      const auto head = EmbeddingHead::identity(features.d(), cfg.hidden, derive_seed(seed, kHeadStream));
      const auto triplets = simulate_triplet_interaction_sampling(interaction, labels, derive_seed(seed, kTripletStream),
                                                                  cfg.triplet.triplets_per_anchor);
      const auto tuned = fine_tune(head, features, interaction, cfg.triplet, cfg.train, &triplets);
      layout = project(features, &tuned.head, cfg.mds);
      break;
    }
  }
  return adjusted_silhouette(layout, labels).adjusted;
}

EvalReport run_simulation(const FeatureMatrix& features, const LabelMap& labels, const SimConfig& cfg,
                          const RunOptions& opts) {
  cfg.validate(labels, features.ids());

  EvalReport report;
  for (Method m : cfg.methods)
    for (int k : cfg.k_values)
      for (int r = 0; r < cfg.repetitions; ++r) report.rows.push_back({m, k, r, cell_seed(cfg.seed, m, k, r).value, 0.0, {}});

  const std::size_t total = report.rows.size();
  std::vector<std::size_t> order = opts.order;
  if (order.empty()) {
    order.resize(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  {
    std::vector<std::size_t> check = order;
    std::sort(check.begin(), check.end());
    bool permutation = check.size() == total;
    for (std::size_t i = 0; permutation && i < check.size(); ++i) permutation = check[i] == i;
    if (!permutation) throw Error(Errc::invalid_argument, "simulation: execution order is not a permutation of the cells");
  }

  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= total) return;
      ReportRow& row = report.rows[order[slot]];
      try {
        row.adjusted_score = run_cell(features, labels, cfg, row.method, row.k, row.repetition);
      } catch (const std::exception& e) {
        row.adjusted_score = std::numeric_limits<double>::quiet_NaN();
        row.error = e.what();
      }
      if (opts.progress) {
        std::lock_guard lock(progress_mutex);
        opts.progress(++done, total);
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(total)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  report.recompute_aggregates();
  return report;
}

Benchmark generate_synthetic_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.n_per_cell < 1) throw Error(Errc::invalid_argument, "benchmark: n_per_cell must be >= 1");
  if (cfg.d < 2) throw Error(Errc::invalid_argument, "benchmark: d must be >= 2");
  if (!(cfg.secondary_gap > 0.0) || !(cfg.dominant_gap > cfg.secondary_gap)) {
    throw Error(Errc::invalid_argument, "benchmark: require dominant_gap > secondary_gap > 0");
  }
  if (!(cfg.noise >= 0.0)) throw Error(Errc::invalid_argument, "benchmark: noise must be >= 0");

  Rng rng = make_rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(cfg.d);
  Vector v(cfg.d);
  for (Eigen::Index k = 0; k < cfg.d; ++k) u(k) = normal(rng);
  for (Eigen::Index k = 0; k < cfg.d; ++k) v(k) = normal(rng);
  u.normalize();
  v -= v.dot(u) * u;
  v.normalize();

  const Eigen::Index n = 4 * cfg.n_per_cell;
  std::vector<ItemId> ids;
  Matrix data(n, cfg.d);
  std::unordered_map<ItemId, std::string> primary;
  std::unordered_map<ItemId, std::string> secondary;
  const int width = static_cast<int>(std::to_string(n - 1).size());
  Eigen::Index row = 0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const Vector centre = (a - 0.5) * cfg.dominant_gap * u + (b - 0.5) * cfg.secondary_gap * v;
      for (int i = 0; i < cfg.n_per_cell; ++i, ++row) {
        std::string idx = std::to_string(row);
        ItemId id = "img_" + std::string(static_cast<std::size_t>(width) - idx.size(), '0') + idx;
        for (Eigen::Index k = 0; k < cfg.d; ++k) data(row, k) = centre(k) + (cfg.noise > 0.0 ? cfg.noise * normal(rng) : 0.0);
        primary[id] = a == 0 ? "shark" : "snake";
        secondary[id] = b == 0 ? "closed" : "open";
        ids.push_back(std::move(id));
      }
    }
  }
  return {FeatureMatrix(std::move(ids), std::move(data)), LabelMap(std::move(primary)), LabelMap(std::move(secondary))};
}

// --- serialization ----------------------------------------------------------

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "method,k,repetition,seed,adjusted_score\n";
  for (const auto& r : report.rows) {
    out << method_name(r.method) << ',' << r.k << ',' << r.repetition << ',' << r.seed << ','
        << (r.error ? std::string("nan") : format_double(r.adjusted_score)) << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const EvalReport& report) {
  out << "method,k,mean,std\n";
  for (const auto& a : report.aggregates) {
    out << method_name(a.method) << ',' << a.k << ',' << (a.count ? format_double(a.mean) : std::string("nan")) << ','
        << format_double(a.std) << '\n';
  }
}

void write_report_svg(std::ostream& out, const EvalReport& report) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 30, B = 60;
  std::vector<int> ks;
  double lo = 0.0, hi = 1.0;
  for (const auto& a : report.aggregates) {
    ks.push_back(a.k);
    if (a.count) {
      lo = std::min(lo, a.mean);
      hi = std::max(hi, a.mean);
    }
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const double kmin = ks.empty() ? 0 : ks.front();
  const double kmax = ks.empty() ? 1 : std::max<double>(ks.back(), kmin + 1);
  auto px = [&](double k) { return L + (k - kmin) / (kmax - kmin) * (W - L - R); };
  auto py = [&](double s) { return H - B - (s - lo) / (hi - lo) * (H - T - B); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k : ks) {
    out << "<text x=\"" << px(k) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    const double s = lo + (hi - lo) * t / 4.0;
    std::ostringstream label;
    label.precision(2);
    label << std::fixed << s;
    out << "<text x=\"" << L - 8 << "\" y=\"" << py(s) + 4 << "\" text-anchor=\"end\">" << label.str() << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">interactions per class (k)</text>\n";
  out << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">adjusted silhouette</text>\n";

  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c"};
  std::vector<Method> methods;
  for (const auto& a : report.aggregates)
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const char* color = colors[method_index(methods[i]) % 3];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (int k : ks) {
      const auto* a = report.find(methods[i], k);
      if (a && a->count) out << px(k) << ',' << py(a->mean) << ' ';
    }
    out << "\"/>\n";
    const double ly = T + 20.0 * static_cast<double>(i);
    out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << method_name(methods[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row = {{"method", method_name(r.method)}, {"k", r.k}, {"repetition", r.repetition}, {"seed", r.seed}};
    if (r.error) {
      row["adjusted_score"] = nullptr;
      row["error"] = *r.error;
    } else {
      row["adjusted_score"] = r.adjusted_score;
    }
    j["rows"].push_back(row);
  }
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    nlohmann::json agg = {{"method", method_name(a.method)}, {"k", a.k}, {"std", a.std}, {"count", a.count}};
    agg["mean"] = a.count ? nlohmann::json(a.mean) : nlohmann::json(nullptr);
    j["aggregates"].push_back(agg);
  }
  return j.dump();
}

SimConfig sim_config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("simulation config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::parse_error, "simulation config: expected a JSON object");
  static const std::set<std::string> known = {"methods", "k_values", "repetitions", "seed", "epochs", "step_size",
                                              "eps_p", "eps_n", "margin", "triplets_per_anchor", "mds_max_iters",
                                              "mds_rel_tol", "wmds_steps", "wmds_step_size", "hidden"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(Errc::parse_error, "simulation config: unknown key \"" + key + "\"");
  }
  SimConfig cfg;
  try {
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : j["methods"]) cfg.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("k_values")) cfg.k_values = j["k_values"].get<std::vector<int>>();
    if (j.contains("repetitions")) cfg.repetitions = j["repetitions"].get<int>();
    if (j.contains("seed")) cfg.seed.value = j["seed"].get<std::uint64_t>();
    if (j.contains("epochs")) cfg.train.epochs = j["epochs"].get<int>();
    if (j.contains("step_size")) cfg.train.step_size = j["step_size"].get<double>();
    if (j.contains("eps_p")) cfg.triplet.eps_p = j["eps_p"].get<double>();
    if (j.contains("eps_n")) cfg.triplet.eps_n = j["eps_n"].get<double>();
    if (j.contains("margin")) cfg.triplet.margin = j["margin"].get<double>();
    if (j.contains("triplets_per_anchor")) cfg.triplet.triplets_per_anchor = j["triplets_per_anchor"].get<int>();
    if (j.contains("mds_max_iters")) cfg.mds.max_iters = j["mds_max_iters"].get<int>();
    if (j.contains("mds_rel_tol")) cfg.mds.rel_tol = j["mds_rel_tol"].get<double>();
    if (j.contains("wmds_steps")) cfg.wmds.steps = j["wmds_steps"].get<int>();
    if (j.contains("wmds_step_size")) cfg.wmds.step_size = j["wmds_step_size"].get<double>();
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<Eigen::Index>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("simulation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string sim_config_to_json(const SimConfig& cfg) {
  nlohmann::json j;
  j["methods"] = nlohmann::json::array();
  for (Method m : cfg.methods) j["methods"].push_back(method_name(m));
  j["k_values"] = cfg.k_values;
  j["repetitions"] = cfg.repetitions;
  j["seed"] = cfg.seed.value;
  j["epochs"] = cfg.train.epochs;
  j["step_size"] = cfg.train.step_size;
  j["eps_p"] = cfg.triplet.eps_p;
  j["eps_n"] = cfg.triplet.eps_n;
  j["margin"] = cfg.triplet.margin;
  j["triplets_per_anchor"] = cfg.triplet.triplets_per_anchor;
  j["mds_max_iters"] = cfg.mds.max_iters;
  j["mds_rel_tol"] = cfg.mds.rel_tol;
  j["wmds_steps"] = cfg.wmds.steps;
  j["wmds_step_size"] = cfg.wmds.step_size;
  j["hidden"] = cfg.hidden;
  return j.dump();
}

}  // namespace imagesi
