#include <pthread.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "imagesi/core.hpp"
#include "imagesi/eval.hpp"
#include "imagesi/finetune.hpp"
#include "imagesi/mds.hpp"
#include "imagesi/server.hpp"
#include "imagesi/sim.hpp"

namespace fs = std::filesystem;
using namespace imagesi;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::not_found, "cannot write " + p.string());
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct ProjectArgs {
  std::string features;
  std::string labels;
  std::string head;
  std::string out = "-";
  MdsConfig mds;
};

int cmd_project(const ProjectArgs& a) {
  const Dataset ds = load_dataset(a.features, a.labels.empty() ? std::nullopt : std::optional<fs::path>(a.labels));
  std::optional<EmbeddingHead> head;
  if (!a.head.empty()) head = load_head(a.head);
  const Layout2D layout = project(ds.features, head ? &*head : nullptr, a.mds);

  std::ostream* scores = &std::cout;
  if (a.out == "-") {
    write_layout_csv(std::cout, layout);
    scores = &std::cerr;
  } else {
    auto out = open_out(a.out);
    write_layout_csv(out, layout);
  }
  if (ds.labels) {
    const EvalScore s = adjusted_silhouette(layout, *ds.labels);
    *scores << "silhouette " << format_double(s.silhouette) << "\n"
            << "adjusted_silhouette " << format_double(s.adjusted) << "\n";
  }
  return 0;
}

struct SimulateArgs {
  std::string features;
  std::string labels;
  std::string config;
  std::string methods;
  std::string k_values;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> step_size;
  std::string score_against = "secondary";
  unsigned threads = 1;
  std::string out_dir = "sim-out";
  BenchmarkConfig bench;
};

int cmd_simulate(const SimulateArgs& a) {
  SimConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error(Errc::not_found, "cannot open config " + a.config);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = sim_config_from_json(ss.str());
  }
  if (!a.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : split_list(a.methods)) cfg.methods.push_back(parse_method(m));
  }
  if (!a.k_values.empty()) {
    cfg.k_values.clear();
    for (const auto& k : split_list(a.k_values)) cfg.k_values.push_back(std::stoi(k));
  }
  if (a.reps) cfg.repetitions = *a.reps;
  if (a.seed) cfg.seed = RngSeed{*a.seed};
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.step_size) cfg.train.step_size = *a.step_size;
  cfg.validate();

  FeatureMatrix features;
  LabelMap labels;
  if (!a.features.empty()) {
    if (a.labels.empty()) throw Error(Errc::invalid_argument, "--labels is required with --features");
    Dataset ds = load_dataset(a.features, fs::path(a.labels));
    features = std::move(ds.features);
    labels = std::move(*ds.labels);
  } else {
    Benchmark b = generate_synthetic_benchmark(a.bench);
    features = std::move(b.features);
    if (a.score_against == "secondary") labels = std::move(b.secondary);
    else if (a.score_against == "primary") labels = std::move(b.primary);
    else throw Error(Errc::invalid_argument, "--score-against must be primary or secondary");
  }

  RunOptions opts;
  opts.threads = a.threads;
  opts.progress = [](std::size_t done, std::size_t total) {
    std::cerr << "\rcells " << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
  };
  const EvalReport report = run_simulation(features, labels, cfg, opts);

  fs::create_directories(a.out_dir);
  {
    auto out = open_out(fs::path(a.out_dir) / "report.csv");
    write_report_csv(out, report);
  }
  {
    auto out = open_out(fs::path(a.out_dir) / "aggregate.csv");
    write_aggregate_csv(out, report);
  }
  {
    auto out = open_out(fs::path(a.out_dir) / "scores.svg");
    write_report_svg(out, report);
  }
  write_aggregate_csv(std::cout, report);
  std::size_t failed = 0;
  for (const auto& r : report.rows) {
    if (r.error) {
      ++failed;
      std::cerr << "cell " << method_name(r.method) << " k=" << r.k << " rep=" << r.repetition << " failed: " << *r.error
                << "\n";
    }
  }
  return failed == 0 ? 0 : 2;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  std::string static_dir;
  bool benchmark = false;
};

int cmd_serve(const ServeArgs& a) {
  SessionManager manager;
  if (!a.data_dir.empty()) {
    for (const auto& id : manager.load_data_dir(a.data_dir)) std::cerr << "loaded dataset " << id << "\n";
  }
  if (a.benchmark) {
    Benchmark b = generate_synthetic_benchmark();
    manager.register_dataset(std::move(b.features), {{"primary", b.primary}, {"secondary", b.secondary}}, {},
                             std::string("benchmark"));
    std::cerr << "loaded dataset benchmark\n";
  }
  HttpServer server(manager, a.static_dir.empty() ? std::nullopt : std::optional<fs::path>(a.static_dir));
  const int port = server.bind(a.host, a.port);

  // Signals are taken synchronously on a helper thread; worker threads inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::atomic<bool> signalled{false};
  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    signalled = true;
    server.stop();
  });

  std::cerr << "listening on http://" << a.host << ":" << port << "\n";
  server.listen();
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);  // listen() ended on its own; wake the waiter
  return 0;
}

int cmd_gen_benchmark(const BenchmarkConfig& cfg, const std::string& out_dir) {
  const Benchmark b = generate_synthetic_benchmark(cfg);
  fs::create_directories(out_dir);
  {
    auto out = open_out(fs::path(out_dir) / "features.csv");
    write_features_csv(out, b.features);
  }
  {
    auto out = open_out(fs::path(out_dir) / "labels_primary.csv");
    write_labels_csv(out, b.features.ids(), b.primary);
  }
  {
    auto out = open_out(fs::path(out_dir) / "labels_secondary.csv");
    write_labels_csv(out, b.features.ids(), b.secondary);
  }
  std::cout << "wrote " << b.features.n() << " items (d=" << b.features.d() << ") to " << out_dir << "\n";
  return 0;
}

void add_benchmark_flags(CLI::App* cmd, BenchmarkConfig& b) {
  cmd->add_option("--n-per-cell", b.n_per_cell, "Items per factor cell (4 cells)")->capture_default_str();
  cmd->add_option("--d", b.d, "Feature dimensionality")->capture_default_str();
  cmd->add_option("--dominant-gap", b.dominant_gap, "Offset between dominant-factor groups")->capture_default_str();
  cmd->add_option("--secondary-gap", b.secondary_gap, "Offset between secondary-factor groups")->capture_default_str();
  cmd->add_option("--noise", b.noise, "Gaussian noise standard deviation")->capture_default_str();
  cmd->add_option("--bench-seed", b.seed.value, "Benchmark generator seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-interaction projection engine"};
  app.require_subcommand(1);

  ProjectArgs project_args;
  auto* project_cmd = app.add_subcommand("project", "Project a feature file to 2D (optionally through a tuned head)");
  project_cmd->add_option("--features", project_args.features, "Feature CSV (id,f0,...)")->required();
  project_cmd->add_option("--labels", project_args.labels, "Label CSV (id,label); prints silhouette scores");
  project_cmd->add_option("--head", project_args.head, "Head checkpoint JSON");
  project_cmd->add_option("--out", project_args.out, "Layout CSV path, '-' for stdout")->capture_default_str();
  project_cmd->add_option("--max-iters", project_args.mds.max_iters, "SMACOF iteration cap")->capture_default_str();
  project_cmd->add_option("--rel-tol", project_args.mds.rel_tol, "SMACOF relative tolerance")->capture_default_str();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the interaction-simulation sweep");
  sim_cmd->add_option("--features", sim_args.features, "Feature CSV; defaults to the synthetic benchmark");
  sim_cmd->add_option("--labels", sim_args.labels, "Ground-truth label CSV for --features");
  sim_cmd->add_option("--config", sim_args.config, "SimConfig JSON; flags override it");
  sim_cmd->add_option("--methods", sim_args.methods, "Comma list of wmds_inverse,mds_inverse,triplet");
  sim_cmd->add_option("--k", sim_args.k_values, "Comma list of moved points per class");
  sim_cmd->add_option("--reps", sim_args.reps, "Repetitions per (method, k)");
  sim_cmd->add_option("--seed", sim_args.seed, "Sweep seed");
  sim_cmd->add_option("--epochs", sim_args.epochs, "Fine-tuning epochs");
  sim_cmd->add_option("--step-size", sim_args.step_size, "Adam step size");
  sim_cmd->add_option("--score-against", sim_args.score_against, "Benchmark factor to score: primary|secondary")
      ->capture_default_str();
  sim_cmd->add_option("--threads", sim_args.threads, "Worker threads")->capture_default_str();
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "Output directory")->capture_default_str();
  add_benchmark_flags(sim_cmd, sim_args.bench);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP server");
  serve_cmd->add_option("--host", serve_args.host)->capture_default_str();
  serve_cmd->add_option("--port", serve_args.port)->capture_default_str();
  serve_cmd->add_option("--data-dir", serve_args.data_dir, "Directory of datasets to preload");
  serve_cmd->add_option("--static-dir", serve_args.static_dir, "Static files to serve at /");
  serve_cmd->add_flag("--benchmark", serve_args.benchmark, "Register the synthetic benchmark as dataset 'benchmark'");

  BenchmarkConfig gen_cfg;
  std::string gen_out = "benchmark";
  auto* gen_cmd = app.add_subcommand("gen-benchmark", "Write the synthetic 2x2 benchmark");
  add_benchmark_flags(gen_cmd, gen_cfg);
  gen_cmd->add_option("--seed", gen_cfg.seed.value, "Generator seed (alias of --bench-seed)");
  gen_cmd->add_option("--out", gen_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*project_cmd) return cmd_project(project_args);
    if (*sim_cmd) return cmd_simulate(sim_args);
    if (*serve_cmd) return cmd_serve(serve_args);
    if (*gen_cmd) return cmd_gen_benchmark(gen_cfg, gen_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
