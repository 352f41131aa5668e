#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "imagesi/eval.hpp"
#include "imagesi/finetune.hpp"
#include "imagesi/mds.hpp"
#include "imagesi/server.hpp"
#include "imagesi/sim.hpp"
#include "json.hpp"
#include "httplib.h"

extern char** environ;

using namespace imagesi;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
  std::string err;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / ("imagesi_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const auto err_path = workdir() / "stderr.txt";
  const std::string cmd = std::string(IMAGESI_CLI) + " " + args + " 2>" + err_path.string();
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::string path_arg(const fs::path& p) { return "'" + p.string() + "'"; }

// Generated once; reused by the projection tests.
const fs::path& bench_dir() {
  static const fs::path dir = [] {
    const auto d = workdir() / "bench";
    const auto r = run("gen-benchmark --out " + path_arg(d));
    REQUIRE(r.status == 0);
    return d;
  }();
  return dir;
}

int free_port() {
  SessionManager mgr;
  HttpServer probe(mgr);
  return probe.bind("127.0.0.1", 0);
}

}  // namespace

TEST_CASE("gen-benchmark") {
  const auto& d = bench_dir();
  std::ifstream f(d / "features.csv");
  const auto fm = parse_features_csv(f);
  CHECK(fm.n() == 40);
  std::ifstream p(d / "labels_primary.csv");
  CHECK(parse_labels_csv(p, fm).classes().size() == 2);
  std::ifstream s(d / "labels_secondary.csv");
  CHECK(parse_labels_csv(s, fm).classes().size() == 2);
  CHECK(fm.data() == generate_synthetic_benchmark().features.data());

  const auto again = workdir() / "bench_again";
  REQUIRE(run("gen-benchmark --seed 7 --out " + path_arg(again)).status == 0);
  for (const auto* name : {"features.csv", "labels_primary.csv", "labels_secondary.csv"})
    CHECK(slurp(again / name) == slurp(d / name));

  const auto flat = workdir() / "bench_flat";
  REQUIRE(run("gen-benchmark --noise 0 --d 2 --out " + path_arg(flat)).status == 0);
  std::ifstream ff(flat / "features.csv");
  const auto flat_fm = parse_features_csv(ff);
  std::set<std::pair<double, double>> rows;
  for (Eigen::Index i = 0; i < flat_fm.n(); ++i) rows.insert({flat_fm.data()(i, 0), flat_fm.data()(i, 1)});
  CHECK(rows.size() == 4);
}

TEST_CASE("project") {
  const auto& d = bench_dir();
  const auto ds = load_dataset(d / "features.csv", d / "labels_secondary.csv");

  SUBCASE("layout equals the library projection") {
    const auto r = run("project --features " + path_arg(d / "features.csv"));
    REQUIRE(r.status == 0);
    std::ostringstream expected;
    write_layout_csv(expected, project(ds.features));
    CHECK(r.out == expected.str());
  }
  SUBCASE("labels print both scores") {
    const auto out = workdir() / "layout.csv";
    const auto r = run("project --features " + path_arg(d / "features.csv") + " --labels " +
                       path_arg(d / "labels_secondary.csv") + " --out " + path_arg(out));
    REQUIRE(r.status == 0);
    std::istringstream lines(r.out);
    std::string key1, key2;
    double s = 0, adj = 0;
    lines >> key1 >> s >> key2 >> adj;
    CHECK(key1 == "silhouette");
    CHECK(key2 == "adjusted_silhouette");
    CHECK(adj == 2.0 * s);
    CHECK(s == adjusted_silhouette(project(ds.features), *ds.labels).silhouette);
    std::ostringstream expected;
    write_layout_csv(expected, project(ds.features));
    CHECK(slurp(out) == expected.str());
  }
  SUBCASE("a head checkpoint is applied") {
    auto spec = simulate_interaction(*ds.labels, 4, RngSeed{3}, Method::triplet);
    TrainConfig cfg;
    cfg.epochs = 30;
    const auto tuned =
        fine_tune(EmbeddingHead::identity(ds.features.d(), 0, RngSeed{1}), ds.features, spec, {}, cfg).head;
    const auto head_path = workdir() / "head.json";
    save_head(head_path, tuned);
    const auto r = run("project --features " + path_arg(d / "features.csv") + " --head " + path_arg(head_path));
    REQUIRE(r.status == 0);
    std::ostringstream expected;
    write_layout_csv(expected, project(ds.features, &tuned));
    CHECK(r.out == expected.str());
  }
  SUBCASE("errors exit nonzero") {
    const auto r = run("project --features " + path_arg(workdir() / "missing.csv"));
    CHECK(r.status != 0);
    CHECK(r.err.find("error:") != std::string::npos);
  }
}

TEST_CASE("simulate") {
  const auto a = workdir() / "sim_a";
  const auto b = workdir() / "sim_b";
  const std::string flags = "--methods wmds_inverse,mds_inverse,triplet --k 2,4 --reps 2 --seed 7 --epochs 20 --threads 2";
  REQUIRE(run("simulate " + flags + " --out-dir " + path_arg(a)).status == 0);
  REQUIRE(run("simulate " + flags + " --out-dir " + path_arg(b)).status == 0);
  for (const auto* name : {"report.csv", "aggregate.csv", "scores.svg"}) {
    CHECK(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  std::istringstream report(slurp(a / "report.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(report, line)) ++rows;
  CHECK(rows == 12);

  SimConfig cfg;
  cfg.k_values = {2, 4};
  cfg.repetitions = 2;
  cfg.seed = RngSeed{7};
  cfg.train.epochs = 20;
  const auto bench = generate_synthetic_benchmark();
  std::ostringstream expected;
  write_report_csv(expected, run_simulation(bench.features, bench.secondary, cfg));
  CHECK(slurp(a / "report.csv") == expected.str());

  const auto bad = run("simulate --k 1 --methods triplet --out-dir " + path_arg(workdir() / "sim_bad"));
  CHECK(bad.status != 0);
  CHECK(bad.err.find("k >= 2") != std::string::npos);

  const auto cfg_path = workdir() / "sim.json";
  std::ofstream(cfg_path) << R"({"methods": ["mds_inverse"], "k_values": [2], "repetitions": 1, "seed": 7, "epochs": 20})";
  const auto c = workdir() / "sim_cfg";
  REQUIRE(run("simulate --config " + path_arg(cfg_path) + " --out-dir " + path_arg(c)).status == 0);
  CHECK(slurp(c / "aggregate.csv").rfind("method,k,mean,std\nmds_inverse,2,", 0) == 0);
}

TEST_CASE("serve") {
  SUBCASE("occupied port") {
    SessionManager mgr;
    HttpServer holder(mgr);
    const int port = holder.bind("127.0.0.1", 0);
    const auto r = run("serve --port " + std::to_string(port));
    CHECK(r.status != 0);
    CHECK(r.err.find("cannot bind") != std::string::npos);
  }
  SUBCASE("health check and cross-interface consistency") {
    const int port = free_port();
    const std::string port_s = std::to_string(port);
    std::vector<std::string> args{IMAGESI_CLI, "serve", "--port", port_s, "--benchmark"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t quiet;
    ::posix_spawn_file_actions_init(&quiet);
    ::posix_spawn_file_actions_addopen(&quiet, 2, "/dev/null", O_WRONLY, 0);
    pid_t pid = 0;
    const int spawned = ::posix_spawn(&pid, IMAGESI_CLI, &quiet, nullptr, argv.data(), environ);
    ::posix_spawn_file_actions_destroy(&quiet);
    REQUIRE(spawned == 0);

    httplib::Client cli("127.0.0.1", port);
    httplib::Result health;
    for (int i = 0; i < 200 && !(health = cli.Get("/health")); ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
    REQUIRE(health);
    CHECK(health->status == 200);

    const auto created = cli.Post("/sessions", R"({"dataset_id": "benchmark"})", "application/json");
    REQUIRE(created);
    const auto layout_json = nlohmann::json::parse(created->body)["layout"];

    const auto projected = run("project --features " + path_arg(bench_dir() / "features.csv"));
    REQUIRE(projected.status == 0);
    std::istringstream csv(projected.out);
    const auto layout = parse_layout_csv(csv);
    REQUIRE(layout.ids.size() == layout_json.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < layout.ids.size(); ++i) {
      CHECK(layout_json[i]["id"] == layout.ids[i]);
      worst = std::max(worst, std::abs(layout_json[i]["x"].get<double>() - layout.coords(static_cast<Eigen::Index>(i), 0)));
      worst = std::max(worst, std::abs(layout_json[i]["y"].get<double>() - layout.coords(static_cast<Eigen::Index>(i), 1)));
    }
    CHECK(worst <= 1e-9);

    ::kill(pid, SIGTERM);
    int status = 0;
    ::waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
  }
}

TEST_CASE("cleanup") { fs::remove_all(workdir()); }
