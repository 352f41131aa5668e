#include "imagesi/server.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

namespace imagesi {

using nlohmann::json;

UpdateResult apply_interaction(const FeatureMatrix& features, const EmbeddingHead& head,
                               const InteractionSpec& interaction, const EngineConfig& cfg, RngSeed seed,
                               const ProgressFn& progress) {
  const InteractionSpec prepared = prepare_interaction(interaction, features);
  switch (prepared.method) {
    case Method::wmds_inverse: {
      const FeatureMatrix embedded = apply_head(head, features);
      WeightVector w = wmds_inverse(prepared, embedded, cfg.wmds);
      Layout2D layout = wmds_project(embedded, w, cfg.mds);
      return {head, std::move(w), std::move(layout)};
    }
    case Method::mds_inverse:
    case Method::triplet: {
      TrainConfig train = cfg.train;
      train.seed = seed;
      auto tuned = fine_tune(head, features, prepared, cfg.triplet, train, nullptr, progress);
      Layout2D layout = project(features, &tuned.head, cfg.mds);
      return {std::move(tuned.head), std::nullopt, std::move(layout)};
    }
  }
  throw Error(Errc::invalid_argument, "unknown method");
}

// --- SessionManager ---------------------------------------------------------

struct SessionManager::Session {
  std::string id;
  std::shared_ptr<const DatasetEntry> dataset;
  RngSeed seed;
  EmbeddingHead fresh_head;

  mutable std::mutex mutex;
  EmbeddingHead head;
  std::optional<WeightVector> weights;
  std::vector<HistoryEntry> history;
  std::size_t since_reset = 0;  // interactions after the latest baseline entry
  std::uint64_t version = 0;
  bool busy = false;
  std::atomic<double> progress{0.0};

  Session(std::string id_, std::shared_ptr<const DatasetEntry> ds, RngSeed s, EmbeddingHead h)
      : id(std::move(id_)), dataset(std::move(ds)), seed(s), fresh_head(h), head(std::move(h)) {}

  SessionView view_locked() const {
    return {id, dataset->id, version, history.back().layout, busy, progress.load()};
  }
};

struct SessionManager::Job {
  std::string id;
  mutable std::mutex mutex;
  JobStatus status = JobStatus::running;
  std::size_t done = 0;
  std::size_t total = 0;
  std::optional<EvalReport> report;
  std::string error;
};

SessionManager::SessionManager(EngineConfig cfg) : cfg_(std::move(cfg)) {}

SessionManager::~SessionManager() {
  std::vector<std::jthread> workers;
  {
    std::lock_guard lock(mutex_);
    workers.swap(workers_);
  }
  workers.clear();  // joins
}

std::string SessionManager::register_dataset(FeatureMatrix features, std::map<std::string, LabelMap> label_sets,
                                             std::map<ItemId, Thumbnail> thumbnails, std::optional<std::string> id) {
  for (const auto& [name, labels] : label_sets) {
    for (const auto& item : features.ids()) {
      if (!labels.contains(item)) {
        throw Error(Errc::invalid_argument, "label set \"" + name + "\" has no label for \"" + item + "\"");
      }
    }
  }
  for (const auto& [item, thumb] : thumbnails) {
    if (!features.index_of(item)) throw Error(Errc::invalid_argument, "thumbnail for unknown id \"" + item + "\"");
  }
  std::lock_guard lock(mutex_);
  std::string key = id ? *id : "ds-" + std::to_string(next_id_++);
  if (datasets_.count(key)) throw Error(Errc::conflict, "dataset \"" + key + "\" already exists");
  auto entry = std::make_shared<DatasetEntry>(
      DatasetEntry{key, std::move(features), std::move(label_sets), std::move(thumbnails)});
  datasets_.emplace(key, std::move(entry));
  return key;
}

std::shared_ptr<const DatasetEntry> SessionManager::dataset(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = datasets_.find(id);
  if (it == datasets_.end()) throw Error(Errc::not_found, "unknown dataset \"" + id + "\"");
  return it->second;
}

std::vector<std::string> SessionManager::dataset_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, ds] : datasets_) out.push_back(id);
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::not_found, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string content_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

// labels.csv → "labels"; labels_<name>.csv → "<name>"
std::optional<std::string> label_set_name(const std::filesystem::path& p) {
  const auto stem = p.stem().string();
  if (p.extension() != ".csv") return std::nullopt;
  if (stem == "labels") return std::string("labels");
  if (stem.rfind("labels_", 0) == 0 && stem.size() > 7) return stem.substr(7);
  return std::nullopt;
}

}  // namespace

std::vector<std::string> SessionManager::load_data_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(Errc::not_found, "data directory " + dir.string() + " does not exist");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "features.csv")) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());

  std::vector<std::string> loaded;
  for (const auto& sub : subdirs) {
    std::ifstream fin(sub / "features.csv");
    FeatureMatrix features = parse_features_csv(fin, (sub / "features.csv").string());
    std::map<std::string, LabelMap> label_sets;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(sub)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      if (auto name = label_set_name(f)) {
        std::ifstream lin(f);
        label_sets.emplace(*name, parse_labels_csv(lin, features, f.string()));
      }
    }
    std::map<ItemId, Thumbnail> thumbs;
    if (fs::is_directory(sub / "thumbnails")) {
      for (const auto& e : fs::directory_iterator(sub / "thumbnails")) {
        if (!e.is_regular_file()) continue;
        const auto id = e.path().stem().string();
        if (features.index_of(id)) thumbs[id] = {content_type_for(e.path()), read_file(e.path())};
      }
    }
    loaded.push_back(register_dataset(std::move(features), std::move(label_sets), std::move(thumbs),
                                      sub.filename().string()));
  }
  return loaded;
}

std::shared_ptr<SessionManager::Session> SessionManager::find_session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(Errc::not_found, "unknown session \"" + id + "\"");
  return it->second;
}

std::shared_ptr<SessionManager::Job> SessionManager::find_job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(Errc::not_found, "unknown simulation job \"" + id + "\"");
  return it->second;
}

SessionView SessionManager::create_session(const std::string& dataset_id, std::optional<std::uint64_t> seed) {
  auto ds = dataset(dataset_id);
  const RngSeed s{seed.value_or(0)};
  auto head = EmbeddingHead::identity(ds->features.d(), cfg_.hidden, derive_seed(s, 0x4eadULL));
  Layout2D baseline = project(ds->features, nullptr, cfg_.mds);

  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "s-" + std::to_string(next_id_++);
  }
  auto session = std::make_shared<Session>(id, ds, s, std::move(head));
  session->history.push_back({0, std::move(baseline), std::nullopt});
  SessionView view = session->view_locked();
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, std::move(session));
  return view;
}

std::shared_ptr<SessionManager::Session> SessionManager::begin_write(const std::string& session_id,
                                                                     const InteractionSpec& interaction,
                                                                     InteractionSpec& prepared) {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  if (s->busy) throw Error(Errc::conflict, "session \"" + session_id + "\" is busy with another interaction");
  prepared = prepare_interaction(interaction, s->dataset->features);
  s->busy = true;
  s->progress = 0.0;
  return s;
}

SessionView SessionManager::run_update(const std::shared_ptr<Session>& s, const InteractionSpec& prepared) {
  std::optional<EmbeddingHead> head;
  RngSeed seed;
  {
    std::lock_guard lock(s->mutex);
    head = s->head;
    seed = prepared.seed ? RngSeed{*prepared.seed} : derive_seed(s->seed, s->since_reset + 1);
  }
  try {
    auto progress = [&](int epoch, int epochs, double) {
      s->progress = static_cast<double>(epoch) / static_cast<double>(epochs);
    };
    UpdateResult res = apply_interaction(s->dataset->features, *head, prepared, cfg_, seed, progress);
    std::lock_guard lock(s->mutex);
    s->head = std::move(res.head);
    s->weights = std::move(res.weights);
    s->history.push_back({++s->version, std::move(res.layout), prepared});
    ++s->since_reset;
    s->busy = false;
    s->progress = 1.0;
    return s->view_locked();
  } catch (...) {
    std::lock_guard lock(s->mutex);
    s->busy = false;
    throw;
  }
}

SessionView SessionManager::submit_interaction(const std::string& session_id, const InteractionSpec& interaction) {
  InteractionSpec prepared;
  auto s = begin_write(session_id, interaction, prepared);
  return run_update(s, prepared);
}

SessionView SessionManager::submit_interaction_async(const std::string& session_id,
                                                     const InteractionSpec& interaction) {
  InteractionSpec prepared;
  auto s = begin_write(session_id, interaction, prepared);
  SessionView view;
  {
    std::lock_guard lock(s->mutex);
    view = s->view_locked();
  }
  std::lock_guard lock(mutex_);
  workers_.emplace_back([this, s, prepared] {
    try {
      run_update(s, prepared);
    } catch (...) {
      // the session is released by run_update; the failed interaction leaves no trace
    }
  });
  return view;
}

SessionView SessionManager::reset_session(const std::string& session_id) {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  if (s->busy) throw Error(Errc::conflict, "session \"" + session_id + "\" is busy with another interaction");
  s->head = s->fresh_head;
  s->weights.reset();
  s->history.push_back({++s->version, s->history.front().layout, std::nullopt});
  s->since_reset = 0;
  return s->view_locked();
}

SessionView SessionManager::session(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  return s->view_locked();
}

std::vector<HistoryEntry> SessionManager::history(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  return s->history;
}

EmbeddingHead SessionManager::head(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  return s->head;
}

EvalScore SessionManager::score(const std::string& session_id, const std::string& label_set) const {
  auto s = find_session(session_id);
  const auto& sets = s->dataset->label_sets;
  const LabelMap* labels = nullptr;
  if (label_set.empty()) {
    if (sets.size() != 1) {
      throw Error(Errc::invalid_argument, "dataset has " + std::to_string(sets.size()) +
                                              " label sets; name one with ?labels=");
    }
    labels = &sets.begin()->second;
  } else {
    auto it = sets.find(label_set);
    if (it == sets.end()) throw Error(Errc::not_found, "unknown label set \"" + label_set + "\"");
    labels = &it->second;
  }
  Layout2D layout;
  {
    std::lock_guard lock(s->mutex);
    layout = s->history.back().layout;
  }
  return adjusted_silhouette(layout, *labels);
}

void SessionManager::checkpoint(const std::string& session_id, const std::filesystem::path& path) const {
  save_head(path, head(session_id));
}

std::string SessionManager::submit_simulation(const std::string& dataset_id, const std::string& label_set,
                                              const SimConfig& cfg, unsigned threads) {
  auto ds = dataset(dataset_id);
  auto it = ds->label_sets.find(label_set);
  if (it == ds->label_sets.end()) throw Error(Errc::not_found, "unknown label set \"" + label_set + "\"");
  cfg.validate(it->second, ds->features.ids());

  auto job = std::make_shared<Job>();
  std::lock_guard lock(mutex_);
  job->id = "job-" + std::to_string(next_id_++);
  jobs_.emplace(job->id, job);
  const LabelMap* labels = &it->second;
  workers_.emplace_back([job, ds, labels, cfg, threads] {
    RunOptions opts;
    opts.threads = threads;
    opts.progress = [&](std::size_t done, std::size_t total) {
      std::lock_guard l(job->mutex);
      job->done = done;
      job->total = total;
    };
    try {
      EvalReport report = run_simulation(ds->features, *labels, cfg, opts);
      std::lock_guard l(job->mutex);
      job->report = std::move(report);
      job->status = JobStatus::done;
    } catch (const std::exception& e) {
      std::lock_guard l(job->mutex);
      job->error = e.what();
      job->status = JobStatus::failed;
    }
  });
  return job->id;
}

JobView SessionManager::poll_simulation(const std::string& job_id) const {
  auto job = find_job(job_id);
  std::lock_guard lock(job->mutex);
  return {job->id, job->status, job->done, job->total, job->report, job->error};
}

JobView SessionManager::wait_simulation(const std::string& job_id) const {
  while (true) {
    auto view = poll_simulation(job_id);
    if (view.status != JobStatus::running) return view;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

// --- tar --------------------------------------------------------------------

std::map<std::string, std::string> read_tar(const std::string& archive) {
  std::map<std::string, std::string> files;
  std::size_t pos = 0;
  while (pos + 512 <= archive.size()) {
    const char* h = archive.data() + pos;
    if (std::all_of(h, h + 512, [](char c) { return c == '\0'; })) break;
    auto field = [&](std::size_t off, std::size_t len) {
      std::string s(h + off, len);
      return s.substr(0, s.find('\0'));
    };
    std::string name = field(0, 100);
    const std::string prefix = field(345, 155);
    if (!prefix.empty() && field(257, 5) == "ustar") name = prefix + "/" + name;
    std::size_t size = 0;
    for (char c : field(124, 12)) {
      if (c >= '0' && c <= '7') size = size * 8 + static_cast<std::size_t>(c - '0');
    }
    const char type = h[156];
    pos += 512;
    if (pos + size > archive.size()) throw Error(Errc::parse_error, "tar archive: truncated member \"" + name + "\"");
    if (type == '0' || type == '\0') files[name] = archive.substr(pos, size);
    pos += (size + 511) / 512 * 512;
  }
  return files;
}

// --- HTTP -------------------------------------------------------------------

namespace {

int status_for(Errc code) {
  switch (code) {
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::numerical: return 500;
    case Errc::invalid_argument:
    case Errc::parse_error:
    case Errc::degenerate: return 400;
  }
  return 500;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json layout_json(const Layout2D& layout) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < layout.n(); ++i) {
    arr.push_back({{"id", layout.ids[static_cast<std::size_t>(i)]}, {"x", layout.coords(i, 0)}, {"y", layout.coords(i, 1)}});
  }
  return arr;
}

json view_json(const SessionView& v) {
  return {{"session_id", v.session_id}, {"dataset_id", v.dataset_id}, {"version", v.version},
          {"layout", layout_json(v.layout)}, {"busy", v.busy}, {"progress", v.progress}};
}

json score_json(const EvalScore& s) {
  return {{"silhouette", s.silhouette}, {"adjusted", s.adjusted}, {"n", s.n}, {"classes", s.classes}};
}

const char* status_name(JobStatus s) {
  switch (s) {
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "unknown";
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_json(res, {{"error", errc_name(e.code())}, {"message", e.what()}, {"details", e.details()}},
                status_for(e.code()));
    } catch (const json::exception& e) {
      send_json(res, {{"error", "parse_error"}, {"message", e.what()}, {"details", json::array()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", "internal"}, {"message", e.what()}, {"details", json::array()}}, 500);
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("invalid JSON body: ") + e.what());
  }
}

}  // namespace

HttpServer::HttpServer(SessionManager& manager, std::optional<std::filesystem::path> static_dir)
    : manager_(manager), http_(std::make_unique<httplib::Server>()) {
  // SO_REUSEPORT (the library default) would let a second server share an occupied port.
  http_->set_socket_options([this](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    socket_ = sock;
  });
  routes();
  if (static_dir && !http_->set_mount_point("/", static_dir->string())) {
    throw Error(Errc::not_found, "static directory " + static_dir->string() + " does not exist");
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = http_->bind_to_any_port(host);
  } else if (!http_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    std::lock_guard lock(state_mutex_);
    socket_ = -1;  // already closed by httplib
    throw Error(Errc::conflict, "cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void HttpServer::listen() {
  {
    std::lock_guard lock(state_mutex_);
    if (stopped_ || socket_ < 0) return;
    listening_ = true;
  }
  http_->listen_after_bind();
  std::lock_guard lock(state_mutex_);
  finished_ = true;
}

// httplib only closes the socket of a running server, so a bound-but-idle
// socket is closed here, and a stop racing listen() waits for it to start.
void HttpServer::stop() {
  {
    std::lock_guard lock(state_mutex_);
    stopped_ = true;
    if (!listening_) {
      if (socket_ >= 0) ::close(socket_);
      socket_ = -1;
      return;
    }
  }
  for (;;) {
    {
      std::lock_guard lock(state_mutex_);
      if (finished_) return;
    }
    if (http_->is_running()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  http_->stop();
}

void HttpServer::routes() {
  auto& srv = *http_;
  auto& mgr = manager_;

  srv.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}});
  }));

  srv.Get("/datasets", guarded([&mgr](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& id : mgr.dataset_ids()) {
      const auto ds = mgr.dataset(id);
      json sets = json::array();
      for (const auto& [name, l] : ds->label_sets) sets.push_back(name);
      out.push_back({{"dataset_id", id}, {"n", ds->features.n()}, {"d", ds->features.d()}, {"label_sets", sets}});
    }
    send_json(res, {{"datasets", out}});
  }));

  srv.Post("/datasets", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_file("features")) throw Error(Errc::invalid_argument, "multipart field \"features\" is required");
    std::istringstream fin(req.get_file_value("features").content);
    FeatureMatrix features = parse_features_csv(fin, "features");
    std::map<std::string, LabelMap> label_sets;
    std::map<ItemId, Thumbnail> thumbs;
    for (const auto& [field, file] : req.files) {
      std::string set;
      if (field == "labels") set = "labels";
      else if (field.rfind("labels:", 0) == 0) set = field.substr(7);
      if (!set.empty()) {
        std::istringstream lin(file.content);
        label_sets.emplace(set, parse_labels_csv(lin, features, field));
      }
      if (field == "thumbnails") {
        for (const auto& [path, bytes] : read_tar(file.content)) {
          const std::filesystem::path p(path);
          const auto id = p.stem().string();
          if (!features.index_of(id)) continue;
          thumbs[id] = {content_type_for(p), bytes};
        }
      }
    }
    json sets = json::array();
    for (const auto& [name, l] : label_sets) sets.push_back(name);
    const auto n = features.n();
    const auto d = features.d();
    const auto id = mgr.register_dataset(std::move(features), std::move(label_sets), std::move(thumbs));
    send_json(res, {{"dataset_id", id}, {"n", n}, {"d", d}, {"label_sets", sets}}, 201);
  }));

  srv.Get(R"(/datasets/([^/]+)/thumbnails/([^/]+))",
          guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const auto ds = mgr.dataset(req.matches[1]);
            auto it = ds->thumbnails.find(req.matches[2]);
            if (it == ds->thumbnails.end()) {
              throw Error(Errc::not_found, "no thumbnail for \"" + std::string(req.matches[2]) + "\"");
            }
            res.set_content(it->second.bytes, it->second.content_type.c_str());
          }));

  srv.Post("/sessions", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("dataset_id") || !body["dataset_id"].is_string()) {
      throw Error(Errc::invalid_argument, "field \"dataset_id\" is required");
    }
    std::optional<std::uint64_t> seed;
    if (body.contains("seed")) seed = body["seed"].get<std::uint64_t>();
    send_json(res, view_json(mgr.create_session(body["dataset_id"].get<std::string>(), seed)), 201);
  }));

  srv.Get(R"(/sessions/([^/]+)/layout)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    send_json(res, view_json(mgr.session(req.matches[1])));
  }));

  srv.Post(R"(/sessions/([^/]+)/interactions)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    const InteractionSpec spec = parse_interaction_json(req.body);
    const bool async = req.has_param("async") && req.get_param_value("async") != "false" &&
                       req.get_param_value("async") != "0";
    if (async) {
      send_json(res, view_json(mgr.submit_interaction_async(req.matches[1], spec)), 202);
    } else {
      send_json(res, view_json(mgr.submit_interaction(req.matches[1], spec)));
    }
  }));

  srv.Post(R"(/sessions/([^/]+)/reset)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    send_json(res, view_json(mgr.reset_session(req.matches[1])));
  }));

  srv.Get(R"(/sessions/([^/]+)/history)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    json out = json::array();
    for (const auto& h : mgr.history(req.matches[1])) {
      out.push_back({{"version", h.version},
                     {"interaction", h.interaction ? json::parse(interaction_to_json(*h.interaction)) : json(nullptr)}});
    }
    send_json(res, {{"history", out}});
  }));

  srv.Get(R"(/sessions/([^/]+)/score)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    const std::string set = req.has_param("labels") ? req.get_param_value("labels") : "";
    send_json(res, score_json(mgr.score(req.matches[1], set)));
  }));

  srv.Get(R"(/sessions/([^/]+)/head)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    res.set_content(head_to_json(mgr.head(req.matches[1])), "application/json");
  }));

  srv.Post("/simulations", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req);
    if (!body.is_object() || !body.contains("dataset_id") || !body["dataset_id"].is_string()) {
      throw Error(Errc::invalid_argument, "field \"dataset_id\" is required");
    }
    const std::string dataset_id = body["dataset_id"].get<std::string>();
    body.erase("dataset_id");
    std::string labels = "labels";
    if (body.contains("labels")) {
      labels = body["labels"].get<std::string>();
      body.erase("labels");
    }
    unsigned threads = 1;
    if (body.contains("threads")) {
      threads = body["threads"].get<unsigned>();
      body.erase("threads");
    }
    const SimConfig cfg = sim_config_from_json(body.dump());
    send_json(res, {{"job_id", mgr.submit_simulation(dataset_id, labels, cfg, threads)}}, 202);
  }));

  srv.Get(R"(/simulations/([^/]+))", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    const JobView job = mgr.poll_simulation(req.matches[1]);
    json out = {{"job_id", job.job_id}, {"status", status_name(job.status)}, {"done", job.done}, {"total", job.total}};
    if (job.report) out["report"] = json::parse(report_to_json(*job.report));
    if (job.status == JobStatus::failed) out["error"] = job.error;
    send_json(res, out);
  }));
}

}  // namespace imagesi
