#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "imagesi/core.hpp"
#include "imagesi/eval.hpp"
#include "imagesi/finetune.hpp"
#include "imagesi/mds.hpp"
#include "imagesi/sim.hpp"
#include "imagesi/wmds.hpp"

namespace httplib {
class Server;
}

namespace imagesi {

/// Hyperparameters used when a session incorporates an interaction.
struct EngineConfig {
  TrainConfig train;
  TripletConfig triplet;
  MdsConfig mds;
  WmdsConfig wmds;
  Eigen::Index hidden = 0;
};

struct UpdateResult {
  EmbeddingHead head;
  std::optional<WeightVector> weights;
  Layout2D layout;
};

/// One semantic-interaction step on explicit state: re-weights (wmds_inverse)
/// or fine-tunes the head (mds_inverse, triplet), then re-projects every item.
/// Re-weighting is stateless and acts on the current head's embeddings.
UpdateResult apply_interaction(const FeatureMatrix& features, const EmbeddingHead& head,
                               const InteractionSpec& interaction, const EngineConfig& cfg, RngSeed seed,
                               const ProgressFn& progress = {});

struct Thumbnail {
  std::string content_type;
  std::string bytes;
};

struct DatasetEntry {
  std::string id;
  FeatureMatrix features;
  std::map<std::string, LabelMap> label_sets;
  std::map<ItemId, Thumbnail> thumbnails;
};

struct HistoryEntry {
  std::uint64_t version = 0;
  Layout2D layout;
  std::optional<InteractionSpec> interaction;  ///< empty for the baseline
};

struct SessionView {
  std::string session_id;
  std::string dataset_id;
  std::uint64_t version = 0;
  Layout2D layout;
  bool busy = false;
  double progress = 0.0;
};

enum class JobStatus { running, done, failed };

struct JobView {
  std::string job_id;
  JobStatus status = JobStatus::running;
  std::size_t done = 0;
  std::size_t total = 0;
  std::optional<EvalReport> report;
  std::string error;
};

/// In-memory registry of datasets, sessions and simulation jobs. Sessions keep
/// their fine-tuned head across interactions; each session admits a single
/// writer and rejects concurrent submissions with Errc::conflict.
class SessionManager {
 public:
  explicit SessionManager(EngineConfig cfg = {});
  ~SessionManager();

  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  std::string register_dataset(FeatureMatrix features, std::map<std::string, LabelMap> label_sets = {},
                               std::map<ItemId, Thumbnail> thumbnails = {}, std::optional<std::string> id = {});
  std::shared_ptr<const DatasetEntry> dataset(const std::string& id) const;
  std::vector<std::string> dataset_ids() const;

  /// Loads every `<dir>/<name>/features.csv` (with `labels*.csv` and an
  /// optional `thumbnails/` folder) as dataset `<name>`.
  std::vector<std::string> load_data_dir(const std::filesystem::path& dir);

  SessionView create_session(const std::string& dataset_id, std::optional<std::uint64_t> seed = {});
  SessionView submit_interaction(const std::string& session_id, const InteractionSpec& interaction);
  /// Validates and marks the session busy, then trains on a background thread.
  SessionView submit_interaction_async(const std::string& session_id, const InteractionSpec& interaction);
  /// Restores the fresh head and appends a baseline entry; history is never truncated.
  SessionView reset_session(const std::string& session_id);
  SessionView session(const std::string& session_id) const;
  std::vector<HistoryEntry> history(const std::string& session_id) const;
  EmbeddingHead head(const std::string& session_id) const;
  EvalScore score(const std::string& session_id, const std::string& label_set) const;
  void checkpoint(const std::string& session_id, const std::filesystem::path& path) const;

  std::string submit_simulation(const std::string& dataset_id, const std::string& label_set, const SimConfig& cfg,
                                unsigned threads = 1);
  JobView poll_simulation(const std::string& job_id) const;
  /// Blocks until the job finishes (test helper).
  JobView wait_simulation(const std::string& job_id) const;

  const EngineConfig& config() const noexcept { return cfg_; }

 private:
  struct Session;
  struct Job;

  std::shared_ptr<Session> find_session(const std::string& id) const;
  std::shared_ptr<Job> find_job(const std::string& id) const;
  std::shared_ptr<Session> begin_write(const std::string& session_id, const InteractionSpec& interaction,
                                       InteractionSpec& prepared);
  SessionView run_update(const std::shared_ptr<Session>& s, const InteractionSpec& prepared);

  EngineConfig cfg_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const DatasetEntry>> datasets_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::uint64_t next_id_ = 1;
  std::vector<std::jthread> workers_;
};

/// HTTP+JSON front end over a SessionManager.
class HttpServer {
 public:
  explicit HttpServer(SessionManager& manager, std::optional<std::filesystem::path> static_dir = {});
  ~HttpServer();

  /// Binds; throws Errc::conflict when the port is unavailable. Port 0 picks a free port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind(). Returns at once if already stopped.
  void listen();
  /// Safe to call from any thread, before or during listen(), and repeatedly.
  void stop();

 private:
  void routes();

  SessionManager& manager_;
  std::unique_ptr<httplib::Server> http_;
  std::mutex state_mutex_;
  int socket_ = -1;
  bool listening_ = false;
  bool finished_ = false;
  bool stopped_ = false;
};

/// Regular files of an uncompressed (ustar) tar archive, keyed by member path.
std::map<std::string, std::string> read_tar(const std::string& archive);

}  // namespace imagesi
