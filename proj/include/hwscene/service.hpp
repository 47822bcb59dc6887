#pragma once

#include "hwscene/pipeline.hpp"
#include "hwscene/store.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace hwscene {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  std::filesystem::path storage_root = "hwscene-data";
  bool privacy = true;
  double tau_mm = 30.0;
  std::optional<WorkspaceSlab> slab = WorkspaceSlab{};
  double rms_threshold_mm = 5.0;
  int workers = 2;
  /// Base URL used in capture links of request elements; defaults to the
  /// bound address.
  std::string public_url;
};

/// Reads an optional JSON config file, then applies HWSCENE_* environment
/// overrides (HOST, PORT, STORAGE, PRIVACY, TAU, SLAB, RMS_THRESHOLD,
/// WORKERS, PUBLIC_URL). SLAB is `none` or `zmin,zmax,margin`.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file);
json to_json(const ServiceConfig& config);

/// HTTP coordination service over a Store-backed Workspace.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds, resumes unfinished jobs and serves on a background thread.
  /// Throws Error(io) when the port cannot be bound.
  void start();
  /// Stops accepting requests, lets in-flight requests and the running job
  /// finish, then returns.
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

  int port() const { return port_; }
  const ServiceConfig& config() const { return config_; }
  Workspace& workspace() { return *workspace_; }
  Store& store() { return *store_; }

  /// Blocks until no job is pending or running.
  void drain_jobs();

 private:
  void routes();
  void enqueue(const std::string& job_id);
  void worker_loop();
  void run_job(Job job);
  std::string submit_capture(const std::string& scene_id, const std::string& kind, const std::string& element_id,
                             const std::string& bundle, bool& created);
  RegistrationOptions registration_options() const;
  json element_json(const TimelineElement& e) const;

  ServiceConfig config_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<Workspace> workspace_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  int port_ = 0;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  int active_jobs_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;

  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  bool stopped_ = false;
};

}  // namespace hwscene
