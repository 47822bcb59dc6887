#pragma once

#include "hwscene/scene.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;

namespace hwscene {

enum class JobStatus { pending, running, done, failed };

std::string_view to_string(JobStatus s);

struct Job {
  std::string job_id;
  std::string scene_id;
  std::string kind;  // "splat" or "video"
  std::string element_id;  // empty unless the capture fulfils a request
  std::string bundle_ref;
  JobStatus status = JobStatus::pending;
  json result;
  std::string error;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;
};

json to_json(const Job& job);

/// Durable storage: an SQLite event log and job table next to a
/// content-addressed blob directory (`blobs/<2 hex>/<64 hex>`).
class Store {
 public:
  explicit Store(const std::filesystem::path& root);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& root() const { return root_; }

  /// Appends one event; its seq must follow the last stored one.
  void append_event(const Event& e);
  std::vector<Event> load_events() const;

  /// Writes the blob atomically and returns its SHA-256 ref.
  std::string put_blob(std::string_view bytes);
  std::string get_blob(const std::string& ref) const;
  bool has_blob(const std::string& ref) const;

  void put_job(const Job& job);
  std::optional<Job> job(const std::string& id) const;
  /// Jobs still pending or running, in creation order.
  std::vector<Job> unfinished_jobs() const;

 private:
  std::filesystem::path blob_path(const std::string& ref) const;
  void exec(const char* sql) const;

  std::filesystem::path root_;
  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

/// Workspace rebuilt from the store's event log, persisting new events to it.
std::unique_ptr<Workspace> open_workspace(Store& store);

}  // namespace hwscene
