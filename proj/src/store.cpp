#include "hwscene/store.hpp"

#include "hwscene/error.hpp"
#include "hwscene/io_util.hpp"

#include <sqlite3.h>

namespace hwscene {

namespace {

constexpr const char* kModule = "coordination_service";

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(ErrorKind::io, kModule, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Statement& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(ErrorKind::io, kModule, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
  std::string text(int col) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

JobStatus job_status_from(const std::string& s) {
  if (s == "pending") return JobStatus::pending;
  if (s == "running") return JobStatus::running;
  if (s == "done") return JobStatus::done;
  return JobStatus::failed;
}

Job job_from_row(const Statement& st) {
  Job j;
  j.job_id = st.text(0);
  j.scene_id = st.text(1);
  j.kind = st.text(2);
  j.element_id = st.text(3);
  j.bundle_ref = st.text(4);
  j.status = job_status_from(st.text(5));
  const std::string result = st.text(6);
  j.result = result.empty() ? json(nullptr) : json::parse(result);
  j.error = st.text(7);
  j.created_at = st.int64(8);
  j.updated_at = st.int64(9);
  return j;
}

constexpr const char* kJobColumns =
    "job_id, scene_id, kind, element_id, bundle_ref, status, result, error, created_at, updated_at";

}  // namespace

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "?";
}

json to_json(const Job& j) {
  return {{"job_id", j.job_id},         {"scene_id", j.scene_id},
          {"kind", j.kind},             {"element_id", j.element_id.empty() ? json(nullptr) : json(j.element_id)},
          {"bundle_ref", j.bundle_ref}, {"status", to_string(j.status)},
          {"result", j.result},         {"error", j.error.empty() ? json(nullptr) : json(j.error)},
          {"created_at", j.created_at}, {"updated_at", j.updated_at}};
}

Store::Store(const std::filesystem::path& root) : root_(root) {
  std::error_code ec;
  std::filesystem::create_directories(root_ / "blobs", ec);
  if (ec) throw Error(ErrorKind::io, kModule, "cannot create storage root " + root_.string() + ": " + ec.message());
  const auto db_path = (root_ / "hwscene.db").string();
  if (sqlite3_open_v2(db_path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(ErrorKind::io, kModule, "cannot open " + db_path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=FULL");
  exec(
      "CREATE TABLE IF NOT EXISTS events ("
      " seq INTEGER PRIMARY KEY, type TEXT NOT NULL, time INTEGER NOT NULL, data TEXT NOT NULL)");
  exec(
      "CREATE TABLE IF NOT EXISTS jobs ("
      " job_id TEXT PRIMARY KEY, scene_id TEXT NOT NULL, kind TEXT NOT NULL, element_id TEXT NOT NULL,"
      " bundle_ref TEXT NOT NULL, status TEXT NOT NULL, result TEXT NOT NULL, error TEXT NOT NULL,"
      " created_at INTEGER NOT NULL, updated_at INTEGER NOT NULL)");
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    const std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(ErrorKind::io, kModule, "sqlite: " + msg);
  }
}

void Store::append_event(const Event& e) {
  std::lock_guard lock(mutex_);
  Statement last(db_, "SELECT COALESCE(MAX(seq), 0) FROM events");
  last.step();
  if (e.seq != last.int64(0) + 1) {
    throw Error(ErrorKind::integrity, kModule,
                "event seq " + std::to_string(e.seq) + " does not follow " + std::to_string(last.int64(0)));
  }
  Statement st(db_, "INSERT INTO events (seq, type, time, data) VALUES (?, ?, ?, ?)");
  st.bind(1, e.seq).bind(2, e.type).bind(3, e.time).bind(4, e.data.dump());
  st.step();
}

std::vector<Event> Store::load_events() const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT seq, type, time, data FROM events ORDER BY seq");
  std::vector<Event> out;
  while (st.step()) {
    Event e{st.int64(0), st.text(1), st.int64(2), json::parse(st.text(3))};
    if (e.seq != static_cast<std::int64_t>(out.size()) + 1) {
      throw Error(ErrorKind::integrity, kModule, "event log has a gap before seq " + std::to_string(e.seq));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::filesystem::path Store::blob_path(const std::string& ref) const {
  if (ref.size() != 64 || ref.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw Error(ErrorKind::validation, kModule, "malformed content ref '" + ref + "'");
  }
  return root_ / "blobs" / ref.substr(0, 2) / ref;
}

std::string Store::put_blob(std::string_view bytes) {
  const std::string ref = sha256_hex(bytes);
  const auto path = blob_path(ref);
  if (!std::filesystem::exists(path)) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
  }
  return ref;
}

std::string Store::get_blob(const std::string& ref) const {
  const auto path = blob_path(ref);
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::not_found, kModule, "unknown blob " + ref);
  return read_file(path);
}

bool Store::has_blob(const std::string& ref) const { return std::filesystem::exists(blob_path(ref)); }

void Store::put_job(const Job& j) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "INSERT OR REPLACE INTO jobs (job_id, scene_id, kind, element_id, bundle_ref, status, result, error,"
                    " created_at, updated_at) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
  st.bind(1, j.job_id)
      .bind(2, j.scene_id)
      .bind(3, j.kind)
      .bind(4, j.element_id)
      .bind(5, j.bundle_ref)
      .bind(6, std::string(to_string(j.status)))
      .bind(7, j.result.is_null() ? std::string() : j.result.dump())
      .bind(8, j.error)
      .bind(9, j.created_at)
      .bind(10, j.updated_at);
  st.step();
}

std::optional<Job> Store::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string("SELECT ") + kJobColumns + " FROM jobs WHERE job_id = ?").c_str());
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return job_from_row(st);
}

std::vector<Job> Store::unfinished_jobs() const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string("SELECT ") + kJobColumns +
                     " FROM jobs WHERE status IN ('pending', 'running') ORDER BY created_at, job_id")
                        .c_str());
  std::vector<Job> out;
  while (st.step()) out.push_back(job_from_row(st));
  return out;
}

std::unique_ptr<Workspace> open_workspace(Store& store) {
  auto ws = std::make_unique<Workspace>([&store](const Event& e) { store.append_event(e); });
  const AssemblyLoader loader = [&store](const json& data) {
    auto asm_ = std::make_shared<Assembly>(
        load_assembly(store.get_blob(data.at("glb_ref").get<std::string>()),
                      store.get_blob(data.at("manifest_ref").get<std::string>())));
    if (asm_->content_hash != data.at("ref").get<std::string>()) {
      throw Error(ErrorKind::integrity, kModule, "assembly blobs no longer hash to " + data.at("ref").get<std::string>());
    }
    return std::shared_ptr<const Assembly>(std::move(asm_));
  };
  ws->replay(store.load_events(), loader);
  return ws;
}

}  // namespace hwscene
