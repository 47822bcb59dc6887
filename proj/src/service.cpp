#include "hwscene/service.hpp"

#include "hwscene/error.hpp"
#include "hwscene/io_util.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>

namespace hwscene {

namespace {

constexpr const char* kModule = "coordination_service";
constexpr const char* kVersion = "0.1.0";

struct Unauthorized {};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::incompatible:
    case ErrorKind::not_converged: return 422;
    case ErrorKind::io:
    case ErrorKind::integrity: return 500;
    default: return 400;
  }
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(std::string_view kind, std::string_view module, std::string_view message) {
  return {{"error", {{"kind", kind}, {"module", module}, {"message", message}}}};
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Unauthorized&) {
      send(res, 401, error_body("unauthorized", kModule, "missing bearer token"));
    } catch (const Error& e) {
      send(res, status_for(e.kind()), error_body(to_string(e.kind()), e.module(), e.what()));
    } catch (const json::exception& e) {
      send(res, 400, error_body("schema", kModule, e.what()));
    } catch (const std::exception& e) {
      send(res, 500, error_body("internal", kModule, e.what()));
    }
  };
}

std::string bearer_user(const httplib::Request& req) {
  const auto auth = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (!auth.starts_with(prefix) || auth.size() == prefix.size()) throw Unauthorized{};
  return auth.substr(prefix.size());
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = parse_json(req.body, kModule, "request body");
  if (!j.is_object()) throw Error(ErrorKind::schema, kModule, "request body must be an object");
  return j;
}

std::string form_value(const httplib::Request& req, const std::string& key, bool required) {
  if (req.has_file(key)) return req.get_file_value(key).content;
  if (req.has_param(key)) return req.get_param_value(key);
  if (required) throw Error(ErrorKind::schema, kModule, "multipart field '" + key + "' is required");
  return {};
}

std::optional<std::int64_t> expected_version(const json& body) {
  if (body.contains("expected_version") && !body["expected_version"].is_null()) {
    return body["expected_version"].get<std::int64_t>();
  }
  return std::nullopt;
}

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

double parse_number(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::validation, kModule, std::string("config: ") + what + " is not a number: '" + s + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// config

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file) {
  ServiceConfig c;
  if (file) {
    const json j = parse_json(read_file(*file), kModule, "config " + file->string());
    try {
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      if (j.contains("storage_root")) c.storage_root = j["storage_root"].get<std::string>();
      c.privacy = j.value("privacy", c.privacy);
      c.tau_mm = j.value("tau_mm", c.tau_mm);
      if (j.contains("slab")) {
        if (j["slab"].is_null()) {
          c.slab.reset();
        } else {
          WorkspaceSlab s;
          s.z_min_offset = j["slab"].value("z_min_offset", s.z_min_offset);
          s.z_max_offset = j["slab"].value("z_max_offset", s.z_max_offset);
          s.xy_margin = j["slab"].value("xy_margin", s.xy_margin);
          c.slab = s;
        }
      }
      c.rms_threshold_mm = j.value("rms_threshold_mm", c.rms_threshold_mm);
      c.workers = j.value("workers", c.workers);
      c.public_url = j.value("public_url", c.public_url);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::schema, kModule, std::string("config: ") + e.what());
    }
  }
  if (auto v = env("HWSCENE_HOST"); !v.empty()) c.host = v;
  if (auto v = env("HWSCENE_PORT"); !v.empty()) c.port = static_cast<int>(parse_number(v, "HWSCENE_PORT"));
  if (auto v = env("HWSCENE_STORAGE"); !v.empty()) c.storage_root = v;
  if (auto v = env("HWSCENE_PRIVACY"); !v.empty()) c.privacy = !(v == "0" || v == "false" || v == "off");
  if (auto v = env("HWSCENE_TAU"); !v.empty()) c.tau_mm = parse_number(v, "HWSCENE_TAU");
  if (auto v = env("HWSCENE_SLAB"); !v.empty()) {
    if (v == "none") {
      c.slab.reset();
    } else {
      WorkspaceSlab s;
      const auto a = v.find(','), b = v.find(',', a == std::string::npos ? a : a + 1);
      if (a == std::string::npos || b == std::string::npos) {
        throw Error(ErrorKind::validation, kModule, "HWSCENE_SLAB must be 'none' or 'zmin,zmax,margin'");
      }
      s.z_min_offset = parse_number(v.substr(0, a), "slab z_min_offset");
      s.z_max_offset = parse_number(v.substr(a + 1, b - a - 1), "slab z_max_offset");
      s.xy_margin = parse_number(v.substr(b + 1), "slab xy_margin");
      c.slab = s;
    }
  }
  if (auto v = env("HWSCENE_RMS_THRESHOLD"); !v.empty()) c.rms_threshold_mm = parse_number(v, "HWSCENE_RMS_THRESHOLD");
  if (auto v = env("HWSCENE_WORKERS"); !v.empty()) c.workers = static_cast<int>(parse_number(v, "HWSCENE_WORKERS"));
  if (auto v = env("HWSCENE_PUBLIC_URL"); !v.empty()) c.public_url = v;

  if (!(c.tau_mm > 0)) throw Error(ErrorKind::validation, kModule, "config: tau_mm must be positive");
  if (c.workers < 1) throw Error(ErrorKind::validation, kModule, "config: workers must be at least 1");
  if (c.port < 0 || c.port > 65535) throw Error(ErrorKind::validation, kModule, "config: port out of range");
  return c;
}

json to_json(const ServiceConfig& c) {
  json slab = nullptr;
  if (c.slab) {
    slab = {{"z_min_offset", c.slab->z_min_offset}, {"z_max_offset", c.slab->z_max_offset}, {"xy_margin", c.slab->xy_margin}};
  }
  return {{"host", c.host},
          {"port", c.port},
          {"storage_root", c.storage_root.string()},
          {"privacy", c.privacy},
          {"tau_mm", c.tau_mm},
          {"slab", slab},
          {"rms_threshold_mm", c.rms_threshold_mm},
          {"workers", c.workers},
          {"public_url", c.public_url}};
}

// ---------------------------------------------------------------------------
// lifecycle

Service::Service(ServiceConfig config) : config_(std::move(config)) {}

Service::~Service() { stop(); }

RegistrationOptions Service::registration_options() const {
  RegistrationOptions o;
  o.alignment.rms_threshold_mm = config_.rms_threshold_mm;
  o.privacy = config_.privacy;
  o.mask.tau = config_.tau_mm;
  o.mask.slab = config_.slab;
  return o;
}

void Service::start() {
  store_ = std::make_unique<Store>(config_.storage_root);
  workspace_ = open_workspace(*store_);
  server_ = std::make_unique<httplib::Server>();
  server_->set_payload_max_length(std::size_t{1} << 30);
  routes();
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
    if (port_ < 0) throw Error(ErrorKind::io, kModule, "cannot bind " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port)) {
      throw Error(ErrorKind::io, kModule,
                  "cannot bind " + config_.host + ":" + std::to_string(config_.port) + " (port busy?)");
    }
    port_ = config_.port;
  }
  if (config_.public_url.empty()) config_.public_url = "http://" + config_.host + ":" + std::to_string(port_);
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();

  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  for (const auto& job : store_->unfinished_jobs()) enqueue(job.job_id);
}

void Service::stop() {
  if (!server_) return;
  server_->stop();
  if (listener_.joinable()) listener_.join();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  workers_.clear();
  server_.reset();
  {
    std::lock_guard lock(stop_mutex_);
    stopped_ = true;
  }
  stop_cv_.notify_all();
}

void Service::wait() {
  std::unique_lock lock(stop_mutex_);
  stop_cv_.wait(lock, [this] { return stopped_; });
}

// ---------------------------------------------------------------------------
// jobs

void Service::enqueue(const std::string& job_id) {
  {
    std::lock_guard lock(jobs_mutex_);
    queue_.push_back(job_id);
  }
  jobs_cv_.notify_one();
}

void Service::drain_jobs() {
  std::unique_lock lock(jobs_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && active_jobs_ == 0; });
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(jobs_mutex_);
      jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      ++active_jobs_;
    }
    if (auto job = store_->job(id)) run_job(std::move(*job));
    {
      std::lock_guard lock(jobs_mutex_);
      --active_jobs_;
    }
    idle_cv_.notify_all();
  }
}

void Service::run_job(Job job) {
  job.status = JobStatus::running;
  job.updated_at = now_ms();
  store_->put_job(job);
  const RequestKind request_kind = job.kind == "video" ? RequestKind::video : RequestKind::splat;
  const auto already_fulfilled = [&]() {
    const auto el = workspace_->element(job.element_id);
    return el.fulfillment && el.fulfillment->status == FulfillmentStatus::fulfilled;
  };
  try {
    const std::string bytes = store_->get_blob(job.bundle_ref);
    const Scene scene = workspace_->scene(job.scene_id);
    const auto asm_ = workspace_->assembly(scene.assembly_ref);
    if (request_kind == RequestKind::splat) {
      const SplatBundle bundle = parse_splat_bundle(bytes);
      const RegisteredSplat reg = register_splat_bundle(bundle, *asm_, registration_options());
      const std::string splat_ref = store_->put_blob(write_splat_ply(reg.cloud));
      const SplatEntry entry = make_splat_entry(reg, splat_ref, bundle);
      if (job.element_id.empty()) {
        workspace_->add_splat(job.scene_id, entry, now_ms());
      } else if (!already_fulfilled()) {
        workspace_->fulfill_request(job.element_id, Artifact{RequestKind::splat, entry, std::nullopt, std::nullopt, job.bundle_ref},
                                    now_ms());
      }
      job.result = registration_report(reg);
      job.result["splat_ref"] = splat_ref;
    } else {
      const VideoBundle bundle = parse_video_bundle(bytes);
      const VideoAnnotation video = localize_video_bundle(bundle, *asm_, scene.current_joints(*asm_));
      if (job.element_id.empty()) {
        workspace_->add_video(job.scene_id, video, now_ms());
      } else if (!already_fulfilled()) {
        workspace_->fulfill_request(job.element_id, Artifact{RequestKind::video, std::nullopt, video, std::nullopt, job.bundle_ref},
                                    now_ms());
      }
      std::size_t localized = 0;
      for (const auto& f : video.frames) localized += f.pose ? 1 : 0;
      job.result = {{"clip_ref", video.clip_ref},
                    {"frames", video.frames.size()},
                    {"localized", localized},
                    {"placement_pose", video.placement_pose ? to_json(*video.placement_pose) : json(nullptr)}};
    }
    job.status = JobStatus::done;
  } catch (const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    job.status = JobStatus::failed;
    job.error = err ? err->module() + ": " + err->what() : std::string(e.what());
    if (!job.element_id.empty() && !(err && err->kind() == ErrorKind::conflict)) {
      try {
        if (!already_fulfilled()) {
          workspace_->fulfill_request(job.element_id, Artifact{request_kind, std::nullopt, std::nullopt, job.error, job.bundle_ref},
                                      now_ms());
        }
      } catch (const Error&) {
      }
    }
  }
  job.updated_at = now_ms();
  store_->put_job(job);
}

std::string Service::submit_capture(const std::string& scene_id, const std::string& kind, const std::string& element_id,
                                    const std::string& bundle, bool& created) {
  const auto capture_kind = capture_kind_from_string(kind);
  if (!capture_kind) throw Error(ErrorKind::validation, kModule, "capture kind must be 'splat' or 'video', got '" + kind + "'");
  workspace_->scene(scene_id);
  if (!element_id.empty()) {
    workspace_->check_fulfillable(element_id,
                                  *capture_kind == CaptureKind::video ? RequestKind::video : RequestKind::splat);
  }
  const std::string content = canonical_bundle_hash(bundle);
  const std::string norm_kind(to_string(*capture_kind));
  const std::string job_id = "job-" + sha256_hex(scene_id + "|" + norm_kind + "|" + element_id + "|" + content).substr(0, 16);

  std::lock_guard lock(jobs_mutex_);
  if (store_->job(job_id)) {
    created = false;
    return job_id;
  }
  Job job;
  job.job_id = job_id;
  job.scene_id = scene_id;
  job.kind = norm_kind;
  job.element_id = element_id;
  job.bundle_ref = store_->put_blob(bundle);
  job.created_at = job.updated_at = now_ms();
  store_->put_job(job);
  queue_.push_back(job_id);
  jobs_cv_.notify_one();
  created = true;
  return job_id;
}

// ---------------------------------------------------------------------------
// routes

json Service::element_json(const TimelineElement& e) const {
  json j = to_json(e);
  if (e.gesture && e.gesture->kind == GestureKind::request) {
    j["capture_url"] = config_.public_url + "/elements/" + e.element_id + "/fulfill";
  }
  return j;
}

void Service::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
    res.status = 204;
  });

  s.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          send(res, 200, {{"status", "ok"}, {"service", "hwscene"}, {"version", kVersion}, {"events", workspace_->last_seq()}});
        }));

  s.Post("/assemblies", guarded([this](const httplib::Request& req, httplib::Response& res) {
           bearer_user(req);
           const std::string glb = form_value(req, "glb", true);
           const std::string manifest = form_value(req, "manifest", true);
           auto asm_ = std::make_shared<const Assembly>(load_assembly(glb, manifest));
           const bool existed = workspace_->has_assembly(asm_->content_hash);
           const json source = {{"glb_ref", store_->put_blob(glb)}, {"manifest_ref", store_->put_blob(manifest)}};
           const std::string ref = workspace_->add_assembly(asm_, source, now_ms());
           send(res, existed ? 200 : 201, {{"assembly_ref", ref}, {"parts", part_tree_to_json(*asm_)}});
         }));

  s.Get(R"(/assemblies/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string ref = req.matches[1];
          const auto asm_ = workspace_->assembly(ref);
          send(res, 200,
               {{"assembly_ref", ref},
                {"parts", part_tree_to_json(*asm_)},
                {"manifest", manifest_to_json(*asm_)},
                {"model_url", "/assemblies/" + ref + "/model.glb"}});
        }));

  s.Get(R"(/assemblies/([0-9a-f]+)/model\.glb)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const json source = workspace_->assembly_source(req.matches[1]);
          res.set_content(store_->get_blob(source.at("glb_ref").get<std::string>()), "model/gltf-binary");
        }));

  s.Get(R"(/assemblies/([0-9a-f]+)/parts/([^/]+)/docs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto q = workspace_->query_by_part(req.matches[1], req.matches[2]);
          send(res, 200, {{"docs", to_json(q)["docs"]}});
        }));

  s.Get(R"(/assemblies/([0-9a-f]+)/parts/([^/]+)/issues)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto q = workspace_->query_by_part(req.matches[1], req.matches[2]);
          send(res, 200, {{"issues", to_json(q)["issues"]}});
        }));

  s.Post("/scenes", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string user = bearer_user(req);
           const json body = body_json(req);
           const Scene scene = workspace_->create_scene(body.at("assembly_ref").get<std::string>(), user, now_ms());
           send(res, 201, to_json(scene));
         }));

  s.Get(R"(/scenes/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          json j = to_json(workspace_->scene(req.matches[1]));
          json issues = json::array();
          for (const auto& i : workspace_->issues_in_scene(req.matches[1])) issues.push_back(to_json(i));
          j["issues"] = issues;
          send(res, 200, j);
        }));

  s.Get(R"(/scenes/([^/]+)/issues)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          json issues = json::array();
          for (const auto& i : workspace_->issues_in_scene(req.matches[1])) issues.push_back(to_json(i));
          send(res, 200, {{"issues", issues}});
        }));

  s.Get(R"(/scenes/([^/]+)/splats/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const Scene scene = workspace_->scene(req.matches[1]);
          const auto n = std::stoull(req.matches[2]);
          if (n >= scene.splats.size()) {
            throw Error(ErrorKind::not_found, kModule, "scene has no splat " + std::string(req.matches[2]));
          }
          res.set_content(store_->get_blob(scene.splats[n].splat_ref), "application/octet-stream");
        }));

  s.Post(R"(/scenes/([^/]+)/captures)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           bearer_user(req);
           const std::string bundle = form_value(req, "bundle", true);
           std::string kind = form_value(req, "kind", false);
           if (kind.empty()) kind = "splat";
           const std::string element_id = form_value(req, "element_id", false);
           bool created = false;
           const std::string id = submit_capture(req.matches[1], kind, element_id, bundle, created);
           send(res, created ? 202 : 200, to_json(*store_->job(id)));
         }));

  s.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto job = store_->job(req.matches[1]);
          if (!job) throw Error(ErrorKind::not_found, kModule, "unknown job '" + std::string(req.matches[1]) + "'");
          send(res, 200, to_json(*job));
        }));

  s.Post(R"(/scenes/([^/]+)/issues)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string user = bearer_user(req);
           const json body = body_json(req);
           const auto t = now_ms();
           const Issue issue = workspace_->open_issue(req.matches[1], body.at("title").get<std::string>(), user, t);
           if (body.contains("text") && !body["text"].get<std::string>().empty()) {
             workspace_->author_gesture(issue.issue_id, user, std::nullopt, body["text"].get<std::string>(), t);
           }
           json j = to_json(workspace_->issue(issue.issue_id));
           json elements = json::array();
           for (const auto& e : workspace_->timeline(issue.issue_id)) elements.push_back(element_json(e));
           j["elements"] = elements;
           send(res, 201, j);
         }));

  s.Get(R"(/issues/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          json j = to_json(workspace_->issue(req.matches[1]));
          json elements = json::array();
          for (const auto& e : workspace_->timeline(req.matches[1])) elements.push_back(element_json(e));
          j["elements"] = elements;
          send(res, 200, j);
        }));

  s.Post(R"(/issues/([^/]+)/gestures)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string user = bearer_user(req);
           const json body = body_json(req);
           std::optional<Gesture> gesture;
           std::string text = body.value("text", "");
           if (body.contains("gesture")) gesture = gesture_from_json(body["gesture"]);
           else if (body.contains("kind")) gesture = gesture_from_json(body);
           const auto el = workspace_->author_gesture(req.matches[1], user, gesture, text, now_ms(), expected_version(body));
           send(res, 201, element_json(el));
         }));

  s.Post(R"(/issues/([^/]+)/resolve)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string user = bearer_user(req);
           send(res, 200, to_json(workspace_->resolve_issue(req.matches[1], user, now_ms())));
         }));

  s.Get(R"(/issues/([^/]+)/recontextualize)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string scene = req.get_param_value("scene");
          if (scene.empty()) throw Error(ErrorKind::validation, kModule, "query parameter 'scene' is required");
          json placed = json::array();
          for (const auto& p : workspace_->recontextualize_issue(req.matches[1], scene)) placed.push_back(to_json(p));
          send(res, 200, {{"issue_id", std::string(req.matches[1])}, {"scene_id", scene}, {"placed", placed}});
        }));

  s.Get(R"(/elements/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send(res, 200, element_json(workspace_->element(req.matches[1])));
        }));

  s.Post(R"(/elements/([^/]+)/replies)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string user = bearer_user(req);
           const json body = body_json(req);
           send(res, 201, element_json(workspace_->reply(req.matches[1], user, body.at("text").get<std::string>(), now_ms())));
         }));

  s.Post(R"(/elements/([^/]+)/fulfill)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           bearer_user(req);
           const std::string element_id = req.matches[1];
           const auto el = workspace_->element(element_id);
           if (!el.gesture || el.gesture->kind != GestureKind::request) {
             throw Error(ErrorKind::validation, kModule, "element '" + element_id + "' is not a request");
           }
           const std::string bundle = form_value(req, "bundle", true);
           const std::string scene_id = workspace_->issue(el.issue_id).scene_id;
           bool created = false;
           const std::string id =
               submit_capture(scene_id, std::string(to_string(*el.gesture->request_kind)), element_id, bundle, created);
           send(res, created ? 202 : 200, to_json(*store_->job(id)));
         }));
}

}  // namespace hwscene
