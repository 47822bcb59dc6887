#include "hwscene/scene.hpp"

#include "hwscene/error.hpp"

#include <algorithm>
#include <mutex>
#include <numbers>

namespace hwscene {

namespace {

constexpr const char* kModule = "scene_core";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

template <typename Enum, std::size_t N>
Enum enum_from(const json& j, const std::array<Enum, N>& values, const char* what) {
  const auto s = j.get<std::string>();
  for (Enum v : values) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorKind::validation, std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::array kGestureKinds{GestureKind::pointing, GestureKind::move, GestureKind::request, GestureKind::action};
constexpr std::array kRequestKinds{RequestKind::video, RequestKind::splat};
constexpr std::array kActionKinds{ActionKind::tighten, ActionKind::loosen, ActionKind::probe};
constexpr std::array kIssueStatuses{IssueStatus::open, IssueStatus::resolved};
constexpr std::array kFulfillmentStatuses{FulfillmentStatus::fulfilled, FulfillmentStatus::fulfilled_with_errors};

bool is_rotation(const Eigen::Matrix3d& r) {
  return r.allFinite() && (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9 &&
         std::abs(r.determinant() - 1.0) <= 1e-9;
}

std::string next_id(const char* prefix, std::int64_t counter) { return std::string(prefix) + "-" + std::to_string(counter + 1); }

JointEstimate joint_estimate_from_json(const json& j) {
  JointEstimate e;
  e.dof_id = j.at("dof_id").get<std::string>();
  e.status = j.at("status").get<std::string>() == "resolved" ? JointStatus::resolved : JointStatus::unresolved;
  e.value = j.value("value", 0.0);
  e.residual = j.value("residual", 0.0);
  e.out_of_limits = j.value("out_of_limits", false);
  e.message = j.value("message", "");
  return e;
}

json optional_pose(const std::optional<ImagePose>& p) { return p ? to_json(*p) : json(nullptr); }

std::optional<ImagePose> optional_pose_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return image_pose_from_json(j);
}

}  // namespace

std::string_view to_string(GestureKind k) {
  switch (k) {
    case GestureKind::pointing: return "pointing";
    case GestureKind::move: return "move";
    case GestureKind::request: return "request";
    case GestureKind::action: return "action";
  }
  return "?";
}

std::string_view to_string(RequestKind k) { return k == RequestKind::video ? "video" : "splat"; }

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::tighten: return "tighten";
    case ActionKind::loosen: return "loosen";
    case ActionKind::probe: return "probe";
  }
  return "?";
}

std::string_view to_string(IssueStatus s) { return s == IssueStatus::open ? "open" : "resolved"; }

std::string_view to_string(FulfillmentStatus s) {
  return s == FulfillmentStatus::fulfilled ? "fulfilled" : "fulfilled_with_errors";
}

// ---------------------------------------------------------------------------
// validation

std::vector<std::string> validate_gesture(const Gesture& g, const Assembly& asm_) {
  if (g.anchor_part.empty()) fail(ErrorKind::validation, "gesture needs an anchor_part");
  if (!asm_.has_part(g.anchor_part)) fail(ErrorKind::validation, "unknown anchor part '" + g.anchor_part + "'");

  const auto require = [&](bool present, bool needed, const char* field) {
    if (present && !needed) {
      fail(ErrorKind::validation, std::string(to_string(g.kind)) + " gesture must not carry " + field);
    }
    if (!present && needed) fail(ErrorKind::validation, std::string(to_string(g.kind)) + " gesture needs " + field);
  };
  const bool point = g.kind == GestureKind::pointing || g.kind == GestureKind::action;
  require(g.anchor_point.has_value(), point, "anchor_point");
  require(g.move_target.has_value(), g.kind == GestureKind::move, "move_target");
  require(g.request_kind.has_value(), g.kind == GestureKind::request, "request_kind");
  require(g.action_kind.has_value(), g.kind == GestureKind::action, "action_kind");
  if (g.anchor_point && !g.anchor_point->allFinite()) fail(ErrorKind::validation, "anchor_point is not finite");

  std::vector<std::string> warnings;
  if (!g.move_target) return warnings;
  if (!is_rotation(g.move_target->linear()) || !g.move_target->translation().allFinite()) {
    fail(ErrorKind::validation, "move_target rotation is not orthonormal");
  }
  // Implied joint displacement of each DOF that moves the anchor part.
  const Rigid3d& w0 = asm_.zero_pose.at(g.anchor_part);
  const Rigid3d delta = w0 * *g.move_target * w0.inverse(Eigen::Isometry);
  for (const DofSpec* d : asm_.dofs_moving(g.anchor_part)) {
    double value = 0;
    if (d->kind == DofKind::prismatic) {
      value = d->axis.dot(delta * d->origin - d->origin);
    } else {
      const Eigen::Quaterniond q(delta.linear());
      value = 2.0 * std::atan2(q.vec().dot(d->axis), q.w());
      if (value > std::numbers::pi) value -= 2.0 * std::numbers::pi;
      if (value < -std::numbers::pi) value += 2.0 * std::numbers::pi;
    }
    if (value < d->limit_min || value > d->limit_max) {
      warnings.push_back("move_target implies " + format_double(value) + " on dof '" + d->dof_id + "', outside [" +
                         format_double(d->limit_min) + ", " + format_double(d->limit_max) + "]");
    }
  }
  return warnings;
}

std::set<std::string> referenced_parts(const std::vector<TimelineElement>& timeline) {
  std::set<std::string> out;
  for (const auto& e : timeline) {
    if (e.gesture) out.insert(e.gesture->anchor_part);
  }
  return out;
}

JointValues Scene::current_joints(const Assembly& asm_) const {
  if (splats.empty()) return asm_.joint_values;
  return splats.back().joint_values;
}

// ---------------------------------------------------------------------------
// serialization

json to_json(const Gesture& g) {
  json j = {{"kind", to_string(g.kind)}, {"anchor_part", g.anchor_part}, {"text", g.text}};
  if (g.anchor_point) j["anchor_point"] = to_json(*g.anchor_point);
  if (g.move_target) j["move_target"] = to_json(*g.move_target);
  if (g.request_kind) j["request_kind"] = to_string(*g.request_kind);
  if (g.action_kind) j["action_kind"] = to_string(*g.action_kind);
  return j;
}

Gesture gesture_from_json(const json& j) {
  try {
    Gesture g;
    g.kind = enum_from(j.at("kind"), kGestureKinds, "gesture kind");
    g.anchor_part = j.value("anchor_part", "");
    g.text = j.value("text", "");
    if (j.contains("anchor_point") && !j["anchor_point"].is_null()) g.anchor_point = vec3_from_json(j["anchor_point"]);
    if (j.contains("move_target") && !j["move_target"].is_null()) g.move_target = rigid_from_json(j["move_target"]);
    if (j.contains("request_kind") && !j["request_kind"].is_null()) {
      g.request_kind = enum_from(j["request_kind"], kRequestKinds, "request kind");
    }
    if (j.contains("action_kind") && !j["action_kind"].is_null()) {
      g.action_kind = enum_from(j["action_kind"], kActionKinds, "action kind");
    }
    return g;
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("gesture: ") + e.what());
  }
}

json to_json(const TimelineElement& e) {
  json replies = json::array();
  for (const auto& r : e.replies) replies.push_back({{"user_id", r.user_id}, {"time", r.time}, {"text", r.text}});
  json j = {{"element_id", e.element_id},
            {"issue_id", e.issue_id},
            {"sequence", e.sequence},
            {"author", e.author},
            {"time", e.time},
            {"gesture", e.gesture ? to_json(*e.gesture) : json(nullptr)},
            {"text", e.text},
            {"warnings", e.warnings},
            {"replies", replies},
            {"fulfillment", nullptr}};
  if (e.fulfillment) {
    j["fulfillment"] = {{"kind", to_string(e.fulfillment->kind)},
                        {"status", to_string(e.fulfillment->status)},
                        {"artifact_ref", e.fulfillment->artifact_ref},
                        {"diagnostics", e.fulfillment->diagnostics},
                        {"time", e.fulfillment->time}};
  }
  return j;
}

TimelineElement element_from_json(const json& j) {
  TimelineElement e;
  e.element_id = j.at("element_id").get<std::string>();
  e.issue_id = j.at("issue_id").get<std::string>();
  e.sequence = j.at("sequence").get<std::int64_t>();
  e.author = j.at("author").get<std::string>();
  e.time = j.at("time").get<std::int64_t>();
  if (!j.at("gesture").is_null()) e.gesture = gesture_from_json(j["gesture"]);
  e.text = j.at("text").get<std::string>();
  e.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& r : j.at("replies")) {
    e.replies.push_back({r.at("user_id").get<std::string>(), r.at("time").get<std::int64_t>(), r.at("text").get<std::string>()});
  }
  if (!j.at("fulfillment").is_null()) {
    const auto& f = j["fulfillment"];
    e.fulfillment = Fulfillment{enum_from(f.at("kind"), kRequestKinds, "request kind"),
                                enum_from(f.at("status"), kFulfillmentStatuses, "fulfillment status"),
                                f.at("artifact_ref").get<std::string>(), f.at("diagnostics").get<std::string>(),
                                f.at("time").get<std::int64_t>()};
  }
  return e;
}

json to_json(const Issue& i) {
  return {{"issue_id", i.issue_id},
          {"scene_id", i.scene_id},
          {"assembly_ref", i.assembly_ref},
          {"title", i.title},
          {"created_by", i.created_by},
          {"created_at", i.created_at},
          {"status", to_string(i.status)},
          {"timeline", i.timeline},
          {"part_index", i.part_index},
          {"resolved_at", i.resolved_at},
          {"resolved_seq", i.resolved_seq},
          {"version", i.version},
          {"next_sequence", i.next_sequence}};
}

Issue issue_from_json(const json& j) {
  Issue i;
  i.issue_id = j.at("issue_id").get<std::string>();
  i.scene_id = j.at("scene_id").get<std::string>();
  i.assembly_ref = j.at("assembly_ref").get<std::string>();
  i.title = j.at("title").get<std::string>();
  i.created_by = j.at("created_by").get<std::string>();
  i.created_at = j.at("created_at").get<std::int64_t>();
  i.status = enum_from(j.at("status"), kIssueStatuses, "issue status");
  i.timeline = j.at("timeline").get<std::vector<std::string>>();
  i.part_index = j.at("part_index").get<std::set<std::string>>();
  i.resolved_at = j.at("resolved_at").get<std::int64_t>();
  i.resolved_seq = j.at("resolved_seq").get<std::int64_t>();
  i.version = j.at("version").get<std::int64_t>();
  i.next_sequence = j.at("next_sequence").get<std::int64_t>();
  return i;
}

json to_json(const SplatEntry& s) {
  json joints = json::array();
  for (const auto& e : s.joints) joints.push_back(to_json(e));
  return {{"splat_ref", s.splat_ref},
          {"bundle_ref", s.bundle_ref},
          {"transform", to_json(s.transform)},
          {"rms_mm", s.rms_mm},
          {"warning", s.warning ? json(*s.warning) : json(nullptr)},
          {"capture_time", s.capture_time},
          {"joint_values", s.joint_values},
          {"joints", joints},
          {"gaussians_total", s.gaussians_total},
          {"gaussians_kept", s.gaussians_kept}};
}

SplatEntry splat_entry_from_json(const json& j) {
  SplatEntry s;
  s.splat_ref = j.at("splat_ref").get<std::string>();
  s.bundle_ref = j.at("bundle_ref").get<std::string>();
  s.transform = similarity_from_json(j.at("transform"));
  s.rms_mm = j.at("rms_mm").get<double>();
  if (!j.at("warning").is_null()) s.warning = j["warning"].get<std::string>();
  s.capture_time = j.at("capture_time").get<std::int64_t>();
  s.joint_values = j.at("joint_values").get<JointValues>();
  for (const auto& e : j.at("joints")) s.joints.push_back(joint_estimate_from_json(e));
  s.gaussians_total = j.at("gaussians_total").get<std::size_t>();
  s.gaussians_kept = j.at("gaussians_kept").get<std::size_t>();
  return s;
}

json to_json(const VideoAnnotation& v) {
  json frames = json::array();
  for (const auto& f : v.frames) {
    frames.push_back({{"frame_index", f.frame_index}, {"pose", optional_pose(f.pose)}, {"rms", f.rms}, {"error", f.error}});
  }
  return {{"clip_ref", v.clip_ref},
          {"bundle_ref", v.bundle_ref},
          {"camera", to_json(v.camera)},
          {"frames", frames},
          {"placement_pose", optional_pose(v.placement_pose)},
          {"capture_time", v.capture_time}};
}

VideoAnnotation video_from_json(const json& j) {
  VideoAnnotation v;
  v.clip_ref = j.at("clip_ref").get<std::string>();
  v.bundle_ref = j.at("bundle_ref").get<std::string>();
  v.camera = camera_from_json(j.at("camera"));
  for (const auto& f : j.at("frames")) {
    v.frames.push_back({f.at("frame_index").get<std::int64_t>(), optional_pose_from(f.at("pose")), f.at("rms").get<double>(),
                        f.at("error").get<std::string>()});
  }
  v.placement_pose = optional_pose_from(j.at("placement_pose"));
  v.capture_time = j.at("capture_time").get<std::int64_t>();
  return v;
}

json to_json(const Scene& s) {
  json splats = json::array();
  for (const auto& e : s.splats) splats.push_back(to_json(e));
  json videos = json::array();
  for (const auto& v : s.videos) videos.push_back(to_json(v));
  return {{"scene_id", s.scene_id},   {"assembly_ref", s.assembly_ref},
          {"created_by", s.created_by}, {"created_at", s.created_at},
          {"splats", splats},           {"videos", videos},
          {"pending_capture", s.pending_capture()}, {"version", s.version}};
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.assembly_ref = j.at("assembly_ref").get<std::string>();
  s.created_by = j.at("created_by").get<std::string>();
  s.created_at = j.at("created_at").get<std::int64_t>();
  for (const auto& e : j.at("splats")) s.splats.push_back(splat_entry_from_json(e));
  for (const auto& v : j.at("videos")) s.videos.push_back(video_from_json(v));
  s.version = j.at("version").get<std::int64_t>();
  return s;
}

json to_json(const IssueSummary& s) {
  return {{"issue_id", s.issue_id},       {"scene_id", s.scene_id},       {"title", s.title},
          {"status", to_string(s.status)}, {"resolved_at", s.resolved_at}, {"part_index", s.part_index}};
}

json to_json(const DocLink& d) { return {{"part_ids", d.part_ids}, {"title", d.title}, {"url", d.url}}; }

json to_json(const PartQuery& q) {
  json docs = json::array();
  for (const auto& d : q.docs) docs.push_back(to_json(d));
  json issues = json::array();
  for (const auto& i : q.issues) issues.push_back(to_json(i));
  return {{"docs", docs}, {"issues", issues}};
}

json to_json(const PlacedGesture& p) {
  return {{"element_id", p.element_id},
          {"sequence", p.sequence},
          {"gesture", to_json(p.gesture)},
          {"part_pose", to_json(p.part_pose)},
          {"world_point", p.world_point ? to_json(*p.world_point) : json(nullptr)},
          {"world_target", p.world_target ? to_json(*p.world_target) : json(nullptr)}};
}

json to_json(const Event& e) { return {{"seq", e.seq}, {"type", e.type}, {"time", e.time}, {"data", e.data}}; }

Event event_from_json(const json& j) {
  return {j.at("seq").get<std::int64_t>(), j.at("type").get<std::string>(), j.at("time").get<std::int64_t>(), j.at("data")};
}

// ---------------------------------------------------------------------------
// workspace: lookup

const Scene& Workspace::scene_ref(const std::string& id) const {
  const auto it = scenes_.find(id);
  if (it == scenes_.end()) fail(ErrorKind::not_found, "unknown scene '" + id + "'");
  return it->second;
}

const Issue& Workspace::issue_ref(const std::string& id) const {
  const auto it = issues_.find(id);
  if (it == issues_.end()) fail(ErrorKind::not_found, "unknown issue '" + id + "'");
  return it->second;
}

const TimelineElement& Workspace::element_ref(const std::string& id) const {
  const auto it = elements_.find(id);
  if (it == elements_.end()) fail(ErrorKind::not_found, "unknown element '" + id + "'");
  return it->second;
}

const Assembly& Workspace::assembly_ref(const std::string& ref) const {
  const auto it = assemblies_.find(ref);
  if (it == assemblies_.end()) fail(ErrorKind::not_found, "unknown assembly '" + ref + "'");
  return *it->second;
}

Scene& Workspace::scene_mut(const std::string& id) { return const_cast<Scene&>(scene_ref(id)); }
Issue& Workspace::issue_mut(const std::string& id) { return const_cast<Issue&>(issue_ref(id)); }
TimelineElement& Workspace::element_mut(const std::string& id) { return const_cast<TimelineElement&>(element_ref(id)); }

// ---------------------------------------------------------------------------
// workspace: event application

std::int64_t Workspace::commit(const std::string& type, std::int64_t time, json data) {
  Event e{seq_ + 1, type, time, std::move(data)};
  if (sink_) sink_(e);
  apply(e);
  return e.seq;
}

void Workspace::apply_assembly(const Event& e, std::shared_ptr<const Assembly> asm_) {
  seq_ = e.seq;
  const auto ref = e.data.at("ref").get<std::string>();
  assemblies_.emplace(ref, std::move(asm_));
  assembly_sources_.emplace(ref, e.data);
}

void Workspace::apply(const Event& e) {
  const json& d = e.data;
  if (e.type == "assembly_added") {
    if (!loader_) fail(ErrorKind::integrity, "assembly event replayed without a loader");
    apply_assembly(e, (*loader_)(d));
    return;
  }
  seq_ = e.seq;
  if (e.type == "scene_created") {
    Scene s;
    s.scene_id = d.at("scene_id").get<std::string>();
    s.assembly_ref = d.at("assembly_ref").get<std::string>();
    s.created_by = d.at("user").get<std::string>();
    s.created_at = e.time;
    s.version = 1;
    ++scene_counter_;
    scenes_.emplace(s.scene_id, std::move(s));
  } else if (e.type == "splat_added") {
    Scene& s = scene_mut(d.at("scene_id").get<std::string>());
    s.splats.push_back(splat_entry_from_json(d.at("splat")));
    ++s.version;
  } else if (e.type == "video_added") {
    Scene& s = scene_mut(d.at("scene_id").get<std::string>());
    s.videos.push_back(video_from_json(d.at("video")));
    ++s.version;
  } else if (e.type == "issue_opened") {
    Issue i;
    i.issue_id = d.at("issue_id").get<std::string>();
    i.scene_id = d.at("scene_id").get<std::string>();
    i.assembly_ref = scene_ref(i.scene_id).assembly_ref;
    i.title = d.at("title").get<std::string>();
    i.created_by = d.at("user").get<std::string>();
    i.created_at = e.time;
    i.version = 1;
    ++issue_counter_;
    issues_.emplace(i.issue_id, std::move(i));
  } else if (e.type == "element_added") {
    Issue& i = issue_mut(d.at("issue_id").get<std::string>());
    TimelineElement el;
    el.element_id = d.at("element_id").get<std::string>();
    el.issue_id = i.issue_id;
    el.sequence = i.next_sequence++;
    el.author = d.at("user").get<std::string>();
    el.time = e.time;
    if (!d.at("gesture").is_null()) el.gesture = gesture_from_json(d["gesture"]);
    el.text = d.at("text").get<std::string>();
    el.warnings = d.at("warnings").get<std::vector<std::string>>();
    i.timeline.push_back(el.element_id);
    ++i.version;
    ++element_counter_;
    elements_.emplace(el.element_id, std::move(el));
  } else if (e.type == "reply_added") {
    TimelineElement& el = element_mut(d.at("element_id").get<std::string>());
    el.replies.push_back({d.at("user").get<std::string>(), e.time, d.at("text").get<std::string>()});
    ++issue_mut(el.issue_id).version;
  } else if (e.type == "request_fulfilled") {
    TimelineElement& el = element_mut(d.at("element_id").get<std::string>());
    Issue& i = issue_mut(el.issue_id);
    Fulfillment f;
    f.kind = *el.gesture->request_kind;
    f.status = d.at("failure").is_null() ? FulfillmentStatus::fulfilled : FulfillmentStatus::fulfilled_with_errors;
    f.diagnostics = d.at("failure").is_null() ? "" : d["failure"].get<std::string>();
    f.artifact_ref = d.at("artifact_ref").get<std::string>();
    f.time = e.time;
    el.fulfillment = f;
    ++i.version;
    if (d.contains("splat")) {
      Scene& s = scene_mut(i.scene_id);
      s.splats.push_back(splat_entry_from_json(d["splat"]));
      ++s.version;
    } else if (d.contains("video")) {
      Scene& s = scene_mut(i.scene_id);
      s.videos.push_back(video_from_json(d["video"]));
      ++s.version;
    }
  } else if (e.type == "issue_resolved") {
    Issue& i = issue_mut(d.at("issue_id").get<std::string>());
    std::vector<TimelineElement> timeline;
    for (const auto& id : i.timeline) timeline.push_back(elements_.at(id));
    i.part_index = referenced_parts(timeline);
    i.status = IssueStatus::resolved;
    i.resolved_at = e.time;
    i.resolved_seq = e.seq;
    ++i.version;
  } else {
    fail(ErrorKind::integrity, "unknown event type '" + e.type + "'");
  }
}

void Workspace::replay(const std::vector<Event>& events, const AssemblyLoader& loader) {
  std::unique_lock lock(mutex_);
  loader_ = &loader;
  try {
    for (const auto& e : events) apply(e);
  } catch (...) {
    loader_ = nullptr;
    throw;
  }
  loader_ = nullptr;
}

// ---------------------------------------------------------------------------
// workspace: commands

std::string Workspace::add_assembly(std::shared_ptr<const Assembly> asm_, const json& source, std::int64_t time) {
  std::unique_lock lock(mutex_);
  const std::string ref = asm_->content_hash;
  if (assemblies_.contains(ref)) return ref;
  json data = source;
  data["ref"] = ref;
  Event e{seq_ + 1, "assembly_added", time, std::move(data)};
  if (sink_) sink_(e);
  apply_assembly(e, std::move(asm_));
  return ref;
}

Scene Workspace::create_scene(const std::string& assembly_ref_id, const std::string& user, std::int64_t time) {
  std::unique_lock lock(mutex_);
  assembly_ref(assembly_ref_id);
  const std::string id = next_id("scene", scene_counter_);
  commit("scene_created", time, {{"scene_id", id}, {"assembly_ref", assembly_ref_id}, {"user", user}});
  return scenes_.at(id);
}

Scene Workspace::add_splat(const std::string& scene_id, const SplatEntry& splat, std::int64_t time) {
  std::unique_lock lock(mutex_);
  const Scene& s = scene_ref(scene_id);
  for (const auto& existing : s.splats) {
    if (!splat.bundle_ref.empty() && existing.bundle_ref == splat.bundle_ref) return s;
  }
  commit("splat_added", time, {{"scene_id", scene_id}, {"splat", to_json(splat)}});
  return scenes_.at(scene_id);
}

Scene Workspace::add_video(const std::string& scene_id, const VideoAnnotation& video, std::int64_t time) {
  std::unique_lock lock(mutex_);
  const Scene& s = scene_ref(scene_id);
  for (const auto& existing : s.videos) {
    if (!video.bundle_ref.empty() && existing.bundle_ref == video.bundle_ref) return s;
  }
  commit("video_added", time, {{"scene_id", scene_id}, {"video", to_json(video)}});
  return scenes_.at(scene_id);
}

Issue Workspace::open_issue(const std::string& scene_id, const std::string& title, const std::string& user,
                            std::int64_t time) {
  std::unique_lock lock(mutex_);
  scene_ref(scene_id);
  if (title.empty()) fail(ErrorKind::validation, "issue title is empty");
  const std::string id = next_id("issue", issue_counter_);
  commit("issue_opened", time, {{"issue_id", id}, {"scene_id", scene_id}, {"title", title}, {"user", user}});
  return issues_.at(id);
}

TimelineElement Workspace::author_gesture(const std::string& issue_id, const std::string& user,
                                          const std::optional<Gesture>& gesture, const std::string& text,
                                          std::int64_t time, std::optional<std::int64_t> expected_version) {
  std::unique_lock lock(mutex_);
  const Issue& i = issue_ref(issue_id);
  if (i.status != IssueStatus::open) fail(ErrorKind::conflict, "issue '" + issue_id + "' is resolved");
  if (expected_version && *expected_version != i.version) {
    fail(ErrorKind::conflict, "issue '" + issue_id + "' is at version " + std::to_string(i.version) + ", expected " +
                                  std::to_string(*expected_version));
  }
  std::vector<std::string> warnings;
  if (gesture) {
    warnings = validate_gesture(*gesture, assembly_ref(i.assembly_ref));
  } else if (text.empty()) {
    fail(ErrorKind::validation, "a message needs text");
  }
  const std::string id = next_id("el", element_counter_);
  commit("element_added", time,
         {{"element_id", id},
          {"issue_id", issue_id},
          {"user", user},
          {"gesture", gesture ? to_json(*gesture) : json(nullptr)},
          {"text", gesture ? gesture->text : text},
          {"warnings", warnings}});
  return elements_.at(id);
}

TimelineElement Workspace::reply(const std::string& element_id, const std::string& user, const std::string& text,
                                 std::int64_t time) {
  std::unique_lock lock(mutex_);
  element_ref(element_id);
  if (text.empty()) fail(ErrorKind::validation, "reply text is empty");
  commit("reply_added", time, {{"element_id", element_id}, {"user", user}, {"text", text}});
  return elements_.at(element_id);
}

void Workspace::check_fulfillable(const std::string& element_id, RequestKind kind) const {
  std::shared_lock lock(mutex_);
  const TimelineElement& el = element_ref(element_id);
  if (!el.gesture || el.gesture->kind != GestureKind::request) {
    fail(ErrorKind::validation, "element '" + element_id + "' is not a request");
  }
  if (*el.gesture->request_kind != kind) {
    fail(ErrorKind::validation, "element '" + element_id + "' requests a " + std::string(to_string(*el.gesture->request_kind)) +
                                    ", got a " + std::string(to_string(kind)));
  }
  if (el.fulfillment && el.fulfillment->status == FulfillmentStatus::fulfilled) {
    fail(ErrorKind::conflict, "request '" + element_id + "' is already fulfilled");
  }
  if (issue_ref(el.issue_id).status != IssueStatus::open) {
    fail(ErrorKind::conflict, "issue '" + el.issue_id + "' is resolved");
  }
}

TimelineElement Workspace::fulfill_request(const std::string& element_id, const Artifact& artifact, std::int64_t time) {
  check_fulfillable(element_id, artifact.kind);
  std::unique_lock lock(mutex_);
  const TimelineElement& el = element_ref(element_id);
  if (el.fulfillment && el.fulfillment->status == FulfillmentStatus::fulfilled) {
    fail(ErrorKind::conflict, "request '" + element_id + "' is already fulfilled");
  }
  json data = {{"element_id", element_id}, {"failure", artifact.failure ? json(*artifact.failure) : json(nullptr)}};
  std::string ref = artifact.bundle_ref;
  if (!artifact.failure) {
    if (artifact.kind == RequestKind::splat) {
      if (!artifact.splat) fail(ErrorKind::validation, "splat artifact without a splat");
      data["splat"] = to_json(*artifact.splat);
      ref = artifact.splat->splat_ref;
    } else {
      if (!artifact.video) fail(ErrorKind::validation, "video artifact without a clip");
      data["video"] = to_json(*artifact.video);
      ref = artifact.video->clip_ref;
    }
  }
  data["artifact_ref"] = ref;
  commit("request_fulfilled", time, std::move(data));
  return elements_.at(element_id);
}

Issue Workspace::resolve_issue(const std::string& issue_id, const std::string& user, std::int64_t time) {
  std::unique_lock lock(mutex_);
  const Issue& i = issue_ref(issue_id);
  if (i.status == IssueStatus::resolved) return i;
  commit("issue_resolved", time, {{"issue_id", issue_id}, {"user", user}});
  return issues_.at(issue_id);
}

// ---------------------------------------------------------------------------
// workspace: queries

std::shared_ptr<const Assembly> Workspace::assembly(const std::string& ref) const {
  std::shared_lock lock(mutex_);
  assembly_ref(ref);
  return assemblies_.at(ref);
}

bool Workspace::has_assembly(const std::string& ref) const {
  std::shared_lock lock(mutex_);
  return assemblies_.contains(ref);
}

json Workspace::assembly_source(const std::string& ref) const {
  std::shared_lock lock(mutex_);
  assembly_ref(ref);
  return assembly_sources_.at(ref);
}

Scene Workspace::scene(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return scene_ref(id);
}

Issue Workspace::issue(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return issue_ref(id);
}

TimelineElement Workspace::element(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return element_ref(id);
}

std::vector<TimelineElement> Workspace::timeline(const std::string& issue_id) const {
  std::shared_lock lock(mutex_);
  std::vector<TimelineElement> out;
  for (const auto& id : issue_ref(issue_id).timeline) out.push_back(elements_.at(id));
  return out;
}

std::vector<IssueSummary> Workspace::issues_in_scene(const std::string& scene_id) const {
  std::shared_lock lock(mutex_);
  scene_ref(scene_id);
  std::vector<IssueSummary> out;
  for (const auto& [id, i] : issues_) {
    if (i.scene_id == scene_id) out.push_back({i.issue_id, i.scene_id, i.title, i.status, i.resolved_at, i.part_index});
  }
  return out;
}

PartQuery Workspace::query_by_part(const std::string& ref, const std::string& part_id) const {
  std::shared_lock lock(mutex_);
  const Assembly& asm_ = assembly_ref(ref);
  if (!asm_.has_part(part_id)) fail(ErrorKind::not_found, "unknown part '" + part_id + "'");
  std::set<std::string> related;
  for (auto& a : asm_.ancestors(part_id)) related.insert(std::move(a));
  for (auto& d : asm_.subtree(part_id)) related.insert(std::move(d));

  std::vector<const Issue*> hits;
  for (const auto& [id, i] : issues_) {
    if (i.assembly_ref != ref || i.status != IssueStatus::resolved) continue;
    if (std::any_of(i.part_index.begin(), i.part_index.end(), [&](const auto& p) { return related.contains(p); })) {
      hits.push_back(&i);
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Issue* a, const Issue* b) { return a->resolved_seq > b->resolved_seq; });

  PartQuery out;
  out.docs = docs_for_part(asm_, part_id);
  for (const Issue* i : hits) out.issues.push_back({i->issue_id, i->scene_id, i->title, i->status, i->resolved_at, i->part_index});
  return out;
}

std::vector<PlacedGesture> Workspace::recontextualize_issue(const std::string& issue_id, const std::string& scene_id) const {
  std::shared_lock lock(mutex_);
  const Issue& i = issue_ref(issue_id);
  const Scene& target = scene_ref(scene_id);
  if (i.assembly_ref != target.assembly_ref) {
    fail(ErrorKind::incompatible, "issue '" + issue_id + "' belongs to assembly " + i.assembly_ref + ", scene '" +
                                      scene_id + "' to " + target.assembly_ref);
  }
  const Assembly& asm_ = assembly_ref(target.assembly_ref);
  const JointValues joints = target.current_joints(asm_);

  std::vector<PlacedGesture> out;
  for (const auto& id : i.timeline) {
    const TimelineElement& el = elements_.at(id);
    if (!el.gesture) continue;
    PlacedGesture p;
    p.element_id = el.element_id;
    p.sequence = el.sequence;
    p.gesture = *el.gesture;
    p.part_pose = part_world_transform(asm_, el.gesture->anchor_part, joints);
    if (el.gesture->anchor_point) p.world_point = p.part_pose * *el.gesture->anchor_point;
    if (el.gesture->move_target) p.world_target = p.part_pose * *el.gesture->move_target;
    out.push_back(std::move(p));
  }
  return out;
}

std::int64_t Workspace::last_seq() const {
  std::shared_lock lock(mutex_);
  return seq_;
}

}  // namespace hwscene
