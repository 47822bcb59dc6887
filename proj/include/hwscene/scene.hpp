#pragma once

#include "hwscene/assembly.hpp"
#include "hwscene/registration.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace hwscene {

enum class GestureKind { pointing, move, request, action };
enum class RequestKind { video, splat };
enum class ActionKind { tighten, loosen, probe };

/// An instruction anchored to a CAD part. Geometry is stored in the anchor
/// part's local frame so it can be replayed in any scene of the same hardware.
struct Gesture {
  GestureKind kind = GestureKind::pointing;
  std::string anchor_part;
  /// Pointing and action gestures.
  std::optional<Eigen::Vector3d> anchor_point;
  /// Move gestures: target pose of the part subtree, as a transform applied
  /// in the part frame (world target = T_part * move_target).
  std::optional<Rigid3d> move_target;
  std::optional<RequestKind> request_kind;
  std::optional<ActionKind> action_kind;
  std::string text;
};

/// Throws Error(validation) on missing or extra kind-specific fields or an
/// unknown anchor part. Returns warnings (move targets beyond joint limits).
std::vector<std::string> validate_gesture(const Gesture& g, const Assembly& asm_);

struct Reply {
  std::string user_id;
  std::int64_t time = 0;
  std::string text;
};

enum class FulfillmentStatus { fulfilled, fulfilled_with_errors };

struct Fulfillment {
  RequestKind kind = RequestKind::splat;
  FulfillmentStatus status = FulfillmentStatus::fulfilled;
  /// Content ref of the delivered splat or clip; the uploaded bundle when
  /// processing failed.
  std::string artifact_ref;
  std::string diagnostics;
  std::int64_t time = 0;
};

struct TimelineElement {
  std::string element_id;
  std::string issue_id;
  std::int64_t sequence = 0;
  std::string author;
  std::int64_t time = 0;
  /// Empty for plain messages.
  std::optional<Gesture> gesture;
  std::string text;
  std::vector<std::string> warnings;
  std::vector<Reply> replies;
  std::optional<Fulfillment> fulfillment;
};

enum class IssueStatus { open, resolved };

struct Issue {
  std::string issue_id;
  std::string scene_id;
  std::string assembly_ref;
  std::string title;
  std::string created_by;
  std::int64_t created_at = 0;
  IssueStatus status = IssueStatus::open;
  std::vector<std::string> timeline;
  std::set<std::string> part_index;
  std::int64_t resolved_at = 0;
  /// Event sequence of the resolution; orders query results.
  std::int64_t resolved_seq = 0;
  std::int64_t version = 0;
  std::int64_t next_sequence = 1;
};

struct SplatEntry {
  std::string splat_ref;
  std::string bundle_ref;
  SimilarityTransformd transform;
  double rms_mm = 0;
  std::optional<std::string> warning;
  std::int64_t capture_time = 0;
  JointValues joint_values;
  std::vector<JointEstimate> joints;
  std::size_t gaussians_total = 0;
  std::size_t gaussians_kept = 0;
};

struct LocalizedFrame {
  std::int64_t frame_index = 0;
  std::optional<ImagePose> pose;
  double rms = 0;
  std::string error;
};

struct VideoAnnotation {
  std::string clip_ref;
  std::string bundle_ref;
  CameraIntrinsics camera;
  std::vector<LocalizedFrame> frames;
  /// First localized frame; places the floating screen in the scene.
  std::optional<ImagePose> placement_pose;
  std::int64_t capture_time = 0;
};

struct Scene {
  std::string scene_id;
  std::string assembly_ref;
  std::string created_by;
  std::int64_t created_at = 0;
  std::vector<SplatEntry> splats;
  std::vector<VideoAnnotation> videos;
  std::int64_t version = 0;

  bool pending_capture() const { return splats.empty(); }
  /// Joint values of the latest splat, else the assembly defaults.
  JointValues current_joints(const Assembly& asm_) const;
};

struct IssueSummary {
  std::string issue_id;
  std::string scene_id;
  std::string title;
  IssueStatus status = IssueStatus::open;
  std::int64_t resolved_at = 0;
  std::set<std::string> part_index;
};

struct PartQuery {
  std::vector<DocLink> docs;
  std::vector<IssueSummary> issues;
};

/// A gesture placed in a target scene.
struct PlacedGesture {
  std::string element_id;
  std::int64_t sequence = 0;
  Gesture gesture;  // part-local geometry, unchanged
  Rigid3d part_pose = Rigid3d::Identity();
  std::optional<Eigen::Vector3d> world_point;
  std::optional<Rigid3d> world_target;
};

/// Result of processing a capture for a request element.
struct Artifact {
  RequestKind kind = RequestKind::splat;
  std::optional<SplatEntry> splat;
  std::optional<VideoAnnotation> video;
  /// Set when processing failed; the element is marked fulfilled-with-errors.
  std::optional<std::string> failure;
  std::string bundle_ref;
};

struct Event {
  std::int64_t seq = 0;
  std::string type;
  std::int64_t time = 0;
  json data;
};

/// Loads an assembly referenced by an `assembly_added` event during replay.
using AssemblyLoader = std::function<std::shared_ptr<const Assembly>(const json& event_data)>;

/// Event-sourced state of scenes, issues and timelines. Every command checks
/// its preconditions, hands the resulting event to the sink and then applies
/// it, so the sink sees events in apply order and a failing sink leaves the
/// state unchanged. Thread-safe; writes are serialized.
class Workspace {
 public:
  using Sink = std::function<void(const Event&)>;

  explicit Workspace(Sink sink = {}) : sink_(std::move(sink)) {}

  /// Rebuilds the state from a stored event log without re-emitting events.
  void replay(const std::vector<Event>& events, const AssemblyLoader& loader);

  // commands
  std::string add_assembly(std::shared_ptr<const Assembly> asm_, const json& source, std::int64_t time);
  Scene create_scene(const std::string& assembly_ref, const std::string& user, std::int64_t time);
  Scene add_splat(const std::string& scene_id, const SplatEntry& splat, std::int64_t time);
  Scene add_video(const std::string& scene_id, const VideoAnnotation& video, std::int64_t time);
  Issue open_issue(const std::string& scene_id, const std::string& title, const std::string& user, std::int64_t time);
  /// Gesture or (when `gesture` is empty) plain message.
  TimelineElement author_gesture(const std::string& issue_id, const std::string& user,
                                 const std::optional<Gesture>& gesture, const std::string& text, std::int64_t time,
                                 std::optional<std::int64_t> expected_version = std::nullopt);
  TimelineElement reply(const std::string& element_id, const std::string& user, const std::string& text,
                        std::int64_t time);
  /// Checks that `element_id` is a request that can take an artifact of `kind`.
  void check_fulfillable(const std::string& element_id, RequestKind kind) const;
  TimelineElement fulfill_request(const std::string& element_id, const Artifact& artifact, std::int64_t time);
  Issue resolve_issue(const std::string& issue_id, const std::string& user, std::int64_t time);

  // queries
  std::shared_ptr<const Assembly> assembly(const std::string& ref) const;
  bool has_assembly(const std::string& ref) const;
  /// Source data recorded with the assembly (blob refs of its files).
  json assembly_source(const std::string& ref) const;
  Scene scene(const std::string& id) const;
  Issue issue(const std::string& id) const;
  TimelineElement element(const std::string& id) const;
  std::vector<TimelineElement> timeline(const std::string& issue_id) const;
  std::vector<IssueSummary> issues_in_scene(const std::string& scene_id) const;
  PartQuery query_by_part(const std::string& assembly_ref, const std::string& part_id) const;
  std::vector<PlacedGesture> recontextualize_issue(const std::string& issue_id, const std::string& scene_id) const;
  std::int64_t last_seq() const;

 private:
  std::int64_t commit(const std::string& type, std::int64_t time, json data);
  void apply(const Event& e);
  void apply_assembly(const Event& e, std::shared_ptr<const Assembly> asm_);

  Scene& scene_mut(const std::string& id);
  Issue& issue_mut(const std::string& id);
  TimelineElement& element_mut(const std::string& id);
  const Scene& scene_ref(const std::string& id) const;
  const Issue& issue_ref(const std::string& id) const;
  const TimelineElement& element_ref(const std::string& id) const;
  const Assembly& assembly_ref(const std::string& ref) const;

  Sink sink_;
  mutable std::shared_mutex mutex_;
  std::int64_t seq_ = 0;
  std::int64_t scene_counter_ = 0, issue_counter_ = 0, element_counter_ = 0;
  std::map<std::string, std::shared_ptr<const Assembly>> assemblies_;
  std::map<std::string, json> assembly_sources_;
  std::map<std::string, Scene> scenes_;
  std::map<std::string, Issue> issues_;
  std::map<std::string, TimelineElement> elements_;
  const AssemblyLoader* loader_ = nullptr;
};

/// Parts referenced by gestures in the timeline (brute-force definition of
/// the part index).
std::set<std::string> referenced_parts(const std::vector<TimelineElement>& timeline);

std::string_view to_string(GestureKind k);
std::string_view to_string(RequestKind k);
std::string_view to_string(ActionKind k);
std::string_view to_string(IssueStatus s);
std::string_view to_string(FulfillmentStatus s);

json to_json(const Gesture& g);
Gesture gesture_from_json(const json& j);
json to_json(const TimelineElement& e);
TimelineElement element_from_json(const json& j);
json to_json(const Issue& issue);
Issue issue_from_json(const json& j);
json to_json(const SplatEntry& s);
SplatEntry splat_entry_from_json(const json& j);
json to_json(const VideoAnnotation& v);
VideoAnnotation video_from_json(const json& j);
json to_json(const Scene& s);
Scene scene_from_json(const json& j);
json to_json(const IssueSummary& s);
json to_json(const DocLink& d);
json to_json(const PartQuery& q);
json to_json(const PlacedGesture& p);
json to_json(const Event& e);
Event event_from_json(const json& j);

}  // namespace hwscene
