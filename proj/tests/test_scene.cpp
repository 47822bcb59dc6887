#include "fixtures.hpp"

#include "hwscene/error.hpp"
#include "hwscene/scene.hpp"

#include <doctest.h>

#include <mutex>
#include <thread>

using namespace hwscene;

namespace {

std::shared_ptr<const Assembly> rig() {
  static const auto a = [] {
    const SynthRig r = make_synthetic_rig();
    return std::make_shared<const Assembly>(load_assembly(r.glb, r.manifest.dump()));
  }();
  return a;
}

std::shared_ptr<const Assembly> other_rig() {
  static const auto a = [] {
    SynthRig r = make_synthetic_rig();
    r.manifest["docs"][0]["title"] = "Another rig";
    return std::make_shared<const Assembly>(load_assembly(r.glb, r.manifest.dump()));
  }();
  return a;
}

Gesture pointing(const std::string& part, const Eigen::Vector3d& p = {1, 2, 3}) {
  Gesture g;
  g.kind = GestureKind::pointing;
  g.anchor_part = part;
  g.anchor_point = p;
  return g;
}

Gesture request(RequestKind k, const std::string& part = "nozzle") {
  Gesture g;
  g.kind = GestureKind::request;
  g.anchor_part = part;
  g.request_kind = k;
  return g;
}

Gesture move(const std::string& part, const Rigid3d& target) {
  Gesture g;
  g.kind = GestureKind::move;
  g.anchor_part = part;
  g.move_target = target;
  return g;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::io;
}

/// Workspace that records every emitted event.
struct Recorded {
  std::vector<Event> events;
  std::mutex m;
  Workspace ws{[this](const Event& e) {
    std::lock_guard lock(m);
    events.push_back(e);
  }};
  std::string asm_ref;
  Recorded() { asm_ref = ws.add_assembly(rig(), {{"glb", "g"}, {"manifest", "m"}}, 1); }
};

SplatEntry splat_with(const JointValues& joints, const std::string& ref) {
  SplatEntry s;
  s.splat_ref = ref;
  s.bundle_ref = "bundle-" + ref;
  s.joint_values = joints;
  return s;
}

AssemblyLoader loader_for(std::vector<std::shared_ptr<const Assembly>> known) {
  return [known](const json& data) -> std::shared_ptr<const Assembly> {
    for (const auto& a : known) {
      if (a->content_hash == data.at("ref").get<std::string>()) return a;
    }
    throw Error(ErrorKind::not_found, "test", "no such assembly");
  };
}

}  // namespace

TEST_CASE("gesture validation") {
  const Assembly& a = *rig();
  CHECK(validate_gesture(pointing("nozzle"), a).empty());
  CHECK(validate_gesture(request(RequestKind::video), a).empty());

  Gesture act = pointing("fitting");
  act.kind = GestureKind::action;
  act.action_kind = ActionKind::tighten;
  CHECK(validate_gesture(act, a).empty());

  CHECK(kind_of([&] { validate_gesture(pointing("ghost"), a); }) == ErrorKind::validation);
  Gesture no_point = pointing("nozzle");
  no_point.anchor_point.reset();
  CHECK(kind_of([&] { validate_gesture(no_point, a); }) == ErrorKind::validation);
  Gesture extra = pointing("nozzle");
  extra.request_kind = RequestKind::splat;
  CHECK(kind_of([&] { validate_gesture(extra, a); }) == ErrorKind::validation);
  Gesture missing_action = act;
  missing_action.action_kind.reset();
  CHECK(kind_of([&] { validate_gesture(missing_action, a); }) == ErrorKind::validation);

  Rigid3d skew = Rigid3d::Identity();
  skew.linear() << 1, 0.5, 0, 0, 1, 0, 0, 0, 1;
  CHECK(kind_of([&] { validate_gesture(move("carriage", skew), a); }) == ErrorKind::validation);
}

TEST_CASE("move targets beyond joint limits warn but are accepted") {
  const Assembly& a = *rig();
  CHECK(validate_gesture(move("carriage", Rigid3d(Eigen::Translation3d(100, 0, 0))), a).empty());
  const auto w = validate_gesture(move("carriage", Rigid3d(Eigen::Translation3d(400, 0, 0))), a);
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("carriage_x") != std::string::npos);
}

TEST_CASE("gesture JSON round trip") {
  Gesture m = move("rotor", Rigid3d(Eigen::AngleAxisd(0.5, Eigen::Vector3d::UnitZ())));
  m.text = "turn this";
  for (const Gesture& g : {pointing("nozzle"), request(RequestKind::splat), m}) {
    CHECK(to_json(gesture_from_json(to_json(g))) == to_json(g));
  }
  CHECK(kind_of([] { gesture_from_json({{"kind", "wave"}, {"anchor_part", "nozzle"}}); }) == ErrorKind::validation);
}

TEST_CASE("timeline sequence numbers and messages") {
  Recorded r;
  const Scene s = r.ws.create_scene(r.asm_ref, "alice", 2);
  CHECK(s.pending_capture());
  const Issue i = r.ws.open_issue(s.scene_id, "Nozzle clogged", "alice", 3);
  const auto e1 = r.ws.author_gesture(i.issue_id, "bob", pointing("nozzle"), "", 4);
  const auto e2 = r.ws.author_gesture(i.issue_id, "alice", std::nullopt, "Which side?", 5);
  CHECK(e1.sequence == 1);
  CHECK(e2.sequence == 2);
  CHECK_FALSE(e2.gesture);
  CHECK(kind_of([&] { r.ws.author_gesture(i.issue_id, "alice", std::nullopt, "", 6); }) == ErrorKind::validation);
  CHECK(kind_of([&] { r.ws.open_issue(s.scene_id, "", "alice", 6); }) == ErrorKind::validation);
  CHECK(kind_of([&] { r.ws.open_issue("scene-99", "x", "alice", 6); }) == ErrorKind::not_found);

  const auto replied = r.ws.reply(e1.element_id, "carol", "Left side", 7);
  REQUIRE(replied.replies.size() == 1);
  CHECK(replied.replies[0].user_id == "carol");
  CHECK(r.ws.timeline(i.issue_id).size() == 2);
}

TEST_CASE("optimistic version check") {
  Recorded r;
  const Issue i = r.ws.open_issue(r.ws.create_scene(r.asm_ref, "a", 1).scene_id, "t", "a", 1);
  r.ws.author_gesture(i.issue_id, "a", pointing("nozzle"), "", 2, i.version);
  CHECK(kind_of([&] { r.ws.author_gesture(i.issue_id, "a", pointing("nozzle"), "", 3, i.version); }) ==
        ErrorKind::conflict);
}

TEST_CASE("concurrent authors get distinct consecutive sequence numbers") {
  Recorded r;
  const Issue i = r.ws.open_issue(r.ws.create_scene(r.asm_ref, "a", 1).scene_id, "t", "a", 1);
  std::vector<std::int64_t> seqs(64);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int k = 0; k < 8; ++k) {
        seqs[static_cast<std::size_t>(t * 8 + k)] =
            r.ws.author_gesture(i.issue_id, "user" + std::to_string(t), pointing("pump"), "", 2).sequence;
      }
    });
  }
  for (auto& t : threads) t.join();
  std::sort(seqs.begin(), seqs.end());
  for (std::size_t k = 0; k < seqs.size(); ++k) CHECK(seqs[k] == static_cast<std::int64_t>(k + 1));
  for (std::size_t k = 1; k < r.events.size(); ++k) CHECK(r.events[k].seq == r.events[k - 1].seq + 1);
}

TEST_CASE("request fulfillment") {
  Recorded r;
  const Scene s = r.ws.create_scene(r.asm_ref, "a", 1);
  const Issue i = r.ws.open_issue(s.scene_id, "t", "a", 1);
  const auto req = r.ws.author_gesture(i.issue_id, "a", request(RequestKind::splat), "", 2);
  const auto pt = r.ws.author_gesture(i.issue_id, "a", pointing("nozzle"), "", 2);

  CHECK(kind_of([&] { r.ws.check_fulfillable(pt.element_id, RequestKind::splat); }) == ErrorKind::validation);
  CHECK(kind_of([&] { r.ws.check_fulfillable(req.element_id, RequestKind::video); }) == ErrorKind::validation);

  Artifact failed;
  failed.failure = "no tags detected";
  failed.bundle_ref = "blob-1";
  const auto f1 = r.ws.fulfill_request(req.element_id, failed, 3);
  REQUIRE(f1.fulfillment);
  CHECK(f1.fulfillment->status == FulfillmentStatus::fulfilled_with_errors);
  CHECK(f1.fulfillment->artifact_ref == "blob-1");

  Artifact ok;
  ok.splat = splat_with({}, "splat-1");
  const auto f2 = r.ws.fulfill_request(req.element_id, ok, 4);
  CHECK(f2.fulfillment->status == FulfillmentStatus::fulfilled);
  CHECK(f2.fulfillment->artifact_ref == "splat-1");
  CHECK(kind_of([&] { r.ws.fulfill_request(req.element_id, ok, 5); }) == ErrorKind::conflict);
}

TEST_CASE("part index follows the gestures and resolution is idempotent") {
  Recorded r;
  const Scene s = r.ws.create_scene(r.asm_ref, "a", 1);
  const Issue i = r.ws.open_issue(s.scene_id, "Leak", "a", 1);
  r.ws.author_gesture(i.issue_id, "a", pointing("fitting"), "", 2);
  r.ws.author_gesture(i.issue_id, "a", std::nullopt, "hm", 3);
  r.ws.author_gesture(i.issue_id, "a", request(RequestKind::video, "pump"), "", 4);
  r.ws.author_gesture(i.issue_id, "a", pointing("fitting", {0, 0, 0}), "", 5);
  CHECK(r.ws.issue(i.issue_id).part_index.empty());

  const Issue done = r.ws.resolve_issue(i.issue_id, "a", 6);
  CHECK(done.status == IssueStatus::resolved);
  CHECK(done.part_index == std::set<std::string>{"fitting", "pump"});
  CHECK(done.part_index == referenced_parts(r.ws.timeline(i.issue_id)));
  const auto events = r.events.size();
  const Issue again = r.ws.resolve_issue(i.issue_id, "a", 7);
  CHECK(r.events.size() == events);
  CHECK(again.resolved_at == done.resolved_at);
  CHECK(kind_of([&] { r.ws.author_gesture(i.issue_id, "a", pointing("pump"), "", 8); }) == ErrorKind::conflict);
}

TEST_CASE("an issue with only messages indexes no parts") {
  Recorded r;
  const Issue i = r.ws.open_issue(r.ws.create_scene(r.asm_ref, "a", 1).scene_id, "t", "a", 1);
  r.ws.author_gesture(i.issue_id, "a", std::nullopt, "just talking", 2);
  CHECK(r.ws.resolve_issue(i.issue_id, "a", 3).part_index.empty());
}

TEST_CASE("query by part") {
  Recorded r;
  const Scene s = r.ws.create_scene(r.asm_ref, "a", 1);
  auto resolved_issue = [&](const std::string& title, const std::string& part, std::int64_t t) {
    const Issue i = r.ws.open_issue(s.scene_id, title, "a", t);
    r.ws.author_gesture(i.issue_id, "a", pointing(part), "", t);
    r.ws.resolve_issue(i.issue_id, "a", t);
    return i.issue_id;
  };
  const auto none = r.ws.query_by_part(r.asm_ref, "rotor");
  CHECK(none.issues.empty());

  const std::string first = resolved_issue("Loose fitting", "fitting", 10);
  const std::string second = resolved_issue("Clog", "nozzle", 20);
  resolved_issue("Pump noise", "pump", 30);
  const Issue open = r.ws.open_issue(s.scene_id, "Open nozzle issue", "a", 40);
  r.ws.author_gesture(open.issue_id, "a", pointing("nozzle"), "", 40);

  const auto nozzle = r.ws.query_by_part(r.asm_ref, "nozzle");
  REQUIRE(nozzle.issues.size() == 2);
  CHECK(nozzle.issues[0].issue_id == second);
  CHECK(nozzle.issues[1].issue_id == first);
  CHECK(nozzle.docs.size() == 2);

  const auto rotor = r.ws.query_by_part(r.asm_ref, "rotor");
  CHECK(rotor.issues.empty());
  CHECK(r.ws.query_by_part(r.asm_ref, "frame").issues.size() == 3);
  CHECK(kind_of([&] { r.ws.query_by_part(r.asm_ref, "ghost"); }) == ErrorKind::not_found);
}

TEST_CASE("recontextualization") {
  Recorded r;
  const Scene src = r.ws.create_scene(r.asm_ref, "a", 1);
  r.ws.add_splat(src.scene_id, splat_with({{"carriage_x", 0}, {"rotor_z", 0}}, "s1"), 2);
  const Issue i = r.ws.open_issue(src.scene_id, "Clog", "a", 3);
  const Eigen::Vector3d anchor(1.5, 2.25, -0.125);
  r.ws.author_gesture(i.issue_id, "a", pointing("nozzle", anchor), "", 4);
  const Rigid3d spin(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()));
  r.ws.author_gesture(i.issue_id, "a", move("rotor", spin), "", 5);

  const auto same = r.ws.recontextualize_issue(i.issue_id, src.scene_id);
  REQUIRE(same.size() == 2);
  const Rigid3d nozzle0 = rig()->zero_pose.at("nozzle");
  CHECK((*same[0].world_point - nozzle0 * anchor).norm() < 1e-12);

  const Scene moved = r.ws.create_scene(r.asm_ref, "b", 6);
  r.ws.add_splat(moved.scene_id, splat_with({{"carriage_x", 42}, {"rotor_z", 0}}, "s2"), 7);
  const auto placed = r.ws.recontextualize_issue(i.issue_id, moved.scene_id);
  REQUIRE(placed.size() == 2);
  const Eigen::Vector3d axis = rig()->find_dof("carriage_x")->axis;
  CHECK((*placed[0].world_point - (*same[0].world_point + 42 * axis)).norm() < 1e-9);
  CHECK(*placed[0].gesture.anchor_point == anchor);
  CHECK(placed[0].gesture.anchor_point->x() == anchor.x());
  CHECK((placed[1].world_target->matrix() - same[1].world_target->matrix()).cwiseAbs().maxCoeff() < 1e-12);

  const Scene pending = r.ws.create_scene(r.asm_ref, "c", 8);
  CHECK((*r.ws.recontextualize_issue(i.issue_id, pending.scene_id)[0].world_point - nozzle0 * anchor).norm() < 1e-12);

  const std::string other = r.ws.add_assembly(other_rig(), {}, 9);
  const Scene foreign = r.ws.create_scene(other, "d", 9);
  CHECK(kind_of([&] { r.ws.recontextualize_issue(i.issue_id, foreign.scene_id); }) == ErrorKind::incompatible);
}

TEST_CASE("captures are idempotent per bundle") {
  Recorded r;
  const Scene s = r.ws.create_scene(r.asm_ref, "a", 1);
  r.ws.add_splat(s.scene_id, splat_with({}, "x"), 2);
  const auto events = r.events.size();
  CHECK(r.ws.add_splat(s.scene_id, splat_with({}, "x"), 3).splats.size() == 1);
  CHECK(r.events.size() == events);
  CHECK(r.ws.add_assembly(rig(), {}, 4) == r.asm_ref);
  CHECK(r.events.size() == events);
}

TEST_CASE("replaying the event log reproduces the state") {
  Recorded r;
  const Scene s = r.ws.create_scene(r.asm_ref, "a", 1);
  r.ws.add_splat(s.scene_id, splat_with({{"carriage_x", 10}}, "s1"), 2);
  const Issue i = r.ws.open_issue(s.scene_id, "Leak", "a", 3);
  const auto req = r.ws.author_gesture(i.issue_id, "a", request(RequestKind::splat), "", 4);
  r.ws.author_gesture(i.issue_id, "b", pointing("fitting"), "", 5);
  r.ws.reply(req.element_id, "b", "on it", 6);
  Artifact ok;
  ok.splat = splat_with({{"carriage_x", 20}}, "s2");
  r.ws.fulfill_request(req.element_id, ok, 7);
  r.ws.resolve_issue(i.issue_id, "a", 8);

  // Events survive a JSON round trip, as they do through the store.
  std::vector<Event> log;
  for (const auto& e : r.events) log.push_back(event_from_json(json::parse(to_json(e).dump())));
  Workspace copy;
  copy.replay(log, loader_for({rig()}));

  CHECK(copy.last_seq() == r.ws.last_seq());
  CHECK(to_json(copy.scene(s.scene_id)) == to_json(r.ws.scene(s.scene_id)));
  CHECK(to_json(copy.issue(i.issue_id)) == to_json(r.ws.issue(i.issue_id)));
  for (const auto& e : r.ws.timeline(i.issue_id)) CHECK(to_json(copy.element(e.element_id)) == to_json(e));
  CHECK(to_json(copy.query_by_part(r.asm_ref, "fitting")) == to_json(r.ws.query_by_part(r.asm_ref, "fitting")));

  // Identifiers continue where the log left off.
  const Issue next = copy.open_issue(s.scene_id, "Next", "a", 9);
  CHECK(next.issue_id != i.issue_id);
  CHECK(copy.last_seq() == r.ws.last_seq() + 1);
}

TEST_CASE("a failing sink leaves the state unchanged") {
  bool fail_next = false;
  Workspace ws([&](const Event&) {
    if (fail_next) throw Error(ErrorKind::io, "test", "disk full");
  });
  const std::string ref = ws.add_assembly(rig(), {}, 1);
  const Scene s = ws.create_scene(ref, "a", 1);
  fail_next = true;
  CHECK(kind_of([&] { ws.open_issue(s.scene_id, "t", "a", 2); }) == ErrorKind::io);
  fail_next = false;
  CHECK(ws.issues_in_scene(s.scene_id).empty());
  CHECK(ws.last_seq() == 2);
}
