#include "fixtures.hpp"
#include "oracles.hpp"

#include "hwscene/error.hpp"
#include "hwscene/registration.hpp"
#include "hwscene/synth.hpp"

#include <doctest.h>

#include <numbers>

using namespace hwscene;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::io;
}

Points3d random_points(std::mt19937_64& rng, int n, double extent) {
  Points3d p;
  for (int i = 0; i < n; ++i) p.push_back(fixture::uniform_vec(rng, -extent, extent));
  return p;
}

const SynthResult& noiseless() {
  static const SynthResult r = [] {
    SynthOptions o;
    o.seed = 3;
    return synthesize(o);
  }();
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Arun

TEST_CASE("Arun: identical point sets give the identity") {
  std::mt19937_64 rng(30);
  const Points3d p = random_points(rng, 8, 1);
  const auto fit = fit_rigid_arun(p, p);
  CHECK((fit.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(fit.translation.norm() < 1e-12);
  CHECK(fit.rms < 1e-12);
}

TEST_CASE("Arun: half turn about z") {
  const Points3d src{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  const Points3d dst{{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}, {-1, -1, 1}};
  const auto fit = fit_rigid_arun(src, dst);
  CHECK((fit.rotation - Eigen::Vector3d(-1, -1, 1).asDiagonal().toDenseMatrix()).norm() < 1e-12);
}

TEST_CASE("Arun: random rigid motions are recovered") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Points3d src = random_points(rng, 8, 1);
    const Eigen::Matrix3d r = random_rotation(rng);
    const Eigen::Vector3d t = fixture::uniform_vec(rng, -10, 10);
    Points3d dst;
    for (const auto& p : src) dst.push_back(r * p + t);
    const auto fit = fit_rigid_arun(src, dst);
    CHECK((fit.rotation - r).norm() < 1e-9);
    CHECK((fit.translation - t).norm() < 1e-9);
    CHECK(fit.rotation.determinant() > 0);
  }
}

TEST_CASE("Arun: reflections never appear, even for planar and noisy sets") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    Points3d src = random_points(rng, 5, 1);
    if (trial % 2 == 0) {
      for (auto& p : src) p.z() = 0;
    }
    Points3d dst;
    for (const auto& p : src) dst.push_back(fixture::uniform_vec(rng, -1, 1));
    const auto fit = fit_rigid_arun(src, dst);
    CHECK(std::abs(fit.rotation.determinant() - 1) < 1e-9);
    CHECK((fit.rotation.transpose() * fit.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("Arun: templated on the scalar type") {
  Eigen::Matrix<float, 3, 4> src;
  src << 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  const Eigen::Matrix3f r = Eigen::AngleAxisf(0.4f, Eigen::Vector3f::UnitX()).toRotationMatrix();
  const Eigen::Matrix<float, 3, 4> dst = r * src;
  const auto fit = fit_rigid_arun(src, dst);
  CHECK((fit.rotation - r).norm() < 1e-5f);
}

TEST_CASE("Arun: degenerate input") {
  CHECK(kind_of([] { fit_rigid_arun(Points3d{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}, Points3d{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}); }) ==
        ErrorKind::degenerate);
  CHECK(kind_of([] { fit_rigid_arun(Points3d{{0, 0, 0}, {1, 0, 0}}, Points3d{{0, 0, 0}, {1, 0, 0}}); }) ==
        ErrorKind::validation);
}

// ---------------------------------------------------------------------------
// triangulation

TEST_CASE("triangulation from two orthogonal cameras") {
  const auto cam = CameraIntrinsics::from_colmap_params(1, CameraModel::pinhole, 1000, 1000, {800, 800, 500, 500});
  const ImagePose a = look_at({0, 0, -5}, {0, 0, 0});
  const ImagePose b = look_at({5, 0, 0}, {0, 0, 0});
  const Eigen::Vector3d x(0.1, 0.2, 0.3);
  const std::array<PointView, 2> views{PointView{&a, &cam, oracle::project(x, a, cam)},
                                       PointView{&b, &cam, oracle::project(x, b, cam)}};
  const TriangulatedPoint t = triangulate_point(views);
  CHECK((t.position - x).norm() < 1e-9);
  for (double e : t.squared_errors) CHECK(e < 1e-18);

  // A point on both principal rays sits at their intersection.
  const std::array<PointView, 2> centre{PointView{&a, &cam, {500, 500}}, PointView{&b, &cam, {500, 500}}};
  CHECK(triangulate_point(centre).position.norm() < 1e-9);
}

TEST_CASE("triangulation preconditions") {
  const auto cam = CameraIntrinsics::from_colmap_params(1, CameraModel::pinhole, 1000, 1000, {800, 800, 500, 500});
  const ImagePose a = look_at({0, 0, -5}, {0, 0, 0});
  const ImagePose b = look_at({0.001, 0, -5}, {0, 0, 0});
  const std::array<PointView, 1> one{PointView{&a, &cam, {500, 500}}};
  CHECK(kind_of([&] { triangulate_point(one); }) == ErrorKind::insufficient_views);
  const std::array<PointView, 2> narrow{PointView{&a, &cam, {500, 500}}, PointView{&b, &cam, {500, 500}}};
  CHECK(kind_of([&] { triangulate_point(narrow); }) == ErrorKind::degenerate);
}

TEST_CASE("tag corners triangulate from the synthetic capture") {
  const SynthResult& r = noiseless();
  const auto obs = bind_detections(r.model, r.detections);
  const SimilarityTransformd inv = r.truth.inverse();
  for (const auto& tag : r.assembly.tags) {
    const TriangulatedTag t = triangulate_tag_corners(r.model, obs, tag.tag_id);
    const auto corners = tag_corners_at(r.assembly, tag, r.options.joints);
    for (int c = 0; c < 4; ++c) CHECK((t.corners_sfm[c] - inv(corners[c])).norm() * r.truth.scale < 1e-6);
    CHECK(t.rms_reprojection < 1e-6);
    CHECK(t.n_views >= 2);
  }
  CHECK(kind_of([&] { triangulate_tag_corners(r.model, obs, 99); }) == ErrorKind::insufficient_views);
}

// ---------------------------------------------------------------------------
// scale and alignment

TEST_CASE("estimate_scale from side lengths") {
  TagAnchor anchor;
  anchor.tag_id = 1;
  anchor.side_length = 20;
  anchor.corners_cad = {Eigen::Vector3d(0, 0, 0), {20, 0, 0}, {20, 20, 0}, {0, 20, 0}};
  TriangulatedTag tri;
  tri.tag_id = 1;
  tri.corners_sfm = {Eigen::Vector3d(0, 0, 0), {0.05, 0, 0}, {0.05, 0.05, 0}, {0, 0.05, 0}};
  CHECK(estimate_scale(std::span(&tri, 1), std::span(&anchor, 1)) == doctest::Approx(400.0).epsilon(1e-12));
  tri.corners_sfm = anchor.corners_cad;
  CHECK(estimate_scale(std::span(&tri, 1), std::span(&anchor, 1)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimate_scale is invariant to rigid motion of the model") {
  const SynthResult& r = noiseless();
  const auto obs = bind_detections(r.model, r.detections);
  std::mt19937_64 rng(33);
  SimilarityTransformd g;
  g.rotation = random_rotation(rng);
  g.translation = fixture::uniform_vec(rng, -3, 3);
  const SfmModel moved = transform_sfm_model(r.model, g);
  std::vector<TriangulatedTag> a, b;
  std::vector<TagAnchor> anchors;
  for (int id : {1, 2, 3}) {
    a.push_back(triangulate_tag_corners(r.model, obs, id));
    b.push_back(triangulate_tag_corners(moved, obs, id));
    anchors.push_back(*r.assembly.find_tag(id));
  }
  CHECK(estimate_scale(a, anchors) == doctest::Approx(estimate_scale(b, anchors)).epsilon(1e-9));
}

TEST_CASE("estimate_scale with noisy corners stays within 1%") {
  SynthOptions o;
  o.seed = 34;
  o.noise_px = 0.5;
  const SynthResult r = synthesize(o);
  const auto obs = bind_detections(r.model, r.detections);
  std::vector<TriangulatedTag> tags;
  std::vector<TagAnchor> anchors;
  for (int id : {1, 2}) {
    tags.push_back(triangulate_tag_corners(r.model, obs, id));
    anchors.push_back(*r.assembly.find_tag(id));
  }
  CHECK(std::abs(estimate_scale(tags, anchors) / r.truth.scale - 1) < 0.01);
}

TEST_CASE("alignment recovers the generator similarity") {
  const SynthResult& r = noiseless();
  const Alignment a = align_splat_to_cad(r.model, bind_detections(r.model, r.detections), r.assembly);
  CHECK(std::abs(a.transform.scale / r.truth.scale - 1) < 1e-6);
  CHECK(rotation_angle_between(a.transform.rotation, r.truth.rotation) < 1e-6);
  CHECK((a.transform.translation - r.truth.translation).norm() < 1e-3);
  CHECK(a.rms_mm < 1e-6);
  CHECK_FALSE(a.warning);
}

TEST_CASE("alignment of a model already in CAD space is the identity") {
  SynthOptions o;
  o.identity = true;
  const SynthResult r = synthesize(o);
  const Alignment a = align_splat_to_cad(r.model, bind_detections(r.model, r.detections), r.assembly);
  CHECK(std::abs(a.transform.scale - 1) < 1e-9);
  CHECK((a.transform.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  CHECK(a.transform.translation.norm() < 1e-9);
}

TEST_CASE("alignment is equivariant under a similarity of the model") {
  const SynthResult& r = noiseless();
  const auto obs = bind_detections(r.model, r.detections);
  const Alignment base = align_splat_to_cad(r.model, obs, r.assembly);
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 3; ++trial) {
    SimilarityTransformd g;
    g.scale = fixture::uniform(rng, 0.2, 5);
    g.rotation = random_rotation(rng);
    g.translation = fixture::uniform_vec(rng, -10, 10);
    const Alignment moved = align_splat_to_cad(transform_sfm_model(r.model, g), obs, r.assembly);
    const SimilarityTransformd expected = base.transform * g.inverse();
    CHECK(std::abs(moved.transform.scale / expected.scale - 1) < 1e-6);
    CHECK(rotation_angle_between(moved.transform.rotation, expected.rotation) < 1e-6);
    CHECK((moved.transform.translation - expected.translation).norm() < 1e-6 * std::max(1.0, expected.translation.norm()));
  }
}

TEST_CASE("grounding tags seen in a single frame cannot anchor the alignment") {
  const SynthResult& r = noiseless();
  auto obs = bind_detections(r.model, r.detections);
  std::map<int, int> seen;
  std::erase_if(obs, [&](const TagObservation& o) { return o.tag_id < 10 && ++seen[o.tag_id] > 1; });
  CHECK(kind_of([&] { align_splat_to_cad(r.model, obs, r.assembly); }) == ErrorKind::insufficient_views);
}

TEST_CASE("one under-observed grounding tag is skipped") {
  const SynthResult& r = noiseless();
  auto obs = bind_detections(r.model, r.detections);
  int seen = 0;
  std::erase_if(obs, [&](const TagObservation& o) { return o.tag_id == 3 && ++seen > 1; });
  const Alignment a = align_splat_to_cad(r.model, obs, r.assembly);
  CHECK(a.grounding_tags.size() == 2);
  CHECK(std::abs(a.transform.scale / r.truth.scale - 1) < 1e-6);
}

TEST_CASE("noisy alignment reports rms and warns past the threshold") {
  SynthOptions o;
  o.seed = 36;
  o.noise_px = 0.5;
  const SynthResult r = synthesize(o);
  const auto obs = bind_detections(r.model, r.detections);
  const Alignment a = align_splat_to_cad(r.model, obs, r.assembly);
  CHECK(a.rms_mm > 0);
  CHECK(a.rms_mm <= 5.0);
  AlignmentOptions strict;
  strict.rms_threshold_mm = a.rms_mm / 2;
  CHECK(align_splat_to_cad(r.model, obs, r.assembly, strict).warning);
}

// ---------------------------------------------------------------------------
// constraints

TEST_CASE("joint from constraint tag centre") {
  const SynthResult& r = noiseless();
  const DofSpec& slide = *r.assembly.find_dof("carriage_x");
  const DofSpec& spin = *r.assembly.find_dof("rotor_z");
  const JointEstimate zero = joint_from_tag_center(slide, slide.nominal_tag_center);
  CHECK(zero.value == 0);
  CHECK(zero.residual == 0);
  const JointEstimate d42 = joint_from_tag_center(slide, slide.nominal_tag_center + 42 * slide.axis);
  CHECK(d42.value == doctest::Approx(42).epsilon(1e-12));
  CHECK(d42.residual < 1e-9);

  const double theta = 30 * std::numbers::pi / 180;
  const Eigen::Vector3d observed = spin.motion(theta) * spin.nominal_tag_center;
  const JointEstimate rot = joint_from_tag_center(spin, observed);
  CHECK(std::abs(rot.value - theta) < 1e-6);
  CHECK(rot.residual < 1e-6);
  const double sweep = oracle::sweep_joint(spin, observed, 0.01 * std::numbers::pi / 180);
  CHECK(std::abs(rot.value - sweep) <= 0.005 * std::numbers::pi / 180 + 1e-12);

  DofSpec bad = spin;
  bad.nominal_tag_center = spin.origin + Eigen::Vector3d(0, 0, 10);
  CHECK(kind_of([&] { joint_from_tag_center(bad, bad.nominal_tag_center); }) == ErrorKind::degenerate);
}

TEST_CASE("constraints resolve from the synthetic capture") {
  const SynthResult& r = noiseless();
  const auto obs = bind_detections(r.model, r.detections);
  const auto estimates = resolve_constraints(r.model, obs, r.assembly, r.truth);
  REQUIRE(estimates.size() == 2);
  const JointValues values = joint_values_from(estimates);
  CHECK(std::abs(values.at("carriage_x") - 42) < 1e-6);
  CHECK(std::abs(values.at("rotor_z") - 30 * std::numbers::pi / 180) < 1e-6);
  for (const auto& e : estimates) CHECK(e.residual < 1e-6);
}

TEST_CASE("constraint tags without views stay unresolved") {
  const SynthResult& r = noiseless();
  auto obs = bind_detections(r.model, r.detections);
  std::erase_if(obs, [](const TagObservation& o) { return o.tag_id == 11; });
  const auto estimates = resolve_constraints(r.model, obs, r.assembly, r.truth);
  CHECK(estimates[1].status == JointStatus::unresolved);
  CHECK_FALSE(estimates[1].message.empty());
  CHECK(joint_values_from(estimates).size() == 1);
}

// ---------------------------------------------------------------------------
// localization

TEST_CASE("exact detections localize to the generator pose") {
  const SynthResult& r = noiseless();
  const auto frames = frames_from_detections(r.video_detections);
  REQUIRE(frames.size() == r.video_poses.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto res = localize_frame(frames[i].detections, r.assembly, r.video_camera, r.options.joints);
    const Eigen::Matrix3d rt = r.video_poses[i].rotation.toRotationMatrix();
    CHECK(rotation_angle_between(res.pose.rotation.toRotationMatrix(), rt) < 1e-6);
    CHECK((res.pose.translation - r.video_poses[i].translation).norm() < 1e-6);
  }
}

TEST_CASE("noisy detections localize within 1.5 px rms and LM never increases rms") {
  const SynthResult& r = noiseless();
  std::mt19937_64 rng(37);
  int localized = 0;
  for (int i = 0; i < 40; ++i) {
    const ImagePose pose = fixture::ring_camera(rng);
    const auto obs = fixture::observe_tags(r.assembly, r.options.joints, pose, r.video_camera, 0.5, rng);
    if (obs.size() < 2) continue;
    const auto res = localize_frame(obs, r.assembly, r.video_camera, r.options.joints);
    CHECK(res.rms <= 1.5);
    for (std::size_t k = 1; k < res.rms_history.size(); ++k) CHECK(res.rms_history[k] <= res.rms_history[k - 1]);
    ++localized;
  }
  CHECK(localized > 30);
}

TEST_CASE("localization preconditions") {
  const auto cam = CameraIntrinsics::from_colmap_params(1, CameraModel::pinhole, 1000, 1000, {800, 800, 500, 500});
  std::vector<Correspondence> three{{{0, 0, 0}, {1, 1}}, {{1, 0, 0}, {2, 1}}, {{0, 1, 0}, {1, 2}}};
  CHECK(kind_of([&] { localize_from_correspondences(three, cam); }) == ErrorKind::validation);
  std::vector<Correspondence> line;
  for (int i = 0; i < 6; ++i) line.push_back({{double(i), 0, 5}, {100.0 * i, 0}});
  CHECK(kind_of([&] { localize_from_correspondences(line, cam); }) == ErrorKind::degenerate);
}

TEST_CASE("video localization: gaps and empty input") {
  const SynthResult& r = noiseless();
  auto frames = frames_from_detections(r.video_detections);
  frames[frames.size() / 2].detections.clear();
  const auto out = localize_video(frames, r.assembly, r.video_camera, r.options.joints);
  REQUIRE(out.size() == frames.size());
  CHECK_FALSE(out[frames.size() / 2].result);
  CHECK_FALSE(out[frames.size() / 2].error.empty());
  CHECK(out[frames.size() / 2 - 1].result);
  CHECK(out[frames.size() / 2 + 1].result);
  CHECK(localize_video({}, r.assembly, r.video_camera, r.options.joints).empty());
}

// ---------------------------------------------------------------------------
// detection interchange

TEST_CASE("detections JSON round trip and binding") {
  const SynthResult& r = noiseless();
  const json j = detections_to_json(r.detections);
  const auto back = parse_detections(j.dump());
  REQUIRE(back.size() == r.detections.size());
  CHECK(detections_to_json(back) == j);
  const auto wrapped = parse_detections(json{{"images", j}}.dump());
  CHECK(wrapped.size() == back.size());
  std::vector<ImageDetections> extra = back;
  extra.push_back({"not_in_model.png", std::nullopt, back[0].detections});
  CHECK(bind_detections(r.model, extra).size() == bind_detections(r.model, back).size());
  CHECK_THROWS_AS(parse_detections(R"([{"image": "a", "detections": [{"tag_id": 1, "corners": [[0, 0]]}]}])"), Error);
}

TEST_CASE("pose and camera JSON round trip") {
  const SynthResult& r = noiseless();
  const ImagePose& p = r.video_poses[0];
  const ImagePose back = image_pose_from_json(to_json(p));
  CHECK((back.rotation.coeffs() - p.rotation.coeffs()).norm() < 1e-15);
  CHECK(back.translation == p.translation);
  CHECK(camera_from_json(to_json(r.video_camera)) == r.video_camera);
}
