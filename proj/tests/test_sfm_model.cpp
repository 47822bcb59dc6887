#include "fixtures.hpp"
#include "oracles.hpp"

#include "hwscene/error.hpp"
#include "hwscene/sfm_model.hpp"

#include <doctest.h>

using namespace hwscene;

namespace {

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(a)); }

void check_models_close(const SfmModel& a, const SfmModel& b, double tol) {
  REQUIRE(a.cameras.size() == b.cameras.size());
  REQUIRE(a.images.size() == b.images.size());
  REQUIRE(a.points.size() == b.points.size());
  for (const auto& [id, ca] : a.cameras) {
    const auto& cb = b.cameras.at(id);
    CHECK(ca.model == cb.model);
    CHECK(ca.width == cb.width);
    CHECK(ca.height == cb.height);
    const auto pa = ca.colmap_params(), pb = cb.colmap_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(close(pa[i], pb[i], tol));
  }
  for (const auto& [id, ia] : a.images) {
    const auto& ib = b.images.at(id);
    CHECK(ia.name == ib.name);
    CHECK(ia.camera_id == ib.camera_id);
    CHECK((ia.rotation.coeffs() - ib.rotation.coeffs()).cwiseAbs().maxCoeff() <= tol);
    CHECK((ia.translation - ib.translation).cwiseAbs().maxCoeff() <= tol);
    REQUIRE(ia.observations.size() == ib.observations.size());
    for (std::size_t k = 0; k < ia.observations.size(); ++k) {
      CHECK(ia.observations[k].point3d_id == ib.observations[k].point3d_id);
      CHECK((ia.observations[k].pixel - ib.observations[k].pixel).cwiseAbs().maxCoeff() <= tol * 1000);
    }
  }
  for (const auto& [id, pa] : a.points) {
    const auto& pb = b.points.at(id);
    CHECK((pa.position - pb.position).cwiseAbs().maxCoeff() <= tol);
    CHECK(pa.color == pb.color);
    CHECK(close(pa.reprojection_error, pb.reprojection_error, tol));
    CHECK(pa.track == pb.track);
  }
}

FrameManifest uniform_manifest(int n, double fps) {
  FrameManifest m;
  for (int i = 0; i < n; ++i) m.entries.push_back({i, i / fps, false});
  return m;
}

}  // namespace

TEST_CASE("empty tables parse to an empty model") {
  for (auto format : {SfmFormat::text, SfmFormat::binary}) {
    const SfmTables t = write_sfm_model(SfmModel{}, format);
    const SfmModel m = parse_sfm_model(t, format);
    CHECK(m.cameras.empty());
    CHECK(m.images.empty());
    CHECK(m.points.empty());
  }
  CHECK(parse_sfm_model(SfmTables{}, SfmFormat::text).images.empty());
}

TEST_CASE("binary round trip is field-exact") {
  std::mt19937_64 rng(1);
  const SfmModel m = fixture::random_model(rng, 10, 12, 150);
  const SfmModel back = parse_sfm_model(write_sfm_model(m, SfmFormat::binary), SfmFormat::binary);
  CHECK(back == m);
}

TEST_CASE("text round trip and text/binary parity") {
  std::mt19937_64 rng(2);
  const SfmModel m = fixture::random_model(rng, 4, 8, 100);
  const SfmModel from_text = parse_sfm_model(write_sfm_model(m, SfmFormat::text), SfmFormat::text);
  const SfmModel from_bin = parse_sfm_model(write_sfm_model(m, SfmFormat::binary), SfmFormat::binary);
  check_models_close(from_text, m, 1e-9);
  check_models_close(from_text, from_bin, 1e-9);
}

TEST_CASE("distortion coefficients survive both encodings") {
  std::mt19937_64 rng(3);
  SfmModel m;
  m.cameras[1] = fixture::random_camera(rng, 1, CameraModel::opencv_radial);
  m.cameras[2] = fixture::random_camera(rng, 2, CameraModel::simple_radial);
  for (auto format : {SfmFormat::text, SfmFormat::binary}) {
    const SfmModel back = parse_sfm_model(write_sfm_model(m, format), format);
    for (const auto& [id, cam] : m.cameras) {
      REQUIRE(back.cameras.at(id).distortion.size() == cam.distortion.size());
      for (std::size_t i = 0; i < cam.distortion.size(); ++i) {
        CHECK(back.cameras.at(id).distortion[i] == doctest::Approx(cam.distortion[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("directory read and write") {
  std::mt19937_64 rng(4);
  const SfmModel m = fixture::random_model(rng, 2, 3, 20);
  const auto dir = std::filesystem::temp_directory_path() / ("hwscene_sfm_" + std::to_string(rng()));
  write_sfm_model(m, dir, SfmFormat::binary);
  CHECK(detect_sfm_format(dir) == SfmFormat::binary);
  CHECK(read_sfm_model(dir) == m);
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated binary tables are rejected") {
  std::mt19937_64 rng(5);
  SfmTables t = write_sfm_model(fixture::random_model(rng, 1, 2, 5), SfmFormat::binary);
  t.images.resize(t.images.size() - 3);
  CHECK_THROWS_AS(parse_sfm_model(t, SfmFormat::binary), Error);
}

TEST_CASE("observations pointing at unknown points fail validation") {
  std::mt19937_64 rng(6);
  SfmModel m = fixture::random_model(rng, 1, 2, 5);
  m.images.begin()->second.observations.push_back({Eigen::Vector2d(1, 1), 999999});
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("project: principal ray and behind-camera points") {
  const auto cam = CameraIntrinsics::from_colmap_params(1, CameraModel::pinhole, 1000, 1000, {1000, 1000, 500, 500});
  ImagePose pose;
  const Projection p = project({0, 0, 1}, pose, cam);
  CHECK(p.in_front);
  CHECK(p.pixel.x() == 500);
  CHECK(p.pixel.y() == 500);
  CHECK_FALSE(project({0, 0, -1}, pose, cam).in_front);
}

TEST_CASE("project agrees with the independent projection oracle") {
  std::mt19937_64 rng(7);
  for (auto model : {CameraModel::simple_pinhole, CameraModel::pinhole, CameraModel::simple_radial,
                     CameraModel::opencv_radial}) {
    const auto cam = fixture::random_camera(rng, 1, model);
    for (int i = 0; i < 200; ++i) {
      ImagePose pose;
      pose.rotation = fixture::random_quat(rng);
      pose.translation = fixture::uniform_vec(rng, -1, 1) + Eigen::Vector3d(0, 0, 6);
      const Eigen::Vector3d x = pose.rotation.conjugate() * (fixture::uniform_vec(rng, -1, 1) + Eigen::Vector3d(0, 0, 4) -
                                                             pose.translation);
      const Projection p = project(x, pose, cam);
      CHECK(p.in_front);
      CHECK((p.pixel - oracle::project(x, pose, cam)).norm() < 1e-9);
    }
  }
}

TEST_CASE("stored observations reproject onto their track points") {
  std::mt19937_64 rng(8);
  const SfmModel m = fixture::random_model(rng, 3, 6, 50);
  for (const auto& [pid, tp] : m.points) {
    for (const auto& te : tp.track) {
      const auto& img = m.images.at(te.image_id);
      const auto& obs = img.observations.at(te.point2d_idx);
      CHECK(obs.point3d_id == pid);
      const Eigen::Vector2d px = project(tp.position, img, m.cameras.at(img.camera_id)).pixel;
      CHECK((px - obs.pixel).norm() <= tp.reprojection_error + 1e-6);
    }
  }
}

TEST_CASE("transform_sfm_model keeps observations valid") {
  std::mt19937_64 rng(9);
  const SfmModel m = fixture::random_model(rng, 2, 4, 30);
  SimilarityTransformd g;
  g.scale = 37.5;
  g.rotation = random_rotation(rng);
  g.translation = fixture::uniform_vec(rng, -100, 100);
  const SfmModel t = transform_sfm_model(m, g);
  for (const auto& [pid, tp] : t.points) {
    CHECK((tp.position - g(m.points.at(pid).position)).norm() < 1e-9);
    for (const auto& te : tp.track) {
      const auto& img = t.images.at(te.image_id);
      const Eigen::Vector2d px = project(tp.position, img, t.cameras.at(img.camera_id)).pixel;
      CHECK((px - img.observations.at(te.point2d_idx).pixel).norm() < 1e-6);
    }
  }
}

TEST_CASE("sampling: 60 s at 30 fps with a 4 Hz base gives 240 frames") {
  const FrameManifest m = uniform_manifest(1800, 30.0);
  CHECK(source_frame_rate(m) == doctest::Approx(30.0));
  CHECK(default_tag_rate(m) == 10.0);
  const auto frames = sample_frames(m, 4.0, default_tag_rate(m));
  CHECK(frames.size() == 240);
  CHECK(frames == oracle::sample_frames(m, 4.0, 10.0));
}

TEST_CASE("sampling: every frame tagged at the source rate selects every frame") {
  FrameManifest m = uniform_manifest(300, 30.0);
  for (auto& e : m.entries) e.has_tag = true;
  const auto frames = sample_frames(m, 4.0, 30.0);
  CHECK(frames.size() == 300);
}

TEST_CASE("sampling: densification inside a tagged window matches tick enumeration") {
  FrameManifest m = uniform_manifest(1800, 30.0);
  for (auto& e : m.entries) e.has_tag = e.frame_index >= 100 && e.frame_index <= 200;
  const auto frames = sample_frames(m, 4.0, 10.0);
  CHECK(frames == oracle::sample_frames(m, 4.0, 10.0));
  const auto base = sample_frames(uniform_manifest(1800, 30.0), 4.0, 10.0);
  std::size_t extra = 0;
  for (auto f : frames) {
    if (!std::binary_search(base.begin(), base.end(), f)) {
      ++extra;
      CHECK(f >= 100);
      CHECK(f <= 200);
    }
  }
  CHECK(extra > 0);
}

TEST_CASE("sampling output is sorted, unique and contains the base pass") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    FrameManifest m;
    double t = 0;
    const int n = 50 + static_cast<int>(rng() % 400);
    for (int i = 0; i < n; ++i) {
      t += fixture::uniform(rng, 0.01, 0.08);
      m.entries.push_back({i * 2, t, fixture::uniform(rng, 0, 1) < 0.3});
    }
    const double base = fixture::uniform(rng, 1, 5);
    const double tag = base + fixture::uniform(rng, 0, 8);
    const auto frames = sample_frames(m, base, tag);
    CHECK(std::is_sorted(frames.begin(), frames.end()));
    CHECK(std::adjacent_find(frames.begin(), frames.end()) == frames.end());
    FrameManifest untagged = m;
    for (auto& e : untagged.entries) e.has_tag = false;
    for (auto f : sample_frames(untagged, base, tag)) CHECK(std::binary_search(frames.begin(), frames.end(), f));
    CHECK(frames == oracle::sample_frames(m, base, tag));
  }
}

TEST_CASE("sampling rejects a tag rate below the base rate") {
  CHECK_THROWS_AS(sample_frames(uniform_manifest(10, 30), 4.0, 2.0), Error);
  CHECK(sample_frames(FrameManifest{}, 4.0, 10.0).empty());
}

TEST_CASE("frame manifests parse from text and JSON") {
  const FrameManifest a = parse_frame_manifest("0 0.0 0\n1 0.5 1\n2 1.0 0\n");
  const FrameManifest b = parse_frame_manifest(
      R"({"entries": [{"frame_index": 0, "timestamp": 0.0, "has_tag": false},
                      {"frame_index": 1, "timestamp": 0.5, "has_tag": true},
                      {"frame_index": 2, "timestamp": 1.0, "has_tag": false}]})");
  CHECK(a.entries == b.entries);
  CHECK(a.entries[1].has_tag);
  CHECK_THROWS_AS(parse_frame_manifest("0 1.0 0\n1 0.5 0\n"), Error);
}
