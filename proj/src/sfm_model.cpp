#include "hwscene/sfm_model.hpp"

#include "hwscene/io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hwscene {

namespace {

constexpr const char* kModule = "sfm_model";

// ---------------------------------------------------------------------------
// binary

class BinaryReader {
 public:
  BinaryReader(const std::string& bytes, std::string table) : bytes_(bytes), table_(std::move(table)) {}

  template <typename T>
  T read() {
    T v;
    if (pos_ + sizeof(T) > bytes_.size()) fail("truncated record");
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string read_cstring() {
    const auto end = bytes_.find('\0', pos_);
    if (end == std::string::npos) fail("unterminated string");
    std::string s = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return s;
  }

  void begin_record(std::uint64_t index) {
    record_ = index;
    record_offset_ = pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse, kModule,
                table_ + ": record " + std::to_string(record_) + " at byte offset " +
                    std::to_string(record_offset_) + ": " + what);
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::string table_;
  std::size_t pos_ = 0;
  std::uint64_t record_ = 0;
  std::size_t record_offset_ = 0;
};

class BinaryWriter {
 public:
  template <typename T>
  void write(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void write_cstring(const std::string& s) {
    out_.append(s);
    out_.push_back('\0');
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

std::uint64_t read_count(BinaryReader& r) {
  r.begin_record(0);
  return r.read<std::uint64_t>();
}

void parse_cameras_binary(const std::string& bytes, SfmModel& model) {
  BinaryReader r(bytes, "cameras.bin");
  const auto n = read_count(r);
  for (std::uint64_t i = 0; i < n; ++i) {
    r.begin_record(i);
    const auto id = r.read<std::uint32_t>();
    const auto model_id = r.read<std::int32_t>();
    const auto width = r.read<std::uint64_t>();
    const auto height = r.read<std::uint64_t>();
    const auto cam_model = camera_model_from_id(model_id);
    if (!cam_model) r.fail("unsupported camera model id " + std::to_string(model_id));
    std::vector<double> params(static_cast<std::size_t>(colmap_param_count(*cam_model)));
    for (auto& p : params) p = r.read<double>();
    if (!model.cameras.emplace(id, CameraIntrinsics::from_colmap_params(id, *cam_model, width, height, params)).second) {
      r.fail("duplicate camera id " + std::to_string(id));
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after last record");
}

void parse_images_binary(const std::string& bytes, SfmModel& model) {
  BinaryReader r(bytes, "images.bin");
  const auto n = read_count(r);
  for (std::uint64_t i = 0; i < n; ++i) {
    r.begin_record(i);
    ImagePose img;
    img.image_id = r.read<std::uint32_t>();
    const double qw = r.read<double>(), qx = r.read<double>(), qy = r.read<double>(), qz = r.read<double>();
    img.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    for (int k = 0; k < 3; ++k) img.translation[k] = r.read<double>();
    img.camera_id = r.read<std::uint32_t>();
    img.name = r.read_cstring();
    const auto n_obs = r.read<std::uint64_t>();
    if (n_obs > bytes.size()) r.fail("implausible observation count");
    img.observations.resize(n_obs);
    for (auto& o : img.observations) {
      o.pixel.x() = r.read<double>();
      o.pixel.y() = r.read<double>();
      o.point3d_id = r.read<std::uint64_t>();
    }
    const auto id = img.image_id;
    if (!model.images.emplace(id, std::move(img)).second) r.fail("duplicate image id " + std::to_string(id));
  }
  if (!r.at_end()) r.fail("trailing bytes after last record");
}

void parse_points_binary(const std::string& bytes, SfmModel& model) {
  BinaryReader r(bytes, "points3D.bin");
  const auto n = read_count(r);
  for (std::uint64_t i = 0; i < n; ++i) {
    r.begin_record(i);
    TrackPoint pt;
    pt.point3d_id = r.read<std::uint64_t>();
    for (int k = 0; k < 3; ++k) pt.position[k] = r.read<double>();
    for (auto& c : pt.color) c = r.read<std::uint8_t>();
    pt.reprojection_error = r.read<double>();
    const auto len = r.read<std::uint64_t>();
    if (len > bytes.size()) r.fail("implausible track length");
    pt.track.resize(len);
    for (auto& t : pt.track) {
      t.image_id = r.read<std::uint32_t>();
      t.point2d_idx = r.read<std::uint32_t>();
    }
    const auto id = pt.point3d_id;
    if (!model.points.emplace(id, std::move(pt)).second) r.fail("duplicate point id " + std::to_string(id));
  }
  if (!r.at_end()) r.fail("trailing bytes after last record");
}

SfmTables write_binary(const SfmModel& model) {
  SfmTables out;
  {
    BinaryWriter w;
    w.write<std::uint64_t>(model.cameras.size());
    for (const auto& [id, cam] : model.cameras) {
      w.write<std::uint32_t>(id);
      w.write<std::int32_t>(static_cast<std::int32_t>(cam.model));
      w.write<std::uint64_t>(cam.width);
      w.write<std::uint64_t>(cam.height);
      for (double p : cam.colmap_params()) w.write<double>(p);
    }
    out.cameras = w.take();
  }
  {
    BinaryWriter w;
    w.write<std::uint64_t>(model.images.size());
    for (const auto& [id, img] : model.images) {
      w.write<std::uint32_t>(id);
      w.write<double>(img.rotation.w());
      w.write<double>(img.rotation.x());
      w.write<double>(img.rotation.y());
      w.write<double>(img.rotation.z());
      for (int k = 0; k < 3; ++k) w.write<double>(img.translation[k]);
      w.write<std::uint32_t>(img.camera_id);
      w.write_cstring(img.name);
      w.write<std::uint64_t>(img.observations.size());
      for (const auto& o : img.observations) {
        w.write<double>(o.pixel.x());
        w.write<double>(o.pixel.y());
        w.write<std::uint64_t>(o.point3d_id);
      }
    }
    out.images = w.take();
  }
  {
    BinaryWriter w;
    w.write<std::uint64_t>(model.points.size());
    for (const auto& [id, pt] : model.points) {
      w.write<std::uint64_t>(id);
      for (int k = 0; k < 3; ++k) w.write<double>(pt.position[k]);
      for (auto c : pt.color) w.write<std::uint8_t>(c);
      w.write<double>(pt.reprojection_error);
      w.write<std::uint64_t>(pt.track.size());
      for (const auto& t : pt.track) {
        w.write<std::uint32_t>(t.image_id);
        w.write<std::uint32_t>(t.point2d_idx);
      }
    }
    out.points3d = w.take();
  }
  return out;
}

// ---------------------------------------------------------------------------
// text

class TextLines {
 public:
  TextLines(const std::string& text, std::string table) : in_(text), table_(std::move(table)) {}

  /// Next non-empty, non-comment line.
  bool next_record(std::vector<std::string_view>& tokens) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      const auto first = line_.find_first_not_of(" \t\r");
      if (first == std::string::npos || line_[first] == '#') continue;
      tokenize(tokens);
      return true;
    }
    return false;
  }

  /// Next raw line (may be empty), used for the observation line of images.txt.
  bool next_line(std::vector<std::string_view>& tokens) {
    if (!std::getline(in_, line_)) return false;
    ++line_no_;
    tokenize(tokens);
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse, kModule, table_ + ": line " + std::to_string(line_no_) + ": " + what);
  }

  template <typename T>
  T number(std::string_view tok) const {
    T v{};
    const auto* end = tok.data() + tok.size();
    const auto res = std::from_chars(tok.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) fail("bad number '" + std::string(tok) + "'");
    return v;
  }

 private:
  void tokenize(std::vector<std::string_view>& tokens) {
    tokens.clear();
    std::string_view s(line_);
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
      std::size_t j = i;
      while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
      if (j > i) tokens.push_back(s.substr(i, j - i));
      i = j;
    }
  }

  std::istringstream in_;
  std::string table_;
  std::string line_;
  std::size_t line_no_ = 0;
};

void parse_cameras_text(const std::string& text, SfmModel& model) {
  TextLines lines(text, "cameras.txt");
  std::vector<std::string_view> tok;
  while (lines.next_record(tok)) {
    if (tok.size() < 4) lines.fail("expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]");
    const auto id = lines.number<std::uint32_t>(tok[0]);
    const auto cam_model = camera_model_from_name(tok[1]);
    if (!cam_model) lines.fail("unsupported camera model " + std::string(tok[1]));
    std::vector<double> params;
    for (std::size_t k = 4; k < tok.size(); ++k) params.push_back(lines.number<double>(tok[k]));
    if (static_cast<int>(params.size()) != colmap_param_count(*cam_model)) lines.fail("wrong parameter count");
    auto cam = CameraIntrinsics::from_colmap_params(id, *cam_model, lines.number<std::uint64_t>(tok[2]),
                                                    lines.number<std::uint64_t>(tok[3]), params);
    if (!model.cameras.emplace(id, std::move(cam)).second) lines.fail("duplicate camera id");
  }
}

void parse_images_text(const std::string& text, SfmModel& model) {
  TextLines lines(text, "images.txt");
  std::vector<std::string_view> tok;
  while (lines.next_record(tok)) {
    if (tok.size() != 10) lines.fail("expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME");
    ImagePose img;
    img.image_id = lines.number<std::uint32_t>(tok[0]);
    img.rotation = Eigen::Quaterniond(lines.number<double>(tok[1]), lines.number<double>(tok[2]),
                                      lines.number<double>(tok[3]), lines.number<double>(tok[4]));
    for (int k = 0; k < 3; ++k) img.translation[k] = lines.number<double>(tok[5 + k]);
    img.camera_id = lines.number<std::uint32_t>(tok[8]);
    img.name = std::string(tok[9]);
    if (!lines.next_line(tok)) lines.fail("missing observation line");
    if (tok.size() % 3 != 0) lines.fail("observation line must hold X Y POINT3D_ID triples");
    for (std::size_t k = 0; k < tok.size(); k += 3) {
      Observation o;
      o.pixel = {lines.number<double>(tok[k]), lines.number<double>(tok[k + 1])};
      const auto pid = lines.number<std::int64_t>(tok[k + 2]);
      o.point3d_id = pid < 0 ? kNoPoint3d : static_cast<std::uint64_t>(pid);
      img.observations.push_back(o);
    }
    const auto id = img.image_id;
    if (!model.images.emplace(id, std::move(img)).second) lines.fail("duplicate image id");
  }
}

void parse_points_text(const std::string& text, SfmModel& model) {
  TextLines lines(text, "points3D.txt");
  std::vector<std::string_view> tok;
  while (lines.next_record(tok)) {
    if (tok.size() < 8 || (tok.size() - 8) % 2 != 0) {
      lines.fail("expected POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*");
    }
    TrackPoint pt;
    pt.point3d_id = lines.number<std::uint64_t>(tok[0]);
    for (int k = 0; k < 3; ++k) pt.position[k] = lines.number<double>(tok[1 + k]);
    for (int k = 0; k < 3; ++k) {
      const auto c = lines.number<unsigned>(tok[4 + k]);
      if (c > 255) lines.fail("color component out of range");
      pt.color[k] = static_cast<std::uint8_t>(c);
    }
    pt.reprojection_error = lines.number<double>(tok[7]);
    for (std::size_t k = 8; k < tok.size(); k += 2) {
      pt.track.push_back({lines.number<std::uint32_t>(tok[k]), lines.number<std::uint32_t>(tok[k + 1])});
    }
    const auto id = pt.point3d_id;
    if (!model.points.emplace(id, std::move(pt)).second) lines.fail("duplicate point id");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

SfmTables write_text(const SfmModel& model) {
  SfmTables out;
  std::string s;
  s = "# Camera list with one line of data per camera:\n"
      "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
      "# Number of cameras: " + std::to_string(model.cameras.size()) + "\n";
  for (const auto& [id, cam] : model.cameras) {
    s += std::to_string(id) + " " + std::string(colmap_name(cam.model)) + " " + std::to_string(cam.width) +
         " " + std::to_string(cam.height);
    for (double p : cam.colmap_params()) s += " " + fmt_double(p);
    s += "\n";
  }
  out.cameras = std::move(s);

  s = "# Image list with two lines of data per image:\n"
      "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
      "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
      "# Number of images: " + std::to_string(model.images.size()) + "\n";
  for (const auto& [id, img] : model.images) {
    s += std::to_string(id);
    for (double q : {img.rotation.w(), img.rotation.x(), img.rotation.y(), img.rotation.z()}) s += " " + fmt_double(q);
    for (int k = 0; k < 3; ++k) s += " " + fmt_double(img.translation[k]);
    s += " " + std::to_string(img.camera_id) + " " + img.name + "\n";
    bool first = true;
    for (const auto& o : img.observations) {
      if (!first) s += " ";
      first = false;
      s += fmt_double(o.pixel.x()) + " " + fmt_double(o.pixel.y()) + " " +
           (o.has_point() ? std::to_string(o.point3d_id) : std::string("-1"));
    }
    s += "\n";
  }
  out.images = std::move(s);

  s = "# 3D point list with one line of data per point:\n"
      "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
      "# Number of points: " + std::to_string(model.points.size()) + "\n";
  for (const auto& [id, pt] : model.points) {
    s += std::to_string(id);
    for (int k = 0; k < 3; ++k) s += " " + fmt_double(pt.position[k]);
    for (auto c : pt.color) s += " " + std::to_string(static_cast<unsigned>(c));
    s += " " + fmt_double(pt.reprojection_error);
    for (const auto& t : pt.track) s += " " + std::to_string(t.image_id) + " " + std::to_string(t.point2d_idx);
    s += "\n";
  }
  out.points3d = std::move(s);
  return out;
}

[[noreturn]] void integrity(const std::string& what) {
  throw Error(ErrorKind::integrity, kModule, what);
}

}  // namespace

void SfmModel::validate() const {
  for (const auto& [id, cam] : cameras) {
    if (cam.camera_id != id) integrity("camera key/id mismatch for camera " + std::to_string(id));
    cam.validate();
  }
  for (const auto& [id, img] : images) {
    const auto tag = "image " + std::to_string(id);
    if (img.image_id != id) integrity(tag + ": key/id mismatch");
    if (std::abs(img.rotation.norm() - 1.0) > 1e-9) {
      throw Error(ErrorKind::validation, kModule, tag + ": quaternion is not unit length");
    }
    if (!img.translation.allFinite()) throw Error(ErrorKind::validation, kModule, tag + ": non-finite translation");
    if (!cameras.contains(img.camera_id)) {
      integrity(tag + " references missing camera " + std::to_string(img.camera_id));
    }
    for (std::size_t k = 0; k < img.observations.size(); ++k) {
      const auto& o = img.observations[k];
      if (o.has_point() && !points.contains(o.point3d_id)) {
        integrity(tag + " observation " + std::to_string(k) + " references missing point " +
                  std::to_string(o.point3d_id));
      }
    }
  }
  for (const auto& [id, pt] : points) {
    const auto tag = "point " + std::to_string(id);
    if (pt.point3d_id != id) integrity(tag + ": key/id mismatch");
    for (const auto& t : pt.track) {
      const auto it = images.find(t.image_id);
      if (it == images.end()) integrity(tag + " track references missing image " + std::to_string(t.image_id));
      if (t.point2d_idx >= it->second.observations.size()) {
        integrity(tag + " track references observation " + std::to_string(t.point2d_idx) + " beyond image " +
                  std::to_string(t.image_id));
      }
      if (it->second.observations[t.point2d_idx].point3d_id != id) {
        integrity(tag + " track entry (" + std::to_string(t.image_id) + ", " + std::to_string(t.point2d_idx) +
                  ") does not point back to this point");
      }
    }
  }
}

const ImagePose* SfmModel::find_image_by_name(const std::string& name) const {
  for (const auto& [id, img] : images) {
    if (img.name == name) return &img;
  }
  return nullptr;
}

SfmModel parse_sfm_model(const SfmTables& tables, SfmFormat format) {
  SfmModel model;
  if (format == SfmFormat::binary) {
    parse_cameras_binary(tables.cameras, model);
    parse_images_binary(tables.images, model);
    parse_points_binary(tables.points3d, model);
  } else {
    parse_cameras_text(tables.cameras, model);
    parse_images_text(tables.images, model);
    parse_points_text(tables.points3d, model);
  }
  model.validate();
  return model;
}

SfmTables write_sfm_model(const SfmModel& model, SfmFormat format) {
  return format == SfmFormat::binary ? write_binary(model) : write_text(model);
}

std::optional<SfmFormat> detect_sfm_format(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (fs::exists(dir / "cameras.bin") && fs::exists(dir / "images.bin") && fs::exists(dir / "points3D.bin")) {
    return SfmFormat::binary;
  }
  if (fs::exists(dir / "cameras.txt") && fs::exists(dir / "images.txt") && fs::exists(dir / "points3D.txt")) {
    return SfmFormat::text;
  }
  return std::nullopt;
}

SfmModel read_sfm_model(const std::filesystem::path& dir) {
  const auto format = detect_sfm_format(dir);
  if (!format) {
    throw Error(ErrorKind::io, kModule, "no cameras/images/points3D tables in " + dir.string());
  }
  const std::string ext = *format == SfmFormat::binary ? ".bin" : ".txt";
  SfmTables t;
  t.cameras = read_file(dir / ("cameras" + ext));
  t.images = read_file(dir / ("images" + ext));
  t.points3d = read_file(dir / ("points3D" + ext));
  return parse_sfm_model(t, *format);
}

void write_sfm_model(const SfmModel& model, const std::filesystem::path& dir, SfmFormat format) {
  std::filesystem::create_directories(dir);
  const auto t = write_sfm_model(model, format);
  const std::string ext = format == SfmFormat::binary ? ".bin" : ".txt";
  write_file(dir / ("cameras" + ext), t.cameras);
  write_file(dir / ("images" + ext), t.images);
  write_file(dir / ("points3D" + ext), t.points3d);
}

Projection project(const Eigen::Vector3d& point, const ImagePose& pose, const CameraIntrinsics& cam) {
  if (!point.allFinite()) throw Error(ErrorKind::validation, kModule, "projected point is not finite");
  const Eigen::Vector3d pc = pose.to_camera(point);
  if (pc.isZero(0)) throw Error(ErrorKind::degenerate, kModule, "degenerate projection: point at camera centre");
  return {project_camera_point(cam, pc), pc.z() > 0};
}

SfmModel transform_sfm_model(const SfmModel& model, const SimilarityTransformd& g) {
  SfmModel out = model;
  const Eigen::Matrix3d rg_t = g.rotation.transpose();
  for (auto& [id, img] : out.images) {
    const Eigen::Matrix3d r = img.rotation.toRotationMatrix() * rg_t;
    img.translation = g.scale * img.translation - r * g.translation;
    img.rotation = Eigen::Quaterniond(r).normalized();
  }
  for (auto& [id, pt] : out.points) pt.position = g(pt.position);
  return out;
}

// ---------------------------------------------------------------------------
// frame sampling

void FrameManifest::validate() const {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].frame_index <= entries[i - 1].frame_index) {
      throw Error(ErrorKind::validation, kModule,
                  "frame manifest: frame_index not strictly increasing at entry " + std::to_string(i));
    }
    if (entries[i].timestamp < entries[i - 1].timestamp) {
      throw Error(ErrorKind::validation, kModule,
                  "frame manifest: timestamps decrease at entry " + std::to_string(i));
    }
  }
  for (const auto& e : entries) {
    if (!std::isfinite(e.timestamp)) throw Error(ErrorKind::validation, kModule, "frame manifest: non-finite timestamp");
  }
}

FrameManifest parse_frame_manifest(const std::string& text) {
  FrameManifest m;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      const auto doc = nlohmann::json::parse(text);
      for (const auto& e : doc.at("entries")) {
        m.entries.push_back({e.at("frame_index").get<std::int64_t>(), e.at("timestamp").get<double>(),
                             e.at("has_tag").get<bool>()});
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::parse, kModule, std::string("frame manifest: ") + ex.what());
    }
  } else {
    TextLines lines(text, "frame manifest");
    std::vector<std::string_view> tok;
    while (lines.next_record(tok)) {
      if (tok.size() != 3) lines.fail("expected frame_index timestamp has_tag");
      bool tag = false;
      if (tok[2] == "1" || tok[2] == "true") {
        tag = true;
      } else if (tok[2] != "0" && tok[2] != "false") {
        lines.fail("has_tag must be 0/1/true/false");
      }
      m.entries.push_back({lines.number<std::int64_t>(tok[0]), lines.number<double>(tok[1]), tag});
    }
  }
  m.validate();
  return m;
}

double source_frame_rate(const FrameManifest& manifest) {
  const auto& e = manifest.entries;
  if (e.size() < 2) return 0.0;
  const double span = e.back().timestamp - e.front().timestamp;
  return span > 0 ? static_cast<double>(e.size() - 1) / span : 0.0;
}

double default_tag_rate(const FrameManifest& manifest) {
  return std::min(source_frame_rate(manifest), 10.0);
}

namespace {

/// Index into `times` of the value nearest `t`; ties go to the earlier entry.
std::size_t nearest_index(const std::vector<double>& times, double t) {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  if (it == times.end()) return times.size() - 1;
  const auto hi = static_cast<std::size_t>(it - times.begin());
  const auto lo = hi - 1;
  // Walk back over equal timestamps so ties resolve to the earliest frame.
  auto lo_first = lo;
  while (lo_first > 0 && times[lo_first - 1] == times[lo]) --lo_first;
  return (t - times[lo] <= times[hi] - t) ? lo_first : hi;
}

}  // namespace

std::vector<std::int64_t> sample_frames(const FrameManifest& manifest, double base_rate, double tag_rate) {
  if (!(base_rate > 0)) throw Error(ErrorKind::validation, kModule, "base_rate must be positive");
  if (!(tag_rate >= base_rate)) throw Error(ErrorKind::validation, kModule, "tag_rate must be >= base_rate");
  const auto& entries = manifest.entries;
  if (entries.empty()) return {};

  const double t0 = entries.front().timestamp;
  const double t1 = entries.back().timestamp;
  std::vector<std::int64_t> picked;

  std::vector<double> all_times;
  all_times.reserve(entries.size());
  for (const auto& e : entries) all_times.push_back(e.timestamp);
  for (std::int64_t k = 0;; ++k) {
    const double tick = t0 + static_cast<double>(k) / base_rate;
    if (tick > t1) break;
    picked.push_back(entries[nearest_index(all_times, tick)].frame_index);
  }

  std::vector<double> tag_times;
  std::vector<std::int64_t> tag_frames;
  for (const auto& e : entries) {
    if (e.has_tag) {
      tag_times.push_back(e.timestamp);
      tag_frames.push_back(e.frame_index);
    }
  }
  if (!tag_times.empty()) {
    const double half_period = 0.5 / tag_rate;
    for (std::int64_t k = 0;; ++k) {
      const double tick = t0 + static_cast<double>(k) / tag_rate;
      if (tick > t1) break;
      const auto i = nearest_index(tag_times, tick);
      if (std::abs(tag_times[i] - tick) <= half_period) picked.push_back(tag_frames[i]);
    }
  }

  std::sort(picked.begin(), picked.end());
  picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  return picked;
}

}  // namespace hwscene
