#include "hwscene/bundle.hpp"

#include "hwscene/error.hpp"
#include "hwscene/io_util.hpp"

#include <algorithm>
#include <cstring>

namespace hwscene {

namespace {

constexpr const char* kModule = "bundle";
constexpr std::size_t kBlock = 512;

[[noreturn]] void schema(const std::string& message) { throw Error(ErrorKind::schema, kModule, message); }

std::uint64_t parse_octal(std::string_view field, const std::string& what) {
  std::uint64_t v = 0;
  bool any = false;
  for (char c : field) {
    if (c == '\0' || c == ' ') {
      if (any) break;
      continue;
    }
    if (c < '0' || c > '7') throw Error(ErrorKind::parse, kModule, "tar: bad octal field in " + what);
    v = v * 8 + static_cast<std::uint64_t>(c - '0');
    any = true;
  }
  return v;
}

std::string c_field(std::string_view field) { return std::string(field.substr(0, field.find('\0'))); }

void put_octal(char* dst, std::size_t width, std::uint64_t v) {
  std::string s(width - 1, '0');
  for (std::size_t i = width - 1; i-- > 0 && v;) {
    s[i] = static_cast<char>('0' + (v & 7));
    v >>= 3;
  }
  std::memcpy(dst, s.data(), width - 1);
  dst[width - 1] = '\0';
}

std::string normalize_path(std::string p) {
  while (p.starts_with("./")) p.erase(0, 2);
  return p;
}

/// Drops a single top-level directory shared by every member.
FileMap strip_common_root(FileMap files) {
  if (files.empty() || files.contains("manifest.json")) return files;
  const auto slash = files.begin()->first.find('/');
  if (slash == std::string::npos) return files;
  const std::string root = files.begin()->first.substr(0, slash + 1);
  for (const auto& [path, _] : files) {
    if (!path.starts_with(root)) return files;
  }
  FileMap out;
  for (auto& [path, data] : files) out.emplace(path.substr(root.size()), std::move(data));
  return out;
}

const std::string& member(const FileMap& files, const std::string& name) {
  const auto it = files.find(name);
  if (it == files.end()) schema("bundle is missing " + name);
  return it->second;
}

json member_json(const FileMap& files, const std::string& name) { return parse_json(member(files, name), kModule, name); }

std::string bundle_hash(const FileMap& files) { return sha256_hex(write_tar(files)); }

}  // namespace

FileMap read_tar(std::string_view bytes) {
  FileMap out;
  std::optional<std::string> long_name;
  std::size_t pos = 0;
  while (pos + kBlock <= bytes.size()) {
    const std::string_view h = bytes.substr(pos, kBlock);
    if (std::all_of(h.begin(), h.end(), [](char c) { return c == '\0'; })) break;

    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) {
      sum += (i >= 148 && i < 156) ? static_cast<unsigned char>(' ') : static_cast<unsigned char>(h[i]);
    }
    const std::string where = "header at byte " + std::to_string(pos);
    if (sum != parse_octal(h.substr(148, 8), where)) {
      throw Error(ErrorKind::parse, kModule, "tar: checksum mismatch in " + where);
    }
    const std::uint64_t size = parse_octal(h.substr(124, 12), where);
    const char type = h[156];
    std::string name = c_field(h.substr(0, 100));
    if (h.substr(257, 5) == "ustar") {
      const std::string prefix = c_field(h.substr(345, 155));
      if (!prefix.empty()) name = prefix + "/" + name;
    }
    const std::size_t data_pos = pos + kBlock;
    if (data_pos + size > bytes.size()) throw Error(ErrorKind::parse, kModule, "tar: truncated member " + name);
    const std::string_view data = bytes.substr(data_pos, size);
    pos = data_pos + (size + kBlock - 1) / kBlock * kBlock;

    if (type == 'L') {
      long_name = c_field(data);
      continue;
    }
    if (long_name) {
      name = *long_name;
      long_name.reset();
    }
    if (type == '0' || type == '\0') out[normalize_path(name)] = std::string(data);
  }
  return out;
}

std::string write_tar(const FileMap& files) {
  std::string out;
  for (const auto& [path, data] : files) {
    std::string name = path, prefix;
    if (name.size() > 100) {
      const auto cut = name.rfind('/', 155);
      if (cut == std::string::npos || name.size() - cut - 1 > 100) {
        throw Error(ErrorKind::validation, kModule, "tar: path too long: " + path);
      }
      prefix = name.substr(0, cut);
      name = name.substr(cut + 1);
    }
    char h[kBlock] = {};
    std::memcpy(h, name.data(), name.size());
    put_octal(h + 100, 8, 0644);
    put_octal(h + 108, 8, 0);
    put_octal(h + 116, 8, 0);
    put_octal(h + 124, 12, data.size());
    put_octal(h + 136, 12, 0);
    std::memset(h + 148, ' ', 8);
    h[156] = '0';
    std::memcpy(h + 257, "ustar", 6);
    std::memcpy(h + 263, "00", 2);
    std::memcpy(h + 345, prefix.data(), prefix.size());
    std::uint64_t sum = 0;
    for (unsigned char c : h) sum += c;
    put_octal(h + 148, 7, sum);
    h[155] = ' ';
    out.append(h, kBlock);
    out.append(data);
    out.append((kBlock - data.size() % kBlock) % kBlock, '\0');
  }
  out.append(2 * kBlock, '\0');
  return out;
}

std::string canonical_bundle_hash(std::string_view tar_bytes) {
  return bundle_hash(strip_common_root(read_tar(tar_bytes)));
}

std::string_view to_string(CaptureKind kind) { return kind == CaptureKind::splat ? "splat" : "video"; }

std::optional<CaptureKind> capture_kind_from_string(std::string_view s) {
  if (s == "splat" || s == "splat_inputs") return CaptureKind::splat;
  if (s == "video") return CaptureKind::video;
  return std::nullopt;
}

std::int64_t manifest_capture_time(const json& manifest) {
  if (manifest.is_object() && manifest.contains("capture_time") && manifest["capture_time"].is_number_integer()) {
    return manifest["capture_time"].get<std::int64_t>();
  }
  return 0;
}

SplatBundle parse_splat_bundle(std::string_view tar_bytes) {
  const FileMap files = strip_common_root(read_tar(tar_bytes));
  SplatBundle b;
  b.content_hash = bundle_hash(files);
  b.manifest = member_json(files, "manifest.json");
  if (!b.manifest.is_object()) schema("manifest.json must be an object");

  SfmFormat format;
  std::string ext;
  if (files.contains("sfm/cameras.bin")) {
    format = SfmFormat::binary;
    ext = ".bin";
  } else if (files.contains("sfm/cameras.txt")) {
    format = SfmFormat::text;
    ext = ".txt";
  } else {
    schema("bundle is missing sfm/cameras.bin or sfm/cameras.txt");
  }
  SfmTables tables;
  tables.cameras = member(files, "sfm/cameras" + ext);
  tables.images = member(files, "sfm/images" + ext);
  tables.points3d = member(files, "sfm/points3D" + ext);
  b.model = parse_sfm_model(tables, format);

  b.cloud = parse_splat_ply(member(files, "splat.ply"), b.content_hash);
  const auto& det = files.find("detections.json");
  if (det == files.end()) {
    schema("bundle is missing detections.json; tag detections are required to register the splat to the CAD model");
  }
  b.detections = parse_detections(det->second);
  if (const auto it = files.find("frames.txt"); it != files.end()) b.frames = parse_frame_manifest(it->second);
  return b;
}

VideoBundle parse_video_bundle(std::string_view tar_bytes) {
  const FileMap files = strip_common_root(read_tar(tar_bytes));
  VideoBundle b;
  b.content_hash = bundle_hash(files);
  b.manifest = member_json(files, "manifest.json");
  if (!b.manifest.is_object() || !b.manifest.contains("camera")) schema("manifest.json must carry a camera");
  b.camera = camera_from_json(b.manifest["camera"]);
  const auto det = files.find("detections.json");
  if (det == files.end()) schema("bundle is missing detections.json; frames cannot be localized without tag detections");
  b.detections = parse_detections(det->second);
  b.clip_ref = b.content_hash;
  if (b.manifest.contains("clip")) b.clip_ref = sha256_hex(member(files, b.manifest["clip"].get<std::string>()));
  return b;
}

FileMap splat_bundle_files(const SfmModel& model, SfmFormat format, const SplatCloud& cloud,
                           const std::vector<ImageDetections>& detections, const json& manifest) {
  FileMap files;
  const auto t = write_sfm_model(model, format);
  const std::string ext = format == SfmFormat::binary ? ".bin" : ".txt";
  files["sfm/cameras" + ext] = t.cameras;
  files["sfm/images" + ext] = t.images;
  files["sfm/points3D" + ext] = t.points3d;
  files["splat.ply"] = write_splat_ply(cloud);
  files["detections.json"] = detections_to_json(detections).dump(1);
  files["manifest.json"] = manifest.dump(1);
  return files;
}

FileMap video_bundle_files(const CameraIntrinsics& camera, const std::vector<ImageDetections>& detections,
                           const json& manifest) {
  FileMap files;
  json m = manifest;
  m["camera"] = to_json(camera);
  files["detections.json"] = detections_to_json(detections).dump(1);
  files["manifest.json"] = m.dump(1);
  return files;
}

}  // namespace hwscene
