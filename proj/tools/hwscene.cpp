// hwscene: offline driver for the scan-to-CAD pipeline and the coordination service.

#include "hwscene/bundle.hpp"
#include "hwscene/error.hpp"
#include "hwscene/io_util.hpp"
#include "hwscene/pipeline.hpp"
#include "hwscene/service.hpp"
#include "hwscene/store.hpp"
#include "hwscene/synth.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <iterator>

using namespace hwscene;

namespace {

constexpr const char* kModule = "cli";

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    std::string bytes{std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    if (bytes.empty()) throw Error(ErrorKind::io, kModule, "no input on stdin");
    return bytes;
  }
  return read_file(path);
}

void write_output(const std::string& path, std::string_view bytes) {
  if (path.empty() || path == "-") {
    std::cout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    std::cout.flush();
  } else {
    write_file(path, bytes);
  }
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

/// JSON given inline or as `@file`.
json json_arg(const std::string& value, const std::string& what) {
  if (value.starts_with("@")) return parse_json(read_file(value.substr(1)), kModule, what);
  return parse_json(value, kModule, what);
}

struct AssemblyArgs {
  std::string glb;
  std::string manifest;

  void add(CLI::App* cmd) {
    cmd->add_option("--glb", glb, "Assembly scene graph (.glb); defaults to assembly/model.glb in the bundle");
    cmd->add_option("--manifest", manifest, "Assembly manifest (.json); defaults to assembly/manifest.json in the bundle");
  }

  Assembly load(const FileMap& files) const {
    if (!glb.empty() || !manifest.empty()) {
      if (glb.empty() || manifest.empty()) {
        throw Error(ErrorKind::validation, kModule, "--glb and --manifest must be given together");
      }
      return load_assembly_files(glb, manifest);
    }
    const auto g = files.find("assembly/model.glb");
    const auto m = files.find("assembly/manifest.json");
    if (g == files.end() || m == files.end()) {
      throw Error(ErrorKind::validation, kModule,
                  "no assembly: pass --glb and --manifest or include assembly/model.glb and assembly/manifest.json");
    }
    return load_assembly(g->second, m->second);
  }
};

std::optional<WorkspaceSlab> parse_slab(const std::string& s) {
  if (s == "none") return std::nullopt;
  WorkspaceSlab slab;
  if (s.empty()) return slab;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> slab.z_min_offset >> c1 >> slab.z_max_offset >> c2 >> slab.xy_margin) || c1 != ',' || c2 != ',' ||
      !(in >> std::ws).eof()) {
    throw Error(ErrorKind::validation, kModule, "--slab must be 'none' or 'zmin,zmax,margin'");
  }
  return slab;
}

bool has_splat_members(const FileMap& files);

/// Video bundle members: the archive itself or its `video/` directory.
std::string video_tar(const FileMap& files, const std::string& bytes) {
  if (files.contains("video/manifest.json") && (has_splat_members(files) || !files.contains("manifest.json"))) {
    return write_tar(sub_bundle(files, "video/"));
  }
  return bytes;
}

bool has_splat_members(const FileMap& files) {
  for (const auto& [path, _] : files) {
    if (path.starts_with("sfm/")) return true;
  }
  return false;
}

int report_error(const std::string& kind, const std::string& module, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"module", module}, {"message", message}}}}.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  CLI::App app{"hwscene: register splat captures to CAD and coordinate troubleshooting"};
  app.require_subcommand(1);
  std::function<void()> run;

  // ingest
  std::string ingest_in, ingest_kind = "auto";
  auto* ingest = app.add_subcommand("ingest", "Parse and validate a capture bundle; print a summary");
  ingest->add_option("bundle", ingest_in, "Bundle archive (.tar); stdin when omitted");
  ingest->add_option("--kind", ingest_kind, "auto, splat or video")->check(CLI::IsMember({"auto", "splat", "video"}));
  ingest->callback([&] {
    run = [&] {
      const std::string bytes = read_input(ingest_in);
      const FileMap files = read_tar(bytes);
      const bool splat = ingest_kind == "splat" || (ingest_kind == "auto" && has_splat_members(files));
      if (splat) {
        const SplatBundle b = parse_splat_bundle(bytes);
        std::size_t tags = 0;
        for (const auto& d : b.detections) tags += d.detections.size();
        print_json({{"kind", "splat"},
                    {"content_hash", b.content_hash},
                    {"cameras", b.model.cameras.size()},
                    {"images", b.model.images.size()},
                    {"points3D", b.model.points.size()},
                    {"gaussians", b.cloud.gaussians.size()},
                    {"sh_degree", b.cloud.sh_degree},
                    {"detection_images", b.detections.size()},
                    {"tag_detections", tags},
                    {"frames", b.frames ? json(b.frames->entries.size()) : json(nullptr)},
                    {"capture_time", manifest_capture_time(b.manifest)}});
      } else {
        const VideoBundle b = parse_video_bundle(video_tar(files, bytes));
        print_json({{"kind", "video"},
                    {"content_hash", b.content_hash},
                    {"camera", to_json(b.camera)},
                    {"frames", b.detections.size()},
                    {"clip_ref", b.clip_ref},
                    {"capture_time", manifest_capture_time(b.manifest)}});
      }
    };
  });

  // register
  std::string reg_in, reg_ply, reg_slab;
  double reg_rms = 5.0, reg_tau = 30.0;
  bool reg_no_privacy = false, reg_keep_sh = false;
  AssemblyArgs reg_asm;
  auto* reg = app.add_subcommand("register", "Align a splat capture to the assembly and resolve its joints");
  reg->add_option("bundle", reg_in, "Splat bundle archive (.tar); stdin when omitted");
  reg_asm.add(reg);
  reg->add_option("--rms-threshold", reg_rms, "Alignment rms (mm) above which a warning is reported")->capture_default_str();
  reg->add_option("--out-ply", reg_ply, "Write the CAD-space splat here");
  reg->add_flag("--no-privacy", reg_no_privacy, "Keep background gaussians in --out-ply");
  reg->add_option("--tau", reg_tau, "Privacy mask distance (mm)")->capture_default_str();
  reg->add_option("--slab", reg_slab, "Workspace slab 'zmin,zmax,margin' (mm) or 'none'");
  reg->add_flag("--keep-unrotated-sh", reg_keep_sh, "Keep higher SH bands instead of dropping them");
  reg->callback([&] {
    run = [&] {
      const std::string bytes = read_input(reg_in);
      const Assembly asm_ = reg_asm.load(read_tar(bytes));
      RegistrationOptions o;
      o.alignment.rms_threshold_mm = reg_rms;
      o.privacy = !reg_no_privacy;
      o.mask.tau = reg_tau;
      o.mask.slab = parse_slab(reg_slab);
      o.transform.keep_unrotated_sh = reg_keep_sh;
      const SplatBundle bundle = parse_splat_bundle(bytes);
      const RegisteredSplat r = register_splat_bundle(bundle, asm_, o);
      json report = registration_report(r);
      report["assembly_ref"] = asm_.content_hash;
      report["bundle_hash"] = bundle.content_hash;
      if (!reg_ply.empty()) {
        const std::string ply = write_splat_ply(r.cloud);
        write_file(reg_ply, ply);
        report["splat_ref"] = sha256_hex(ply);
      }
      print_json(report);
    };
  });

  // prune
  std::string prune_in, prune_out, prune_slab, prune_joints;
  double prune_tau = 30.0;
  bool prune_cad = false;
  AssemblyArgs prune_asm;
  auto* prune = app.add_subcommand("prune", "Apply the privacy mask and write the pruned PLY");
  prune->add_option("input", prune_in, "Splat bundle (.tar), or a CAD-space .ply with --cad-ply; stdin when omitted");
  prune_asm.add(prune);
  prune->add_option("--tau", prune_tau, "Keep gaussians within this distance (mm) of the hardware")->capture_default_str();
  prune->add_option("--slab", prune_slab, "Workspace slab 'zmin,zmax,margin' (mm) or 'none'");
  prune->add_flag("--cad-ply", prune_cad, "Input is an already registered PLY (needs --glb/--manifest)");
  prune->add_option("--joints", prune_joints, "Joint values as JSON or @file (with --cad-ply)");
  prune->add_option("-o,--out", prune_out, "Pruned PLY path; only the report is printed when omitted");
  prune->callback([&] {
    run = [&] {
      const std::string bytes = read_input(prune_in);
      MaskOptions mask;
      mask.tau = prune_tau;
      mask.slab = parse_slab(prune_slab);
      SplatCloud cloud;
      JointValues joints;
      std::optional<Assembly> asm_;
      if (prune_cad) {
        asm_ = prune_asm.load({});
        cloud = parse_splat_ply(bytes);
        joints = asm_->joint_values;
        if (!prune_joints.empty()) joints = json_arg(prune_joints, "--joints").get<JointValues>();
      } else {
        asm_ = prune_asm.load(read_tar(bytes));
        RegistrationOptions o;
        o.privacy = false;
        const RegisteredSplat r = register_splat_bundle(parse_splat_bundle(bytes), *asm_, o);
        cloud = r.cloud;
        joints = r.joint_values;
      }
      const auto keep = privacy_mask(cloud, *asm_, joints, mask);
      const SplatCloud pruned = prune_by_mask(cloud, keep);
      json report = {{"tau_mm", prune_tau},
                     {"gaussians_total", cloud.gaussians.size()},
                     {"gaussians_kept", pruned.gaussians.size()},
                     {"joint_values", joints}};
      if (!prune_out.empty()) {
        const std::string ply = write_splat_ply(pruned);
        write_output(prune_out, ply);
        report["splat_ref"] = sha256_hex(ply);
      }
      if (prune_out != "-") print_json(report);
    };
  });

  // localize
  std::string loc_in, loc_out, loc_joints;
  AssemblyArgs loc_asm;
  auto* loc = app.add_subcommand("localize", "Localize video frames in CAD space from their tag detections");
  loc->add_option("bundle", loc_in, "Video bundle (.tar), or an archive with a video/ directory; stdin when omitted");
  loc_asm.add(loc);
  loc->add_option("--joints", loc_joints,
                  "Joint values as JSON or @file; defaults to the joints of a splat capture in the same archive, "
                  "else the assembly defaults");
  loc->add_option("-o,--out", loc_out, "Poses file; stdout when omitted");
  loc->callback([&] {
    run = [&] {
      const std::string bytes = read_input(loc_in);
      const FileMap files = read_tar(bytes);
      const Assembly asm_ = loc_asm.load(files);
      JointValues joints = asm_.joint_values;
      std::string joint_source = "assembly";
      if (!loc_joints.empty()) {
        joints = json_arg(loc_joints, "--joints").get<JointValues>();
        joint_source = "argument";
      } else if (has_splat_members(files)) {
        RegistrationOptions o;
        o.privacy = false;
        joints = register_splat_bundle(parse_splat_bundle(bytes), asm_, o).joint_values;
        joint_source = "capture";
      }
      validate_joint_values(asm_, joints);
      const VideoAnnotation v = localize_video_bundle(parse_video_bundle(video_tar(files, bytes)), asm_, joints);
      json out = to_json(v);
      out["joint_values"] = joints;
      out["joint_source"] = joint_source;
      write_output(loc_out, out.dump(2) + "\n");
    };
  });

  // scene build
  std::vector<std::string> scene_splats, scene_videos;
  std::string scene_out, scene_user = "cli";
  AssemblyArgs scene_asm;
  auto* scene = app.add_subcommand("scene", "Scene documents");
  scene->require_subcommand(1);
  auto* build = scene->add_subcommand("build", "Register captures and assemble a scene document");
  build->add_option("splats", scene_splats, "Splat bundles (.tar), in capture order")->required();
  build->add_option("--video", scene_videos, "Video bundles (.tar) to place in the scene");
  scene_asm.add(build);
  build->add_option("--user", scene_user, "Author recorded on the scene")->capture_default_str();
  build->add_option("-o,--out", scene_out, "Directory for scene.json and the registered splats; stdout when omitted");
  build->callback([&] {
    run = [&] {
      Workspace ws;
      std::vector<std::pair<std::string, std::string>> plys;
      std::string first = read_input(scene_splats.front());
      auto asm_ = std::make_shared<const Assembly>(scene_asm.load(read_tar(first)));
      ws.add_assembly(asm_, {{"source", "cli"}}, 0);
      const Scene created = ws.create_scene(asm_->content_hash, scene_user, 0);
      for (std::size_t i = 0; i < scene_splats.size(); ++i) {
        const std::string bytes = i == 0 ? first : read_input(scene_splats[i]);
        const SplatBundle b = parse_splat_bundle(bytes);
        const RegisteredSplat r = register_splat_bundle(b, *asm_);
        std::string ply = write_splat_ply(r.cloud);
        const std::string ref = sha256_hex(ply);
        ws.add_splat(created.scene_id, make_splat_entry(r, ref, b), manifest_capture_time(b.manifest));
        plys.emplace_back(ref, std::move(ply));
      }
      for (const auto& path : scene_videos) {
        const std::string bytes = read_input(path);
        const VideoBundle b = parse_video_bundle(video_tar(read_tar(bytes), bytes));
        const JointValues joints = ws.scene(created.scene_id).current_joints(*asm_);
        ws.add_video(created.scene_id, localize_video_bundle(b, *asm_, joints), manifest_capture_time(b.manifest));
      }
      json doc = to_json(ws.scene(created.scene_id));
      doc["parts"] = part_tree_to_json(*asm_);
      if (scene_out.empty()) {
        print_json(doc);
        return;
      }
      std::filesystem::create_directories(std::filesystem::path(scene_out) / "splats");
      for (const auto& [ref, ply] : plys) write_file(std::filesystem::path(scene_out) / "splats" / (ref + ".ply"), ply);
      write_file(std::filesystem::path(scene_out) / "scene.json", doc.dump(2) + "\n");
    };
  });

  // query part
  std::string query_store, query_assembly, query_part;
  auto* query = app.add_subcommand("query", "Read from a service store");
  query->require_subcommand(1);
  auto* qpart = query->add_subcommand("part", "Documentation and resolved issues touching a part");
  qpart->add_option("--store", query_store, "Storage root of the service")->required();
  qpart->add_option("--assembly", query_assembly, "Assembly ref")->required();
  qpart->add_option("part", query_part, "Part id")->required();
  qpart->callback([&] {
    run = [&] {
      if (!std::filesystem::exists(std::filesystem::path(query_store) / "hwscene.db")) {
        throw Error(ErrorKind::not_found, kModule, "no store at " + query_store);
      }
      Store store(query_store);
      const auto ws = open_workspace(store);
      print_json(to_json(ws->query_by_part(query_assembly, query_part)));
    };
  });

  // serve
  std::string serve_config, serve_host, serve_storage;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "Run the coordination service until SIGINT or SIGTERM");
  serve->add_option("-c,--config", serve_config, "JSON config file; HWSCENE_* variables override it");
  serve->add_option("--host", serve_host, "Listen address");
  serve->add_option("--port", serve_port, "Listen port (0 picks a free one)");
  serve->add_option("--storage", serve_storage, "Storage root");
  serve->callback([&] {
    run = [&] {
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      ServiceConfig config =
          load_service_config(serve_config.empty() ? std::nullopt : std::optional<std::filesystem::path>(serve_config));
      if (!serve_host.empty()) config.host = serve_host;
      if (serve_port >= 0) config.port = serve_port;
      if (!serve_storage.empty()) config.storage_root = serve_storage;
      Service service(config);
      service.start();
      json ready = to_json(service.config());
      ready["port"] = service.port();
      std::cerr << json{{"listening", ready}}.dump() << "\n";
      int sig = 0;
      sigwait(&signals, &sig);
      service.stop();
    };
  });

  // synth
  std::uint64_t synth_seed = 7;
  std::optional<double> synth_scale;
  double synth_noise = 0;
  std::string synth_preset = "default", synth_out, synth_format = "binary";
  int synth_frames = 30;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic capture of the demo rig with known ground truth");
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--scale", synth_scale, "mm per SfM unit; random in [10, 1000] when omitted");
  synth->add_option("--noise", synth_noise, "Tag corner pixel noise (sigma, px)")->capture_default_str();
  synth->add_option("--preset", synth_preset, "default or identity")->check(CLI::IsMember({"default", "identity"}));
  synth->add_option("--video-frames", synth_frames, "Frames in the video bundle")->capture_default_str();
  synth->add_option("--sfm-format", synth_format, "binary or text")->check(CLI::IsMember({"binary", "text"}));
  synth->add_option("-o,--out", synth_out, "Write the members into this directory instead of a tar on stdout");
  synth->callback([&] {
    run = [&] {
      SynthOptions o;
      o.seed = synth_seed;
      o.scale = synth_scale;
      o.noise_px = synth_noise;
      o.identity = synth_preset == "identity";
      o.video_frames = synth_frames;
      const SynthResult r = synthesize(o);
      FileMap files = synth_files(r);
      if (synth_format == "text") {
        for (const char* name : {"cameras", "images", "points3D"}) files.erase(std::string("sfm/") + name + ".bin");
        const SfmTables t = write_sfm_model(r.model, SfmFormat::text);
        files["sfm/cameras.txt"] = t.cameras;
        files["sfm/images.txt"] = t.images;
        files["sfm/points3D.txt"] = t.points3d;
      }
      if (synth_out.empty()) {
        write_output("", write_tar(files));
        return;
      }
      for (const auto& [path, bytes] : files) {
        const auto p = std::filesystem::path(synth_out) / path;
        std::filesystem::create_directories(p.parent_path());
        write_file(p, bytes);
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (run) run();
    return 0;
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.kind())), e.module(), e.what());
  } catch (const json::exception& e) {
    return report_error("schema", kModule, e.what());
  } catch (const std::exception& e) {
    return report_error("internal", kModule, e.what());
  }
}
