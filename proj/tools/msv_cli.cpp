// msv: render, calibrate, register and fuse multispectral frames from the command line.
//
//   msv render    --out run            synthetic calibration views, scene frames, ground truth
//   msv calibrate --out run            run/calib/view_*  -> run/calibration.json
//   msv register  --out run            run/scene/frame_* -> run/aligned/frame_*
//   msv fuse      --out run            run/aligned/frame_* -> run/fused/frame_*/{fused.png,cloud.ply}
//   msv pipeline  --out run            all four stages
//
// Exit codes: 0 success, 1 other library error, 2 configuration / file errors,
// 3 calibration failures and calibration/frame mismatches.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "msv/io/image_io.hpp"
#include "msv/io/json.hpp"
#include "msv/io/ply.hpp"
#include "msv/msv.hpp"

namespace fs = std::filesystem;
using namespace msv;

namespace {

/// Configuration and file-format problems (exit 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Calibration missing a camera or not matching the frames it is applied to (exit 3).
struct CalibrationMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  RigConfig rig = default_rig();
  TargetSpec target;
  SceneSpec scene = hidden_feature_scene();
  int calibration_views = 10;
  double calibration_noise = 0.0;
  int scene_frames = 1;
  int supersample = 2;
  CalibrationOptions calibration;
  FusionConfig fusion;
  io::PlyFormat ply_format = io::PlyFormat::binary_little_endian;
  std::uint64_t seed = 0;
  fs::path out = "msv_out";
};

/// Value of `key`: an inline object, or a path (relative to the config file) to a JSON document.
template <typename T>
void load_section(const json& j, const char* key, const fs::path& base, T& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (v.is_string()) {
    const fs::path p = base / v.get<std::string>();
    if (!fs::exists(p)) throw ConfigError(std::string(key) + " file not found: " + p.string());
    out = io::read_json(p).get<T>();
  } else {
    out = v.get<T>();
  }
}

SceneSpec scene_preset(const std::string& name) {
  if (name == "hidden_feature") return hidden_feature_scene();
  if (name == "full_frame_plane") return full_frame_plane_scene(1.0);
  if (name == "empty_depth") {
    SceneSpec s = full_frame_plane_scene(1.0);
    s.invalid_depth_fraction = 1.0;
    return s;
  }
  throw ConfigError("unknown scene preset '" + name + "'");
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  const json j = io::read_json(path);
  const fs::path base = fs::path(path).parent_path();
  try {
    load_section(j, "rig", base, cfg.rig);
    load_section(j, "target", base, cfg.target);
    if (j.contains("scene_preset")) cfg.scene = scene_preset(j.at("scene_preset").get<std::string>());
    load_section(j, "scene", base, cfg.scene);
    load_section(j, "fusion", base, cfg.fusion);
    cfg.calibration_views = j.value("calibration_views", cfg.calibration_views);
    cfg.calibration_noise = j.value("calibration_noise", cfg.calibration_noise);
    cfg.scene_frames = j.value("scene_frames", cfg.scene_frames);
    cfg.supersample = j.value("supersample", cfg.supersample);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("out")) cfg.out = base / j.at("out").get<std::string>();
    if (j.contains("ply_format")) cfg.ply_format = io::parse_ply_format(j.at("ply_format").get<std::string>());
    if (j.contains("thermal_fix_k3")) cfg.calibration.refine[CameraId::thermal].fix_k3 = j.at("thermal_fix_k3").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError("bad config " + path + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError("bad config " + path + ": " + e.what());
  }
  if (cfg.calibration_views < 1 || cfg.calibration_views > 14) throw ConfigError("calibration_views must be in [1, 14]");
  if (cfg.scene_frames < 0) throw ConfigError("scene_frames must be non-negative");
  return cfg;
}

std::string numbered(const char* prefix, int i, int width) {
  std::ostringstream s;
  s << prefix << std::setw(width) << std::setfill('0') << i;
  return s.str();
}

/// Subdirectories of `dir` whose names start with `prefix`, in name order.
std::vector<fs::path> frame_dirs(const fs::path& dir, const std::string& prefix) {
  if (!fs::is_directory(dir)) throw IoError("frame directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && e.path().filename().string().rfind(prefix, 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_frame(const fs::path& dir, const MultispectralFrame& f) {
  fs::create_directories(dir);
  io::write_png(dir / "rgb.png", f.rgb);
  io::write_pgm(dir / "thermal.pgm", f.thermal);
  io::write_pgm(dir / "uv.pgm", f.uv);
  io::write_pgm(dir / "depth.pgm", f.depth);
}

MultispectralFrame read_frame(const fs::path& dir) {
  MultispectralFrame f;
  f.rgb = io::read_png_rgb(dir / "rgb.png");
  f.thermal = io::read_pgm<std::uint16_t>(dir / "thermal.pgm");
  f.uv = io::read_pgm<std::uint8_t>(dir / "uv.pgm");
  f.depth = io::read_pgm<std::uint16_t>(dir / "depth.pgm");
  return f;
}

void cmd_render(const PipelineConfig& cfg) {
  cfg.rig.validate();
  cfg.scene.validate();
  const fs::path out = cfg.out;
  json truth = {{"seed", cfg.seed}, {"rig", cfg.rig}, {"target", cfg.target}, {"scene", cfg.scene}};

  const auto poses = default_calibration_views(cfg.target, cfg.calibration_views);
  json views = json::array();
  for (int v = 0; v < cfg.calibration_views; ++v) {
    const auto name = numbered("view_", v, 2);
    const auto f = render_calibration_frame(cfg.rig, cfg.target, poses[v], cfg.calibration_noise, cfg.seed,
                                            static_cast<std::uint64_t>(v));
    write_frame(out / "calib" / name, f);
    views.push_back({{"id", name}, {"target_to_rig", poses[v]}});
  }
  truth["calibration_views"] = views;

  json frames = json::array();
  for (int t = 0; t < cfg.scene_frames; ++t) {
    const auto name = numbered("frame_", t, 3);
    write_frame(out / "scene" / name, render_scene(cfg.scene, cfg.rig, cfg.seed, static_cast<std::uint64_t>(t), cfg.supersample));
    frames.push_back(name);
  }
  truth["scene_frames"] = frames;

  json footprints = json::array();
  const auto record = [&](const std::vector<ScenePatch>& patches, const char* kind) {
    for (std::size_t i = 0; i < patches.size(); ++i) {
      const auto file = std::string("footprint_") + kind + "_" + std::to_string(i) + ".pgm";
      Image8 mask = patch_footprint(cfg.scene, cfg.rig, patches[i]);
      for (auto& m : mask.data()) m = m ? 255 : 0;
      fs::create_directories(out / "ground_truth");
      io::write_pgm(out / "ground_truth" / file, mask);
      footprints.push_back({{"kind", kind}, {"patch", patches[i]}, {"mask", "ground_truth/" + file}});
    }
  };
  record(cfg.scene.hidden_uv_patches, "uv");
  record(cfg.scene.hidden_thermal_patches, "thermal");
  truth["footprints"] = footprints;
  io::write_json(out / "ground_truth.json", truth);
  std::cout << "rendered " << cfg.calibration_views << " calibration views and " << cfg.scene_frames
            << " scene frames into " << out.string() << '\n';
}

void cmd_calibrate(const PipelineConfig& cfg, const fs::path& frames_dir) {
  std::map<CameraId, CameraObservations> data;
  const auto dirs = frame_dirs(frames_dir, "view_");
  for (const auto& dir : dirs) {
    const auto id = dir.filename().string();
    const auto f = read_frame(dir);
    const auto add = [&](CameraId cam, const auto& image) {
      auto& obs = data[cam];
      obs.width = image.width();
      obs.height = image.height();
      try {
        obs.views.push_back(detect_grid(image, cfg.target, id, cam));
      } catch (const WrongBlobCount& e) {
        std::cerr << "rejected " << id << " (" << to_string(cam) << "): " << e.what() << '\n';
      } catch (const AmbiguousGrid& e) {
        std::cerr << "rejected " << id << " (" << to_string(cam) << "): " << e.what() << '\n';
      }
    };
    add(CameraId::rgb, to_gray(f.rgb));
    add(CameraId::thermal, f.thermal);
    add(CameraId::uv, f.uv);
  }
  if (dirs.empty()) throw InsufficientViews("no view_* directories in " + frames_dir.string());

  std::map<CameraId, RefineReport> reports;
  const auto result = calibrate_rig(data, cfg.calibration, &reports);
  for (const auto& [id, cal] : result.cameras) {
    std::cout << std::left << std::setw(8) << to_string(id) << " rms " << std::scientific << std::setprecision(3)
              << cal.rms << " px over " << cal.view_ids.size() << " views\n";
  }
  for (const auto& e : result.extrinsics) {
    std::cout << to_string(e.source) << "->" << to_string(e.destination) << " from " << e.views
              << " shared views, spread " << e.rotation_spread_deg << " deg / " << e.translation_spread_m << " m\n";
  }
  std::cout.unsetf(std::ios::floatfield);
  std::cout << std::setprecision(6);
  fs::create_directories(cfg.out);
  io::write_json(cfg.out / "calibration.json", result);
  std::cout << "wrote " << (cfg.out / "calibration.json").string() << '\n';
}

CalibrationResult load_calibration(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("calibration file not found: " + path.string());
  const json j = io::read_json(path);
  try {
    return j.get<CalibrationResult>();
  } catch (const json::exception& e) {
    throw ConfigError("bad calibration " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw CalibrationMismatch("calibration " + path.string() + ": " + e.what());
  }
}

RegistrationModel registration_model(const CalibrationResult& cal, const fs::path& path) {
  try {
    return RegistrationModel::from(cal);
  } catch (const InvalidArgument& e) {
    throw CalibrationMismatch("calibration " + path.string() + " does not cover the rig: " + e.what());
  }
}

void check_geometry(const MultispectralFrame& f, const RegistrationModel& m, const fs::path& dir) {
  const auto check = [&](int w, int h, const CameraIntrinsics& k, const char* cam) {
    if (w != k.width || h != k.height) {
      std::ostringstream s;
      s << dir.string() << ": " << cam << " raster is " << w << "x" << h << " but its calibration is " << k.width << "x"
        << k.height;
      throw CalibrationMismatch(s.str());
    }
  };
  check(f.rgb.width(), f.rgb.height(), m.rgb, "rgb");
  check(f.depth.width(), f.depth.height(), m.rgb, "depth");
  check(f.thermal.width(), f.thermal.height(), m.thermal, "thermal");
  check(f.uv.width(), f.uv.height(), m.uv, "uv");
}

void cmd_register(const PipelineConfig& cfg, const fs::path& frames_dir, const fs::path& calibration) {
  const auto cal = load_calibration(calibration);
  const auto model = registration_model(cal, calibration);
  for (const auto& dir : frame_dirs(frames_dir, "frame_")) {
    const auto f = read_frame(dir);
    check_geometry(f, model, dir);
    const auto aligned = align_frame(f, model);
    const fs::path out = cfg.out / "aligned" / dir.filename();
    fs::create_directories(out);
    io::write_png(out / "rgb.png", aligned.rgb);
    io::write_pgm(out / "thermal.pgm", aligned.thermal);
    io::write_pgm(out / "uv.pgm", aligned.uv);
    io::write_pgm(out / "depth.pgm", f.depth);
    Image8 bad = aligned.bad_points;
    std::size_t n_bad = 0;
    for (auto& b : bad.data()) {
      n_bad += b != 0;
      b = b ? 255 : 0;
    }
    io::write_pgm(out / "bad_points.pgm", bad);
    std::cout << dir.filename().string() << ": " << n_bad << " bad points\n";
  }
}

void cmd_fuse(const PipelineConfig& cfg, const fs::path& aligned_dir, const fs::path& calibration) {
  const auto cal = load_calibration(calibration);
  const auto model = registration_model(cal, calibration);
  for (const auto& dir : frame_dirs(aligned_dir, "frame_")) {
    const auto rgb = io::read_png_rgb(dir / "rgb.png");
    const auto thermal = io::read_pgm<std::uint16_t>(dir / "thermal.pgm");
    const auto uv = io::read_pgm<std::uint8_t>(dir / "uv.pgm");
    const auto depth = io::read_pgm<std::uint16_t>(dir / "depth.pgm");
    const auto bad = io::read_pgm<std::uint8_t>(dir / "bad_points.pgm");
    if (rgb.width() != model.rgb.width || rgb.height() != model.rgb.height || !depth.same_shape(thermal) ||
        depth.width() != rgb.width() || depth.height() != rgb.height()) {
      throw CalibrationMismatch(dir.string() + ": aligned rasters do not match the RGB calibration");
    }
    Image8 fused = rgb;
    try {
      const auto f = highlight(rgb, thermal, uv, bad, cfg.fusion);
      fused = f.rgb;
      std::cout << dir.filename().string() << ": thresholds thermal " << f.thermal_threshold << " uv " << f.uv_threshold
                << '\n';
    } catch (const AllBadPoints&) {
      std::cerr << dir.filename().string() << ": every pixel is a bad point; RGB kept\n";
    }
    const auto cloud = build_point_cloud(depth, fused, thermal, uv, model.rgb);
    const fs::path out = cfg.out / "fused" / dir.filename();
    fs::create_directories(out);
    io::write_png(out / "fused.png", fused);
    io::write_ply(out / "cloud.ply", cloud, cfg.ply_format);
    std::cout << dir.filename().string() << ": " << cloud.size() << " points\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multispectral RGB / thermal / UV / depth calibration, registration and fusion"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, threshold_uv, threshold_thermal, precedence, ply_format;
  std::string frames_dir, calibration_path, aligned_dir;
  std::uint64_t seed = 0;
  int views = 0, scene_frames = -1;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random draw (default 0)");
  app.add_option("--config", config_path, "Pipeline configuration JSON");
  app.add_option("--out", out_dir, "Output directory");

  auto* render = app.add_subcommand("render", "Render calibration views, scene frames and ground truth");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate intrinsics and extrinsics from rendered views");
  auto* reg = app.add_subcommand("register", "Align thermal and UV frames to the RGB camera");
  auto* fuse = app.add_subcommand("fuse", "Highlight hidden features and build point clouds");
  auto* pipeline = app.add_subcommand("pipeline", "render, calibrate, register and fuse in one run");

  for (auto* sub : {render, pipeline}) {
    sub->add_option("--views", views, "Number of calibration views (1-14)");
    sub->add_option("--scene-frames", scene_frames, "Number of scene frames");
  }
  for (auto* sub : {calibrate, reg}) sub->add_option("--frames", frames_dir, "Directory of view_* / frame_* folders");
  for (auto* sub : {reg, fuse}) sub->add_option("--calibration", calibration_path, "Calibration JSON");
  fuse->add_option("--aligned", aligned_dir, "Directory of aligned frame_* folders");
  for (auto* sub : {fuse, pipeline}) {
    sub->add_option("--threshold-uv", threshold_uv, "Absolute value or percentile such as 95%");
    sub->add_option("--threshold-thermal", threshold_thermal, "Absolute value or percentile such as 95%");
    sub->add_option("--precedence", precedence, "thermal_over_uv or uv_over_thermal");
    sub->add_option("--ply-format", ply_format, "binary or ascii");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    PipelineConfig cfg = load_config(config_path);
    if (seed_opt->count()) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (views) cfg.calibration_views = views;
    if (views < 0 || views > 14) throw ConfigError("--views must be in [1, 14]");
    if (scene_frames >= 0) cfg.scene_frames = scene_frames;
    try {
      if (!threshold_uv.empty()) cfg.fusion.uv = parse_threshold(threshold_uv);
      if (!threshold_thermal.empty()) cfg.fusion.thermal = parse_threshold(threshold_thermal);
      if (!precedence.empty()) cfg.fusion.precedence = parse_precedence(precedence);
      if (!ply_format.empty()) cfg.ply_format = io::parse_ply_format(ply_format);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    const fs::path frames = frames_dir.empty() ? fs::path() : fs::path(frames_dir);
    const fs::path calibration = calibration_path.empty() ? cfg.out / "calibration.json" : fs::path(calibration_path);

    if (*render || *pipeline) cmd_render(cfg);
    if (*calibrate || *pipeline) cmd_calibrate(cfg, frames.empty() ? cfg.out / "calib" : frames);
    if (*reg || *pipeline) cmd_register(cfg, frames.empty() ? cfg.out / "scene" : frames, calibration);
    if (*fuse || *pipeline) cmd_fuse(cfg, aligned_dir.empty() ? cfg.out / "aligned" : fs::path(aligned_dir), calibration);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const EmptyScene& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const CalibrationMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const InsufficientViews& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const IllConditioned& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const DegenerateConfiguration& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
