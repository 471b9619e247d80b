#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "msv/calibration.hpp"
#include "msv/fusion.hpp"
#include "msv/synthetic_rig.hpp"
#include "msv/target_detect.hpp"

// JSON schema: SI units throughout (metres, radians only inside rotation matrices,
// degrees where a key says so), matrices as row-major flat arrays. Readers accept
// partial objects and keep defaults for absent keys.

namespace msv {

using nlohmann::json;

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

template <typename Derived>
json flat(const Eigen::MatrixBase<Derived>& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

template <int R, int C>
Eigen::Matrix<double, R, C> unflat(const json& a) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(R * C)) {
    throw InvalidArgument("expected an array of " + std::to_string(R * C) + " numbers");
  }
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) m(r, c) = a[static_cast<std::size_t>(r * C + c)].get<double>();
  }
  return m;
}

}  // namespace detail

inline void to_json(json& j, CameraId id) { j = std::string(to_string(id)); }
inline void from_json(const json& j, CameraId& id) { id = parse_camera_id(j.get<std::string>()); }

inline void to_json(json& j, const DistortionCoefficients& d) {
  j = {{"k1", d.k1}, {"k2", d.k2}, {"p1", d.p1}, {"p2", d.p2}, {"k3", d.k3}};
}
inline void from_json(const json& j, DistortionCoefficients& d) {
  detail::read_opt(j, "k1", d.k1);
  detail::read_opt(j, "k2", d.k2);
  detail::read_opt(j, "p1", d.p1);
  detail::read_opt(j, "p2", d.p2);
  detail::read_opt(j, "k3", d.k3);
}

inline void to_json(json& j, const CameraIntrinsics& k) {
  j = {{"width", k.width}, {"height", k.height}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
       {"cy", k.cy}, {"skew", k.skew}, {"distortion", k.distortion}};
}
inline void from_json(const json& j, CameraIntrinsics& k) {
  detail::read_opt(j, "width", k.width);
  detail::read_opt(j, "height", k.height);
  detail::read_opt(j, "fx", k.fx);
  detail::read_opt(j, "fy", k.fy);
  detail::read_opt(j, "cx", k.cx);
  detail::read_opt(j, "cy", k.cy);
  detail::read_opt(j, "skew", k.skew);
  if (j.contains("distortion")) from_json(j.at("distortion"), k.distortion);
  k.validate();
}

/// {"rotation": [9, row-major], "translation": [3, metres]}
inline void to_json(json& j, const RigidPose& p) {
  j = {{"rotation", detail::flat(p.rotation())}, {"translation", detail::flat(p.translation())}};
}
inline void from_json(const json& j, RigidPose& p) {
  p = RigidPose(detail::unflat<3, 3>(j.at("rotation")), detail::unflat<3, 1>(j.at("translation")));
}

inline void to_json(json& j, const CameraSetup& c) { j = {{"intrinsics", c.intrinsics}, {"pose", c.pose}}; }
inline void from_json(const json& j, CameraSetup& c) {
  if (j.contains("intrinsics")) from_json(j.at("intrinsics"), c.intrinsics);
  detail::read_opt(j, "pose", c.pose);
}

inline void to_json(json& j, const RigConfig& r) { j = {{"rgb", r.rgb}, {"thermal", r.thermal}, {"uv", r.uv}}; }
/// Missing cameras keep the default rig's values.
inline void from_json(const json& j, RigConfig& r) {
  if (j.contains("rgb")) from_json(j.at("rgb"), r.rgb);
  if (j.contains("thermal")) from_json(j.at("thermal"), r.thermal);
  if (j.contains("uv")) from_json(j.at("uv"), r.uv);
  r.validate();
}

inline void to_json(json& j, const SpectrumContrast& c) {
  j = {{"plate", c.plate}, {"hole", c.hole}, {"surround", c.surround}};
}
inline void from_json(const json& j, SpectrumContrast& c) {
  detail::read_opt(j, "plate", c.plate);
  detail::read_opt(j, "hole", c.hole);
  detail::read_opt(j, "surround", c.surround);
}

inline void to_json(json& j, const TargetSpec& t) {
  j = {{"rows", t.rows},     {"cols", t.cols}, {"pitch", t.pitch},     {"radius", t.radius},
       {"margin", t.margin}, {"rgb", t.rgb},   {"thermal", t.thermal}, {"uv", t.uv}};
}
inline void from_json(const json& j, TargetSpec& t) {
  detail::read_opt(j, "rows", t.rows);
  detail::read_opt(j, "cols", t.cols);
  detail::read_opt(j, "pitch", t.pitch);
  detail::read_opt(j, "radius", t.radius);
  detail::read_opt(j, "margin", t.margin);
  if (j.contains("rgb")) from_json(j.at("rgb"), t.rgb);
  if (j.contains("thermal")) from_json(j.at("thermal"), t.thermal);
  if (j.contains("uv")) from_json(j.at("uv"), t.uv);
  t.validate();
}

inline void to_json(json& j, const PlaneRect& r) { j = {r.x0, r.y0, r.x1, r.y1}; }
inline void from_json(const json& j, PlaneRect& r) {
  const auto v = detail::unflat<4, 1>(j);
  r = {v[0], v[1], v[2], v[3]};
}

inline void to_json(json& j, const ScenePlane& p) {
  j = {{"pose", p.pose},
       {"extent", p.extent},
       {"albedo", detail::flat(p.albedo)},
       {"albedo_alt", detail::flat(p.albedo_alt)},
       {"checker", p.checker},
       {"thermal", p.thermal},
       {"uv", p.uv}};
}
inline void from_json(const json& j, ScenePlane& p) {
  detail::read_opt(j, "pose", p.pose);
  detail::read_opt(j, "extent", p.extent);
  if (j.contains("albedo")) p.albedo = detail::unflat<3, 1>(j.at("albedo"));
  if (j.contains("albedo_alt")) p.albedo_alt = detail::unflat<3, 1>(j.at("albedo_alt"));
  detail::read_opt(j, "checker", p.checker);
  detail::read_opt(j, "thermal", p.thermal);
  detail::read_opt(j, "uv", p.uv);
}

inline void to_json(json& j, const ScenePatch& p) {
  j = {{"plane", p.plane}, {"region", p.region}, {"intensity", p.intensity}};
}
inline void from_json(const json& j, ScenePatch& p) {
  detail::read_opt(j, "plane", p.plane);
  detail::read_opt(j, "region", p.region);
  detail::read_opt(j, "intensity", p.intensity);
}

inline void to_json(json& j, const NoiseSpec& n) { j = {{"rgb", n.rgb}, {"thermal", n.thermal}, {"uv", n.uv}}; }
inline void from_json(const json& j, NoiseSpec& n) {
  detail::read_opt(j, "rgb", n.rgb);
  detail::read_opt(j, "thermal", n.thermal);
  detail::read_opt(j, "uv", n.uv);
}

inline void to_json(json& j, const SceneSpec& s) {
  j = {{"planes", s.planes},
       {"hidden_uv_patches", s.hidden_uv_patches},
       {"hidden_thermal_patches", s.hidden_thermal_patches},
       {"noise", s.noise},
       {"invalid_depth_fraction", s.invalid_depth_fraction},
       {"background", detail::flat(s.background)}};
}
inline void from_json(const json& j, SceneSpec& s) {
  detail::read_opt(j, "planes", s.planes);
  detail::read_opt(j, "hidden_uv_patches", s.hidden_uv_patches);
  detail::read_opt(j, "hidden_thermal_patches", s.hidden_thermal_patches);
  detail::read_opt(j, "noise", s.noise);
  detail::read_opt(j, "invalid_depth_fraction", s.invalid_depth_fraction);
  if (j.contains("background")) s.background = detail::unflat<3, 1>(j.at("background"));
  s.validate();
}

inline void to_json(json& j, const GridObservation& o) {
  json img = json::array(), obj = json::array();
  for (const auto& p : o.image_points) img.push_back({p.x(), p.y()});
  for (const auto& p : o.object_points) obj.push_back({p.x(), p.y(), p.z()});
  j = {{"view_id", o.view_id}, {"camera", o.camera}, {"rows", o.rows}, {"cols", o.cols},
       {"image_points", img},  {"object_points", obj}};
}
inline void from_json(const json& j, GridObservation& o) {
  o.view_id = j.at("view_id").get<std::string>();
  o.camera = j.at("camera").get<CameraId>();
  o.rows = j.at("rows").get<int>();
  o.cols = j.at("cols").get<int>();
  o.image_points.clear();
  o.object_points.clear();
  for (const auto& p : j.at("image_points")) o.image_points.push_back(detail::unflat<2, 1>(p));
  for (const auto& p : j.at("object_points")) o.object_points.push_back(detail::unflat<3, 1>(p));
}

inline void to_json(json& j, const CameraCalibration& c) {
  json views = json::array();
  for (std::size_t i = 0; i < c.view_ids.size(); ++i) views.push_back({{"id", c.view_ids[i]}, {"pose", c.poses[i]}});
  j = {{"camera", c.camera}, {"intrinsics", c.intrinsics}, {"rms_px", c.rms}, {"views", views}};
}
inline void from_json(const json& j, CameraCalibration& c) {
  c.camera = j.at("camera").get<CameraId>();
  c.intrinsics = j.at("intrinsics").get<CameraIntrinsics>();
  c.rms = j.value("rms_px", 0.0);
  c.view_ids.clear();
  c.poses.clear();
  if (j.contains("views")) {
    for (const auto& v : j.at("views")) {
      c.view_ids.push_back(v.at("id").get<std::string>());
      c.poses.push_back(v.at("pose").get<RigidPose>());
    }
  }
}

inline void to_json(json& j, const RelativeExtrinsics& e) {
  j = {{"source", e.source},
       {"destination", e.destination},
       {"pose", e.pose},
       {"views", e.views},
       {"rotation_spread_deg", e.rotation_spread_deg},
       {"translation_spread_m", e.translation_spread_m}};
}
inline void from_json(const json& j, RelativeExtrinsics& e) {
  e.source = j.at("source").get<CameraId>();
  e.destination = j.at("destination").get<CameraId>();
  e.pose = j.at("pose").get<RigidPose>();
  e.views = j.value("views", 0);
  e.rotation_spread_deg = j.value("rotation_spread_deg", 0.0);
  e.translation_spread_m = j.value("translation_spread_m", 0.0);
}

inline void to_json(json& j, const CalibrationResult& r) {
  json cams = json::object();
  for (const auto& [id, c] : r.cameras) cams[std::string(to_string(id))] = c;
  j = {{"format", "msv-calibration/1"}, {"cameras", cams}, {"extrinsics", r.extrinsics}};
}
inline void from_json(const json& j, CalibrationResult& r) {
  r.cameras.clear();
  for (const auto& [key, value] : j.at("cameras").items()) {
    auto c = value.get<CameraCalibration>();
    if (c.camera != parse_camera_id(key)) throw InvalidArgument("camera entry '" + key + "' holds another camera");
    r.cameras[c.camera] = std::move(c);
  }
  r.extrinsics = j.value("extrinsics", std::vector<RelativeExtrinsics>{});
}

inline json threshold_to_json(const ThresholdSpec& t) {
  if (t.kind == ThresholdSpec::Kind::absolute) return t.value;
  std::ostringstream s;
  s << t.value << '%';
  return s.str();
}

/// Numbers are absolute thresholds; strings such as "95%" are percentiles.
inline ThresholdSpec threshold_from_json(const json& j) {
  if (j.is_number()) {
    auto t = ThresholdSpec::absolute(j.get<double>());
    t.validate();
    return t;
  }
  return parse_threshold(j.get<std::string>());
}

inline void to_json(json& j, const FusionConfig& c) {
  j = {{"threshold_thermal", threshold_to_json(c.thermal)},
       {"threshold_uv", threshold_to_json(c.uv)},
       {"precedence", to_string(c.precedence)},
       {"sharpen_alpha", c.sharpen_alpha}};
}
inline void from_json(const json& j, FusionConfig& c) {
  if (j.contains("threshold_thermal")) c.thermal = threshold_from_json(j.at("threshold_thermal"));
  if (j.contains("threshold_uv")) c.uv = threshold_from_json(j.at("threshold_uv"));
  if (j.contains("precedence")) c.precedence = parse_precedence(j.at("precedence").get<std::string>());
  detail::read_opt(j, "sharpen_alpha", c.sharpen_alpha);
}

namespace io {

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace io

}  // namespace msv
