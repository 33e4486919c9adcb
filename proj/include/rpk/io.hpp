#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rpk/errors.hpp"
#include "rpk/rng.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// One 4D-radar return in the sensor frame. Spherical quantities are derived
// accessors; only Cartesian coordinates and the two radial velocities are
// stored.
struct RadarPoint {
  double x = 0, y = 0, z = 0;  // meters
  double rcs = 0;              // dB
  double v_rel = 0;            // m/s, Doppler relative to the sensor
  double v_r = 0;              // m/s, ego-motion compensated

  double range() const { return std::sqrt(x * x + y * y + z * z); }
  double azimuth() const { return std::atan2(y, x); }
  double elevation() const {
    double r = range();
    return r == 0.0 ? 0.0 : std::asin(z / r);
  }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(rcs) &&
           std::isfinite(v_rel) && std::isfinite(v_r);
  }

  bool operator==(const RadarPoint&) const = default;
};

// One radar scan. Point order carries no meaning; everything downstream is
// required to be invariant to it.
struct RadarFrame {
  std::string frame_id;
  std::optional<std::array<double, 3>> ego_velocity;  // m/s
  std::vector<RadarPoint> points;

  bool operator==(const RadarFrame&) const = default;
};

enum class ObjectClass : int { car = 0, pedestrian = 1, cyclist = 2 };
constexpr int kNumClasses = 3;

inline const char* class_name(int class_id) {
  switch (class_id) {
    case 0: return "car";
    case 1: return "pedestrian";
    case 2: return "cyclist";
    default: throw ValueError("unknown class id " + std::to_string(class_id));
  }
}

inline int class_id_from_name(std::string_view name) {
  if (name == "car") return 0;
  if (name == "pedestrian") return 1;
  if (name == "cyclist") return 2;
  throw ValueError("unknown class name '" + std::string(name) + "'");
}

struct GroundTruthBox {
  double cx = 0, cy = 0, cz = 0;
  double l = 0, w = 0, h = 0;      // > 0
  double yaw = 0;                  // radians in (-pi, pi]
  int class_id = 0;
  std::array<double, 2> velocity{0, 0};  // BEV, scene synthesis only

  void validate() const {
    if (!(l > 0) || !(w > 0) || !(h > 0)) throw ValueError("box sizes must be positive");
    if (!(yaw > -3.14159265358979323847 - 1e-12) || !(yaw <= 3.14159265358979323847 + 1e-12))
      throw ValueError("yaw out of (-pi, pi]");
  }
};

// Decoded rotated 3D box.
struct Detection {
  double cx = 0, cy = 0, cz = 0;
  double l = 0, w = 0, h = 0;
  double yaw = 0;
  int class_id = 0;
  double score = 0;  // in [0, 1]
};

// ---------------------------------------------------------------------------
// Float formatting: shortest representation that round-trips bit-exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

// ---------------------------------------------------------------------------
// Frame CSV format
//
//   # frame_id=<id>                (optional metadata lines)
//   # ego_velocity=<vx>,<vy>,<vz>
//   x,y,z,rcs,v_rel,v_r
//   <point per line, decimal floats, LF endings>
//
// The '#' lines exist so a frame file is self-contained (the pipeline needs
// the ego velocity that produced v_rel); a file without them parses to a
// frame with empty id and no ego velocity.
// ---------------------------------------------------------------------------

constexpr std::string_view kFrameHeader = "x,y,z,rcs,v_rel,v_r";

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline RadarFrame parse_frame(std::string_view text) {
  RadarFrame frame;
  std::size_t pos = 0;
  bool header_seen = false;
  long row = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    if (!header_seen) {
      if (!line.empty() && line.front() == '#') {
        std::string_view meta = line.substr(1);
        while (!meta.empty() && meta.front() == ' ') meta.remove_prefix(1);
        std::size_t eq = meta.find('=');
        if (eq == std::string_view::npos) throw FormatError("malformed metadata line");
        std::string_view key = meta.substr(0, eq);
        std::string_view value = meta.substr(eq + 1);
        if (key == "frame_id") {
          frame.frame_id = std::string(value);
        } else if (key == "ego_velocity") {
          auto parts = detail::split(value, ',');
          if (parts.size() != 3) throw FormatError("ego_velocity needs 3 components");
          std::array<double, 3> ego{};
          for (int i = 0; i < 3; ++i) {
            if (!parse_double(parts[i], ego[i]) || !std::isfinite(ego[i]))
              throw FormatError("bad ego_velocity component");
          }
          frame.ego_velocity = ego;
        } else {
          throw FormatError("unknown metadata key '" + std::string(key) + "'");
        }
        continue;
      }
      if (line != kFrameHeader) {
        throw FormatError("bad frame header: expected '" + std::string(kFrameHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty() && pos >= text.size()) break;  // trailing newline
    ++row;
    auto fields = detail::split(line, ',');
    if (fields.size() != 6) throw ValueError("expected 6 fields", row);
    double v[6];
    for (int i = 0; i < 6; ++i) {
      if (!parse_double(fields[i], v[i])) throw ValueError("non-numeric field", row);
      if (!std::isfinite(v[i])) throw ValueError("non-finite field", row);
    }
    frame.points.push_back(RadarPoint{v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  if (!header_seen) throw FormatError("missing frame header");
  return frame;
}

inline std::string serialize_frame(const RadarFrame& frame) {
  std::string out;
  if (!frame.frame_id.empty()) out += "# frame_id=" + frame.frame_id + "\n";
  if (frame.ego_velocity) {
    out += "# ego_velocity=" + format_double((*frame.ego_velocity)[0]) + "," +
           format_double((*frame.ego_velocity)[1]) + "," +
           format_double((*frame.ego_velocity)[2]) + "\n";
  }
  out += std::string(kFrameHeader) + "\n";
  for (const RadarPoint& p : frame.points) {
    out += format_double(p.x) + "," + format_double(p.y) + "," + format_double(p.z) + "," +
           format_double(p.rcs) + "," + format_double(p.v_rel) + "," + format_double(p.v_r) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines for labels and detections
// ---------------------------------------------------------------------------

inline std::string serialize_labels(const std::vector<GroundTruthBox>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    nlohmann::ordered_json j;
    j["cx"] = b.cx;
    j["cy"] = b.cy;
    j["cz"] = b.cz;
    j["l"] = b.l;
    j["w"] = b.w;
    j["h"] = b.h;
    j["yaw"] = b.yaw;
    j["class"] = class_name(b.class_id);
    j["vx"] = b.velocity[0];
    j["vy"] = b.velocity[1];
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<GroundTruthBox> parse_labels(std::string_view text) {
  std::vector<GroundTruthBox> boxes;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    GroundTruthBox b;
    b.cx = j.at("cx");
    b.cy = j.at("cy");
    b.cz = j.at("cz");
    b.l = j.at("l");
    b.w = j.at("w");
    b.h = j.at("h");
    b.yaw = j.at("yaw");
    b.class_id = class_id_from_name(j.at("class").get<std::string>());
    b.velocity = {j.value("vx", 0.0), j.value("vy", 0.0)};
    b.validate();
    boxes.push_back(b);
  }
  return boxes;
}

inline std::string serialize_detections(const std::vector<Detection>& dets) {
  std::string out;
  for (const auto& d : dets) {
    nlohmann::ordered_json j;
    j["cx"] = d.cx;
    j["cy"] = d.cy;
    j["cz"] = d.cz;
    j["l"] = d.l;
    j["w"] = d.w;
    j["h"] = d.h;
    j["yaw"] = d.yaw;
    j["class"] = class_name(d.class_id);
    j["score"] = d.score;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<Detection> parse_detections(std::string_view text) {
  std::vector<Detection> dets;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Detection d;
    d.cx = j.at("cx");
    d.cy = j.at("cy");
    d.cz = j.at("cz");
    d.l = j.at("l");
    d.w = j.at("w");
    d.h = j.at("h");
    d.yaw = j.at("yaw");
    d.class_id = class_id_from_name(j.at("class").get<std::string>());
    d.score = j.at("score");
    dets.push_back(d);
  }
  return dets;
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IOError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic scene generation
// ---------------------------------------------------------------------------

// Everything the generator needs to synthesize one labeled scene. Same seed,
// same output, bit for bit.
struct SceneSpec {
  std::array<int, kNumClasses> objects_per_class{2, 2, 1};
  std::array<double, 2> x_range{5.0, 48.0};   // object center range, meters
  std::array<double, 2> y_range{-20.0, 20.0};
  std::array<double, 2> z_range{-1.0, 1.0};
  std::array<double, 2> speed_range{0.0, 8.0};      // m/s
  std::array<int, 2> points_per_object{6, 14};
  int clutter_points = 40;
  double sigma_xyz = 0.05;     // positional noise std, meters
  double sigma_v = 0.1;        // radial-velocity noise std, m/s (truncated at 4 sigma)
  double clutter_v_sigma = 0.5;
  std::array<double, 2> rcs_range{-5.0, 25.0};
  std::array<double, 3> ego_velocity{0.0, 0.0, 0.0};
  double min_range = 1.0;      // reject centers closer to the sensor than this
  std::uint64_t seed = 0;

  void validate() const {
    for (int n : objects_per_class)
      if (n < 0) throw ValueError("objects_per_class must be >= 0");
    if (clutter_points < 0) throw ValueError("clutter_points must be >= 0");
    if (!(x_range[0] < x_range[1]) || !(y_range[0] < y_range[1]) || !(z_range[0] < z_range[1]))
      throw ValueError("degenerate position range");
    if (points_per_object[0] < 0 || points_per_object[1] < points_per_object[0])
      throw ValueError("degenerate points_per_object range");
    if (speed_range[0] < 0 || speed_range[1] < speed_range[0])
      throw ValueError("degenerate speed range");
  }
};

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"objects_per_class", s.objects_per_class},
                     {"x_range", s.x_range},
                     {"y_range", s.y_range},
                     {"z_range", s.z_range},
                     {"speed_range", s.speed_range},
                     {"points_per_object", s.points_per_object},
                     {"clutter_points", s.clutter_points},
                     {"sigma_xyz", s.sigma_xyz},
                     {"sigma_v", s.sigma_v},
                     {"clutter_v_sigma", s.clutter_v_sigma},
                     {"rcs_range", s.rcs_range},
                     {"ego_velocity", s.ego_velocity},
                     {"min_range", s.min_range},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  SceneSpec d;
  s.objects_per_class = j.value("objects_per_class", d.objects_per_class);
  s.x_range = j.value("x_range", d.x_range);
  s.y_range = j.value("y_range", d.y_range);
  s.z_range = j.value("z_range", d.z_range);
  s.speed_range = j.value("speed_range", d.speed_range);
  s.points_per_object = j.value("points_per_object", d.points_per_object);
  s.clutter_points = j.value("clutter_points", d.clutter_points);
  s.sigma_xyz = j.value("sigma_xyz", d.sigma_xyz);
  s.sigma_v = j.value("sigma_v", d.sigma_v);
  s.clutter_v_sigma = j.value("clutter_v_sigma", d.clutter_v_sigma);
  s.rcs_range = j.value("rcs_range", d.rcs_range);
  s.ego_velocity = j.value("ego_velocity", d.ego_velocity);
  s.min_range = j.value("min_range", d.min_range);
  s.seed = j.value("seed", d.seed);
}

namespace detail {

// Class-typical BEV sizes (l, w, h), mirroring common automotive conventions.
inline std::array<double, 3> class_size(int class_id) {
  switch (class_id) {
    case 0: return {3.9, 1.6, 1.56};
    case 1: return {0.8, 0.6, 1.73};
    default: return {1.76, 0.6, 1.73};
  }
}

// v_rel = v_r - (ego . p)/|p|, the inverse of the compensation convention.
inline double relative_from_absolute(double v_r, const RadarPoint& p,
                                     const std::array<double, 3>& ego) {
  double norm = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  if (norm == 0.0) return v_r;
  return v_r - (ego[0] * p.x + ego[1] * p.y + ego[2] * p.z) / norm;
}

}  // namespace detail

// Synthesizes one scene with physically consistent radial velocities: every
// object point carries v_r = (v . p_hat_xy) evaluated at the point's final
// position, plus truncated Gaussian noise bounded by 4*sigma_v. Object points
// sample the side of the box footprint facing the sensor (radar sees
// surfaces), then stay inside the footprint after noise.
inline std::pair<RadarFrame, std::vector<GroundTruthBox>> generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  RadarFrame frame;
  frame.ego_velocity = spec.ego_velocity;
  std::vector<GroundTruthBox> boxes;

  constexpr double kPi = 3.14159265358979323847;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int i = 0; i < spec.objects_per_class[static_cast<std::size_t>(cls)]; ++i) {
      GroundTruthBox box;
      box.class_id = cls;
      auto size = detail::class_size(cls);
      box.l = size[0];
      box.w = size[1];
      box.h = size[2];
      bool placed = false;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        box.cx = rng.uniform(spec.x_range[0], spec.x_range[1]);
        box.cy = rng.uniform(spec.y_range[0], spec.y_range[1]);
        if (std::hypot(box.cx, box.cy) >= spec.min_range) {
          placed = true;
          break;
        }
      }
      if (!placed)
        throw RejectedSample("position range forces objects onto the sensor origin");
      box.cz = rng.uniform(spec.z_range[0], spec.z_range[1]);
      box.yaw = rng.uniform(-kPi, kPi);
      if (box.yaw <= -kPi) box.yaw = kPi;
      double speed = rng.uniform(spec.speed_range[0], spec.speed_range[1]);
      double heading = rng.uniform(-kPi, kPi);
      box.velocity = {speed * std::cos(heading), speed * std::sin(heading)};

      int lo = spec.points_per_object[0];
      int hi = spec.points_per_object[1];
      int n_pts = lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
      double cos_yaw = std::cos(box.yaw);
      double sin_yaw = std::sin(box.yaw);
      double half_l = box.l / 2.0;
      double half_w = box.w / 2.0;
      double perimeter = 2.0 * (box.l + box.w);
      for (int k = 0; k < n_pts; ++k) {
        // Box-frame perimeter point whose outward normal faces the sensor.
        double u = 0, v = 0, nx = 0, ny = 0;
        for (int attempt = 0; attempt < 64; ++attempt) {
          double t = rng.uniform(0.0, perimeter);
          if (t < box.l) {
            u = t - half_l; v = half_w; nx = 0; ny = 1;
          } else if (t < box.l + box.w) {
            u = half_l; v = (t - box.l) - half_w; nx = 1; ny = 0;
          } else if (t < 2 * box.l + box.w) {
            u = (t - box.l - box.w) - half_l; v = -half_w; nx = 0; ny = -1;
          } else {
            u = -half_l; v = (t - 2 * box.l - box.w) - half_w; nx = -1; ny = 0;
          }
          double wx = box.cx + cos_yaw * u - sin_yaw * v;
          double wy = box.cy + sin_yaw * u + cos_yaw * v;
          double wnx = cos_yaw * nx - sin_yaw * ny;
          double wny = sin_yaw * nx + cos_yaw * ny;
          if (wnx * (-wx) + wny * (-wy) > 0.0) break;  // faces the origin
        }
        u += rng.normal(0.0, spec.sigma_xyz);
        v += rng.normal(0.0, spec.sigma_xyz);
        u = std::min(std::max(u, -half_l), half_l);
        v = std::min(std::max(v, -half_w), half_w);
        RadarPoint p;
        p.x = box.cx + cos_yaw * u - sin_yaw * v;
        p.y = box.cy + sin_yaw * u + cos_yaw * v;
        p.z = rng.uniform(box.cz - box.h / 2.0, box.cz + box.h / 2.0);
        p.rcs = rng.uniform(spec.rcs_range[0], spec.rcs_range[1]);
        double range_xy = std::hypot(p.x, p.y);
        double v_true = range_xy == 0.0
                            ? 0.0
                            : (box.velocity[0] * p.x + box.velocity[1] * p.y) / range_xy;
        p.v_r = v_true + (spec.sigma_v > 0 ? rng.truncated_normal(0.0, spec.sigma_v, 4.0) : 0.0);
        p.v_rel = detail::relative_from_absolute(p.v_r, p, spec.ego_velocity);
        frame.points.push_back(p);
      }
      boxes.push_back(box);
    }
  }

  for (int k = 0; k < spec.clutter_points; ++k) {
    RadarPoint p;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      p.x = rng.uniform(spec.x_range[0], spec.x_range[1]);
      p.y = rng.uniform(spec.y_range[0], spec.y_range[1]);
      if (std::hypot(p.x, p.y) >= spec.min_range) break;
    }
    p.z = rng.uniform(spec.z_range[0], spec.z_range[1]);
    p.rcs = rng.uniform(spec.rcs_range[0], spec.rcs_range[1]);
    p.v_r = rng.normal(0.0, spec.clutter_v_sigma);
    p.v_rel = detail::relative_from_absolute(p.v_r, p, spec.ego_velocity);
    frame.points.push_back(p);
  }

  return {std::move(frame), std::move(boxes)};
}

// ---------------------------------------------------------------------------
// Augmentation. Pure functions; radial magnitudes are reflection-invariant,
// so flips leave velocities untouched. Scaling moves geometry only.
// ---------------------------------------------------------------------------

inline RadarFrame augment_flip_y(const RadarFrame& frame) {
  RadarFrame out = frame;
  for (RadarPoint& p : out.points) p.y = -p.y;
  if (out.ego_velocity) (*out.ego_velocity)[1] = -(*out.ego_velocity)[1];
  return out;
}

inline RadarFrame augment_scale(const RadarFrame& frame, double s) {
  if (!(s > 0.0)) throw ValueError("scale factor must be positive");
  RadarFrame out = frame;
  for (RadarPoint& p : out.points) {
    p.x *= s;
    p.y *= s;
    p.z *= s;
  }
  return out;
}

}  // namespace rpk
