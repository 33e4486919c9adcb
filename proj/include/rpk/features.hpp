#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpk/errors.hpp"
#include "rpk/io.hpp"
#include "rpk/pillars.hpp"
#include "rpk/tensor.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Feature-set selection. Channel order is fixed by declaration order below;
// the decomposed variants contribute an x and a y column each.
// The default set {x, y, z, rcs, v_rel, v_r, v_r_x, v_r_y} has 8 channels.
// ---------------------------------------------------------------------------
struct FeatureSetConfig {
  bool v_rel = true;
  bool v_r = true;
  bool v_rel_xy = false;
  bool v_r_xy = true;
  bool v_rel_m = false;
  bool v_r_m = false;
  bool v_rel_xy_m = false;
  bool v_r_xy_m = false;

  void validate() const {
    if (v_rel_m && !v_rel) throw ConfigError("v_rel_m requires v_rel");
    if (v_r_m && !v_r) throw ConfigError("v_r_m requires v_r");
    if (v_rel_xy_m && !v_rel_xy) throw ConfigError("v_rel_xy_m requires v_rel_xy");
    if (v_r_xy_m && !v_r_xy) throw ConfigError("v_r_xy_m requires v_r_xy");
  }

  bool any_offset() const { return v_rel_m || v_r_m || v_rel_xy_m || v_r_xy_m; }

  std::vector<std::string> channel_names() const {
    std::vector<std::string> names{"x", "y", "z", "rcs"};
    if (v_rel) names.push_back("v_rel");
    if (v_r) names.push_back("v_r");
    if (v_rel_xy) { names.push_back("v_rel_x"); names.push_back("v_rel_y"); }
    if (v_r_xy) { names.push_back("v_r_x"); names.push_back("v_r_y"); }
    if (v_rel_m) names.push_back("v_rel_m");
    if (v_r_m) names.push_back("v_r_m");
    if (v_rel_xy_m) { names.push_back("v_rel_x_m"); names.push_back("v_rel_y_m"); }
    if (v_r_xy_m) { names.push_back("v_r_x_m"); names.push_back("v_r_y_m"); }
    return names;
  }

  std::size_t channel_count() const { return channel_names().size(); }
};

inline void to_json(nlohmann::json& j, const FeatureSetConfig& f) {
  j = nlohmann::json{{"v_rel", f.v_rel},         {"v_r", f.v_r},
                     {"v_rel_xy", f.v_rel_xy},   {"v_r_xy", f.v_r_xy},
                     {"v_rel_m", f.v_rel_m},     {"v_r_m", f.v_r_m},
                     {"v_rel_xy_m", f.v_rel_xy_m}, {"v_r_xy_m", f.v_r_xy_m}};
}

inline void from_json(const nlohmann::json& j, FeatureSetConfig& f) {
  FeatureSetConfig d;
  f.v_rel = j.value("v_rel", d.v_rel);
  f.v_r = j.value("v_r", d.v_r);
  f.v_rel_xy = j.value("v_rel_xy", d.v_rel_xy);
  f.v_r_xy = j.value("v_r_xy", d.v_r_xy);
  f.v_rel_m = j.value("v_rel_m", d.v_rel_m);
  f.v_r_m = j.value("v_r_m", d.v_r_m);
  f.v_rel_xy_m = j.value("v_rel_xy_m", d.v_rel_xy_m);
  f.v_r_xy_m = j.value("v_r_xy_m", d.v_r_xy_m);
}

// ---------------------------------------------------------------------------
// Per-point feature rows (double precision; the encoder casts to the
// pipeline scalar type). `bearing` holds beta = atan2(y, x) per row;
// `degenerate` marks rows whose bearing is undefined (point on the z axis).
// ---------------------------------------------------------------------------
struct PointFeatures {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;  // row-major rows x cols
  std::vector<std::string> channels;
  std::vector<double> bearing;
  std::vector<std::uint8_t> degenerate;

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// Core velocity operations
// ---------------------------------------------------------------------------

// v_r = v_rel + (ego . p)/|p|. Positive radial velocity means moving away
// from the sensor; a stationary world point maps to v_r = 0.
inline double compensate_ego(double v_rel, const std::array<double, 3>& position,
                             const std::array<double, 3>& ego_velocity) {
  double norm = std::sqrt(position[0] * position[0] + position[1] * position[1] +
                          position[2] * position[2]);
  if (norm == 0.0) throw DegenerateGeometry("cannot compensate a point at the sensor origin");
  double dot = ego_velocity[0] * position[0] + ego_velocity[1] * position[1] +
               ego_velocity[2] * position[2];
  return v_rel + dot / norm;
}

struct RadialDecomposition {
  double v_x = 0;
  double v_y = 0;
  bool degenerate = false;  // bearing undefined (x = y = 0)
};

// Full-quadrant evaluation of v_x = cos(beta) * v, v_y = sin(beta) * v with
// beta = atan2(y, x). Implemented as v * x / r and v * y / r, which preserves
// v_x^2 + v_y^2 = v^2 in every quadrant.
inline RadialDecomposition decompose_radial(double x, double y, double v) {
  double r = std::hypot(x, y);
  if (r == 0.0) return {0.0, 0.0, true};
  return {v * x / r, v * y / r, false};
}

// Per-point offsets from the per-pillar mean of `values` (indexed by source
// point). The mean is accumulated in key-sorted order so results do not
// depend on input permutation. With `pre_cap` (the default) the mean runs
// over every in-range point of the pillar, including points later dropped by
// the per-pillar cap; otherwise only retained points contribute.
// Out-of-range points get offset 0.
inline std::vector<double> pillar_velocity_offsets(const std::vector<double>& values,
                                                   const PillarAssignment& asn,
                                                   bool pre_cap = true) {
  if (values.size() != asn.point_pillar.size())
    throw ShapeError("pillar_velocity_offsets: values must cover all points");
  std::vector<double> out(values.size(), 0.0);
  for (std::size_t pi = 0; pi < asn.pillar_points.size(); ++pi) {
    const auto& pts = asn.pillar_points[pi];
    std::size_t n = pre_cap ? pts.size() : std::min<std::size_t>(pts.size(), asn.cap);
    if (n == 0) continue;
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) sum += values[pts[s]];
    double mean = sum / static_cast<double>(n);
    for (std::size_t s = 0; s < pts.size(); ++s) out[pts[s]] = values[pts[s]] - mean;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature assembly. Without an assignment the rows follow the input point
// order over all points; with one, the rows are the retained points in
// canonical (pillar, slot) order, which is what the rest of the pipeline
// consumes. Offset (m) channels require the assignment.
// ---------------------------------------------------------------------------
inline PointFeatures assemble_features(const RadarFrame& frame, const FeatureSetConfig& cfg,
                                       const PillarAssignment* asn = nullptr,
                                       bool offsets_pre_cap = true) {
  cfg.validate();
  if (cfg.any_offset() && asn == nullptr)
    throw ConfigError("offset (m) features require a pillar assignment");

  std::size_t n_all = frame.points.size();
  std::vector<double> v_rel_all(n_all), v_r_all(n_all);
  std::vector<double> vrel_x(n_all), vrel_y(n_all), vr_x(n_all), vr_y(n_all);
  std::vector<std::uint8_t> degen(n_all, 0);
  for (std::size_t i = 0; i < n_all; ++i) {
    const RadarPoint& p = frame.points[i];
    v_rel_all[i] = p.v_rel;
    v_r_all[i] = p.v_r;
    auto d_rel = decompose_radial(p.x, p.y, p.v_rel);
    auto d_r = decompose_radial(p.x, p.y, p.v_r);
    vrel_x[i] = d_rel.v_x;
    vrel_y[i] = d_rel.v_y;
    vr_x[i] = d_r.v_x;
    vr_y[i] = d_r.v_y;
    degen[i] = d_rel.degenerate ? 1 : 0;
  }

  std::vector<double> vrel_off, vr_off, vrelx_off, vrely_off, vrx_off, vry_off;
  if (asn) {
    if (cfg.v_rel_m) vrel_off = pillar_velocity_offsets(v_rel_all, *asn, offsets_pre_cap);
    if (cfg.v_r_m) vr_off = pillar_velocity_offsets(v_r_all, *asn, offsets_pre_cap);
    if (cfg.v_rel_xy_m) {
      vrelx_off = pillar_velocity_offsets(vrel_x, *asn, offsets_pre_cap);
      vrely_off = pillar_velocity_offsets(vrel_y, *asn, offsets_pre_cap);
    }
    if (cfg.v_r_xy_m) {
      vrx_off = pillar_velocity_offsets(vr_x, *asn, offsets_pre_cap);
      vry_off = pillar_velocity_offsets(vr_y, *asn, offsets_pre_cap);
    }
  }

  std::vector<std::size_t> row_points;
  if (asn) {
    row_points.reserve(asn->retained.size());
    for (const auto& e : asn->retained) row_points.push_back(e.point);
  } else {
    row_points.resize(n_all);
    for (std::size_t i = 0; i < n_all; ++i) row_points[i] = i;
  }

  PointFeatures out;
  out.channels = cfg.channel_names();
  out.cols = out.channels.size();
  out.rows = row_points.size();
  out.values.resize(out.rows * out.cols);
  out.bearing.resize(out.rows);
  out.degenerate.resize(out.rows);

  for (std::size_t r = 0; r < row_points.size(); ++r) {
    std::size_t i = row_points[r];
    const RadarPoint& p = frame.points[i];
    out.bearing[r] = std::atan2(p.y, p.x);
    out.degenerate[r] = degen[i];
    std::size_t c = 0;
    out.at(r, c++) = p.x;
    out.at(r, c++) = p.y;
    out.at(r, c++) = p.z;
    out.at(r, c++) = p.rcs;
    if (cfg.v_rel) out.at(r, c++) = p.v_rel;
    if (cfg.v_r) out.at(r, c++) = p.v_r;
    if (cfg.v_rel_xy) { out.at(r, c++) = vrel_x[i]; out.at(r, c++) = vrel_y[i]; }
    if (cfg.v_r_xy) { out.at(r, c++) = vr_x[i]; out.at(r, c++) = vr_y[i]; }
    if (cfg.v_rel_m) out.at(r, c++) = vrel_off[i];
    if (cfg.v_r_m) out.at(r, c++) = vr_off[i];
    if (cfg.v_rel_xy_m) { out.at(r, c++) = vrelx_off[i]; out.at(r, c++) = vrely_off[i]; }
    if (cfg.v_r_xy_m) { out.at(r, c++) = vrx_off[i]; out.at(r, c++) = vry_off[i]; }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel standardization
// ---------------------------------------------------------------------------
struct NormalizationStats {
  std::vector<std::string> channels;
  std::vector<double> mean;
  std::vector<double> std_dev;

  void validate() const {
    if (mean.size() != channels.size() || std_dev.size() != channels.size())
      throw ConfigError("stats arrays must match channel list");
    for (double s : std_dev)
      if (!(s > 0.0)) throw ConfigError("std must be > 0 for every normalized channel");
  }
};

inline void to_json(nlohmann::json& j, const NormalizationStats& s) {
  j = nlohmann::json{{"channels", s.channels}, {"mean", s.mean}, {"std", s.std_dev}};
}

inline void from_json(const nlohmann::json& j, NormalizationStats& s) {
  j.at("channels").get_to(s.channels);
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.std_dev);
}

inline PointFeatures standardize(const PointFeatures& features, const NormalizationStats& stats) {
  stats.validate();
  if (stats.channels != features.channels)
    throw ConfigError("stats channels do not match feature channels");
  PointFeatures out = features;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out.at(r, c) = (out.at(r, c) - stats.mean[c]) / stats.std_dev[c];
  return out;
}

inline PointFeatures destandardize(const PointFeatures& features,
                                   const NormalizationStats& stats) {
  stats.validate();
  if (stats.channels != features.channels)
    throw ConfigError("stats channels do not match feature channels");
  PointFeatures out = features;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out.at(r, c) = out.at(r, c) * stats.std_dev[c] + stats.mean[c];
  return out;
}

// Population mean/std per channel over a set of frames. Constant channels
// are floored at 1e-12 to keep the stats usable.
inline NormalizationStats compute_stats(const std::vector<RadarFrame>& frames,
                                        const FeatureSetConfig& cfg) {
  NormalizationStats stats;
  stats.channels = cfg.channel_names();
  std::size_t c = stats.channels.size();
  std::vector<double> sum(c, 0.0), sum_sq(c, 0.0);
  std::size_t n = 0;
  FeatureSetConfig no_offsets = cfg;
  no_offsets.v_rel_m = no_offsets.v_r_m = no_offsets.v_rel_xy_m = no_offsets.v_r_xy_m = false;
  bool needs_asn = cfg.any_offset();
  for (const RadarFrame& f : frames) {
    PointFeatures pf;
    if (needs_asn) {
      GridConfig grid;
      auto asn = assign_pillars(f, grid);
      pf = assemble_features(f, cfg, &asn);
    } else {
      pf = assemble_features(f, cfg);
    }
    for (std::size_t r = 0; r < pf.rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        sum[ch] += pf.at(r, ch);
        sum_sq[ch] += pf.at(r, ch) * pf.at(r, ch);
      }
    n += pf.rows;
  }
  stats.mean.resize(c);
  stats.std_dev.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m = n ? sum[ch] / static_cast<double>(n) : 0.0;
    double var = n ? std::max(0.0, sum_sq[ch] / static_cast<double>(n) - m * m) : 1.0;
    stats.mean[ch] = m;
    stats.std_dev[ch] = std::max(std::sqrt(var), 1e-12);
  }
  if (n == 0) std::fill(stats.std_dev.begin(), stats.std_dev.end(), 1.0);
  return stats;
}

}  // namespace rpk
