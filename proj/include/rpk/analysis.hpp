#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpk/attention.hpp"
#include "rpk/detection.hpp"
#include "rpk/io.hpp"
#include "rpk/model.hpp"
#include "rpk/rng.hpp"
#include "rpk/weights.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Weight-magnitude analysis: per weight tensor, clip at zero, normalize by
// the layer maximum, drop magnitudes <= 0.001 as dead, then box-plot
// statistics over the survivors.
// ---------------------------------------------------------------------------

struct LayerMagnitudeStats {
  std::string layer;
  std::size_t total = 0;
  std::size_t surviving = 0;
  std::size_t dead = 0;
  double q1 = 0, median = 0, q3 = 0;
  double lo_whisker = 0, hi_whisker = 0;  // 1.5 IQR rule
  std::size_t outliers = 0;
};

struct WeightMagnitudeReport {
  std::vector<LayerMagnitudeStats> layers;
  std::vector<std::string> skipped;  // layers with max <= 0
};

// Linear interpolation between closest ranks ("type 7").
inline double quantile_type7(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline LayerMagnitudeStats magnitude_stats_for(const std::string& name,
                                               const std::vector<double>& raw) {
  LayerMagnitudeStats stats;
  stats.layer = name;
  stats.total = raw.size();
  double mx = 0.0;
  for (double v : raw) mx = std::max(mx, v);
  std::vector<double> survivors;
  for (double v : raw) {
    double clipped = std::max(v, 0.0);
    double normalized = clipped / mx;
    if (normalized > 0.001) survivors.push_back(normalized);
  }
  std::sort(survivors.begin(), survivors.end());
  stats.surviving = survivors.size();
  stats.dead = stats.total - stats.surviving;
  stats.q1 = quantile_type7(survivors, 0.25);
  stats.median = quantile_type7(survivors, 0.5);
  stats.q3 = quantile_type7(survivors, 0.75);
  double iqr = stats.q3 - stats.q1;
  double lo_fence = stats.q1 - 1.5 * iqr;
  double hi_fence = stats.q3 + 1.5 * iqr;
  // min/max survivor inside the fences; the extreme survivors are valid
  // starting candidates (back >= lo_fence, front <= hi_fence always hold).
  stats.lo_whisker = survivors.empty() ? 0.0 : survivors.back();
  stats.hi_whisker = survivors.empty() ? 0.0 : survivors.front();
  for (double v : survivors) {
    if (v >= lo_fence && v < stats.lo_whisker) stats.lo_whisker = v;
    if (v <= hi_fence && v > stats.hi_whisker) stats.hi_whisker = v;
  }
  for (double v : survivors)
    if (v < lo_fence || v > hi_fence) ++stats.outliers;
  if (survivors.empty()) {
    stats.q1 = stats.median = stats.q3 = stats.lo_whisker = stats.hi_whisker = 0.0;
  }
  return stats;
}

// Runs over every ".weight" tensor in the store (kernels and projection
// matrices; biases and norm parameters are not layers in this analysis).
template <class S>
WeightMagnitudeReport weight_magnitude_stats(const WeightStore<S>& store) {
  WeightMagnitudeReport report;
  for (const std::string& name : store.names()) {
    if (name.size() < 7 || name.compare(name.size() - 7, 7, ".weight") != 0) continue;
    const Tensor<S>& t = store.get(name);
    double mx = 0.0;
    for (S v : t.data) mx = std::max(mx, static_cast<double>(v));
    if (!(mx > 0.0)) {
      report.skipped.push_back(name);
      continue;
    }
    std::vector<double> raw(t.data.begin(), t.data.end());
    report.layers.push_back(magnitude_stats_for(name, raw));
  }
  return report;
}

inline void to_json(nlohmann::json& j, const LayerMagnitudeStats& s) {
  j = nlohmann::json{{"layer", s.layer},         {"total", s.total},
                     {"surviving", s.surviving}, {"dead", s.dead},
                     {"q1", s.q1},               {"median", s.median},
                     {"q3", s.q3},               {"lo_whisker", s.lo_whisker},
                     {"hi_whisker", s.hi_whisker}, {"outliers", s.outliers}};
}

inline void to_json(nlohmann::json& j, const WeightMagnitudeReport& r) {
  j = nlohmann::json{{"layers", r.layers}, {"skipped", r.skipped}};
}

// Plot-ready CSV: one row per layer with the box-plot quantities.
inline std::string magnitude_report_csv(const WeightMagnitudeReport& r) {
  std::string out =
      "layer,total,surviving,dead,q1,median,q3,lo_whisker,hi_whisker,outliers\n";
  for (const auto& s : r.layers) {
    out += s.layer + "," + std::to_string(s.total) + "," + std::to_string(s.surviving) + "," +
           std::to_string(s.dead) + "," + format_double(s.q1) + "," + format_double(s.median) +
           "," + format_double(s.q3) + "," + format_double(s.lo_whisker) + "," +
           format_double(s.hi_whisker) + "," + std::to_string(s.outliers) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Average precision (40-point interpolation, per-frame greedy matching by
// descending score, rotated BEV IoU).
// ---------------------------------------------------------------------------

struct RegionFilter {
  std::string label = "entire_area";
  bool enabled = false;
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;

  bool contains(double x, double y) const {
    if (!enabled) return true;
    return x >= x_min && x < x_max && y >= y_min && y < y_max;
  }
};

struct APResult {
  std::vector<double> per_class;
  double mAP = 0;
  std::string region = "entire_area";
};

inline void to_json(nlohmann::json& j, const APResult& r) {
  j = nlohmann::json{{"per_class", r.per_class}, {"mAP", r.mAP}, {"region", r.region}};
}

struct EvalFrame {
  std::vector<Detection> detections;
  std::vector<GroundTruthBox> ground_truth;
};

inline APResult evaluate_ap(const std::vector<EvalFrame>& frames,
                            const std::vector<double>& class_iou_thresholds,
                            const RegionFilter& region = {}, int num_classes = kNumClasses) {
  if (static_cast<int>(class_iou_thresholds.size()) != num_classes)
    throw ConfigError("evaluate_ap: one IoU threshold per class required");
  APResult result;
  result.region = region.label;
  result.per_class.resize(static_cast<std::size_t>(num_classes), 0.0);

  for (int cls = 0; cls < num_classes; ++cls) {
    struct Cand {
      double score;
      std::size_t frame;
      std::size_t index;
    };
    std::vector<Cand> cands;
    std::size_t total_gt = 0;
    std::vector<std::vector<std::size_t>> gt_of_frame(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
      for (std::size_t g = 0; g < frames[f].ground_truth.size(); ++g) {
        const auto& gt = frames[f].ground_truth[g];
        if (gt.class_id != cls || !region.contains(gt.cx, gt.cy)) continue;
        gt_of_frame[f].push_back(g);
        ++total_gt;
      }
      for (std::size_t d = 0; d < frames[f].detections.size(); ++d) {
        const auto& det = frames[f].detections[d];
        if (det.class_id != cls || !region.contains(det.cx, det.cy)) continue;
        cands.push_back({det.score, f, d});
      }
    }
    if (total_gt == 0) {
      result.per_class[static_cast<std::size_t>(cls)] = cands.empty() ? 1.0 : 0.0;
      continue;
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.frame != b.frame) return a.frame < b.frame;
      return a.index < b.index;
    });
    double thr = class_iou_thresholds[static_cast<std::size_t>(cls)];
    std::vector<std::vector<bool>> used(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f)
      used[f].assign(frames[f].ground_truth.size(), false);
    std::vector<bool> is_tp(cands.size(), false);
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const auto& det = frames[cands[c].frame].detections[cands[c].index];
      double best_iou = 0.0;
      long best_gt = -1;
      for (std::size_t g : gt_of_frame[cands[c].frame]) {
        if (used[cands[c].frame][g]) continue;
        double iou = rotated_iou(bev(det), bev(frames[cands[c].frame].ground_truth[g]));
        if (iou > best_iou) {
          best_iou = iou;
          best_gt = static_cast<long>(g);
        }
      }
      if (best_gt >= 0 && best_iou >= thr) {
        is_tp[c] = true;
        used[cands[c].frame][static_cast<std::size_t>(best_gt)] = true;
      }
    }
    // Precision/recall curve, then 40-point interpolated AP.
    std::vector<double> precision(cands.size()), recall(cands.size());
    std::size_t tp = 0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (is_tp[c]) ++tp;
      precision[c] = static_cast<double>(tp) / static_cast<double>(c + 1);
      recall[c] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }
    double ap = 0.0;
    for (int i = 1; i <= 40; ++i) {
      double r = static_cast<double>(i) / 40.0;
      double p_max = 0.0;
      for (std::size_t c = 0; c < cands.size(); ++c)
        if (recall[c] >= r) p_max = std::max(p_max, precision[c]);
      ap += p_max / 40.0;
    }
    result.per_class[static_cast<std::size_t>(cls)] = ap;
  }

  double sum = 0;
  for (double ap : result.per_class) sum += ap;
  result.mAP = result.per_class.empty() ? 0.0 : sum / static_cast<double>(result.per_class.size());
  return result;
}

inline APResult evaluate_ap(const std::vector<Detection>& dets,
                            const std::vector<GroundTruthBox>& gts,
                            const std::vector<double>& class_iou_thresholds,
                            const RegionFilter& region = {}, int num_classes = kNumClasses) {
  return evaluate_ap(std::vector<EvalFrame>{{dets, gts}}, class_iou_thresholds, region,
                     num_classes);
}

inline std::vector<double> default_ap_thresholds() { return {0.5, 0.25, 0.25}; }

// ---------------------------------------------------------------------------
// Attention complexity
// ---------------------------------------------------------------------------

struct ComplexityCount {
  std::uint64_t dense_entries = 0;
  std::uint64_t sparse_entries = 0;
};

inline ComplexityCount complexity_count(std::size_t h, std::size_t w, std::size_t p) {
  if (p > h * w) throw ValueError("occupancy cannot exceed the cell count");
  std::uint64_t hw = static_cast<std::uint64_t>(h) * w;
  return {hw * hw, static_cast<std::uint64_t>(p) * p};
}

// ---------------------------------------------------------------------------
// Wall-clock benchmark of the sparse attention path as a function of p.
// Single-threaded; medians with MAD are reported next to mean/stddev since
// sandboxed timers jitter.
// ---------------------------------------------------------------------------

struct BenchRow {
  std::size_t p = 0;
  double mean_ns = 0, stddev_ns = 0;
  double median_ns = 0, mad_ns = 0;
  std::uint64_t score_entries = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double loglog_slope = 0;  // fitted over the largest decade of p
};

inline void to_json(nlohmann::json& j, const BenchRow& r) {
  j = nlohmann::json{{"p", r.p},                 {"mean_ns", r.mean_ns},
                     {"stddev_ns", r.stddev_ns}, {"median_ns", r.median_ns},
                     {"mad_ns", r.mad_ns},       {"score_entries", r.score_entries}};
}

inline void to_json(nlohmann::json& j, const BenchReport& r) {
  j = nlohmann::json{{"rows", r.rows}, {"loglog_slope", r.loglog_slope}};
}

template <class S = float>
BenchReport benchmark_attention(const ModelConfig& cfg, const std::vector<std::size_t>& p_values,
                                std::size_t repetitions, std::uint64_t seed = 42) {
  for (std::size_t i = 1; i < p_values.size(); ++i)
    if (p_values[i] <= p_values[i - 1])
      throw ValueError("p values must be sorted ascending");
  BenchReport report;
  WeightStore<S> store = init_weights<S>(cfg, seed);
  Rng rng(seed);
  const std::size_t c = cfg.attention_in_channels();

  for (std::size_t p : p_values) {
    // A grid just big enough to host p occupied pillars.
    std::size_t side = 1;
    while (side * side < p) side *= 2;
    SparsePillarTensor<S> sparse;
    sparse.height = sparse.width = side;
    sparse.features = Tensor<S>({p, c});
    for (auto& v : sparse.features.data) v = static_cast<S>(rng.uniform(-1.0, 1.0));
    sparse.indices.resize(p);
    for (std::size_t i = 0; i < p; ++i) sparse.indices[i] = i;

    std::vector<double> times;
    times.reserve(repetitions);
    OpCounters counters;
    for (std::size_t rep = 0; rep < repetitions + 2; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      auto out = pillar_attention_forward<S>(sparse, store, cfg, nullptr, &counters);
      auto t1 = std::chrono::steady_clock::now();
      volatile S sink = out.features.size() ? out.features.data[0] : S(0);
      (void)sink;
      if (rep >= 2)  // two warmup runs
        times.push_back(
            static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
    BenchRow row;
    row.p = p;
    row.score_entries = counters.score_entries;
    double sum = 0;
    for (double t : times) sum += t;
    row.mean_ns = sum / static_cast<double>(times.size());
    double var = 0;
    for (double t : times) var += (t - row.mean_ns) * (t - row.mean_ns);
    row.stddev_ns = std::sqrt(var / static_cast<double>(times.size()));
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    row.median_ns = quantile_type7(sorted, 0.5);
    std::vector<double> dev;
    dev.reserve(sorted.size());
    for (double t : sorted) dev.push_back(std::abs(t - row.median_ns));
    std::sort(dev.begin(), dev.end());
    row.mad_ns = quantile_type7(dev, 0.5);
    report.rows.push_back(row);
  }

  // Log-log slope of median time vs p over the largest decade.
  if (!report.rows.empty()) {
    double p_max = static_cast<double>(report.rows.back().p);
    std::vector<std::array<double, 2>> pts;
    for (const auto& row : report.rows)
      if (static_cast<double>(row.p) >= p_max / 10.0 && row.median_ns > 0)
        pts.push_back({std::log(static_cast<double>(row.p)), std::log(row.median_ns)});
    if (pts.size() >= 2) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (const auto& pt : pts) {
        sx += pt[0];
        sy += pt[1];
        sxx += pt[0] * pt[0];
        sxy += pt[0] * pt[1];
      }
      double n = static_cast<double>(pts.size());
      report.loglog_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
  }
  return report;
}

}  // namespace rpk
