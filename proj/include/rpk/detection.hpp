#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "rpk/backbone.hpp"
#include "rpk/errors.hpp"
#include "rpk/io.hpp"
#include "rpk/model.hpp"
#include "rpk/nn.hpp"

namespace rpk {

constexpr double kPi = 3.14159265358979323847;

inline double wrap_angle(double a) {
  // into (-pi, pi]
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// ---------------------------------------------------------------------------
// Rotated BEV IoU via Sutherland-Hodgman polygon clipping.
// ---------------------------------------------------------------------------

struct BevBox {
  double cx = 0, cy = 0, l = 1, w = 1, yaw = 0;
};

namespace detail {

using Poly = std::vector<std::array<double, 2>>;

// Counter-clockwise corner order; the clipper keeps the left side of each
// directed edge, so the clip polygon must wind CCW.
inline Poly box_corners(const BevBox& b) {
  double c = std::cos(b.yaw), s = std::sin(b.yaw);
  double hl = b.l / 2, hw = b.w / 2;
  Poly p(4);
  const double ux[4] = {hl, hl, -hl, -hl};
  const double uy[4] = {-hw, hw, hw, -hw};
  for (int i = 0; i < 4; ++i)
    p[i] = {b.cx + c * ux[i] - s * uy[i], b.cy + s * ux[i] + c * uy[i]};
  return p;
}

inline double polygon_area(const Poly& p) {
  double area = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& a = p[i];
    const auto& b = p[(i + 1) % p.size()];
    area += a[0] * b[1] - b[0] * a[1];
  }
  return std::abs(area) / 2.0;
}

// Clip `subject` against the half-plane left of edge (a -> b).
inline Poly clip_edge(const Poly& subject, const std::array<double, 2>& a,
                      const std::array<double, 2>& b) {
  Poly out;
  auto side = [&](const std::array<double, 2>& p) {
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
  };
  std::size_t n = subject.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cur = subject[i];
    const auto& prev = subject[(i + n - 1) % n];
    double sc = side(cur), sp = side(prev);
    auto intersect = [&]() {
      double t = sp / (sp - sc);
      return std::array<double, 2>{prev[0] + t * (cur[0] - prev[0]),
                                   prev[1] + t * (cur[1] - prev[1])};
    };
    if (sc >= 0) {
      if (sp < 0) out.push_back(intersect());
      out.push_back(cur);
    } else if (sp >= 0) {
      out.push_back(intersect());
    }
  }
  return out;
}

}  // namespace detail

inline double rotated_iou(const BevBox& a, const BevBox& b) {
  double area_a = a.l * a.w, area_b = b.l * b.w;
  if (!(area_a > 0) || !(area_b > 0)) return 0.0;
  detail::Poly poly = detail::box_corners(a);
  detail::Poly clip = detail::box_corners(b);
  for (std::size_t i = 0; i < 4 && !poly.empty(); ++i)
    poly = detail::clip_edge(poly, clip[i], clip[(i + 1) % 4]);
  if (poly.size() < 3) return 0.0;
  double inter = detail::polygon_area(poly);
  double uni = area_a + area_b - inter;
  if (!(uni > 0)) return 0.0;
  double iou = inter / uni;
  return std::min(std::max(iou, 0.0), 1.0);
}

inline BevBox bev(const Detection& d) { return {d.cx, d.cy, d.l, d.w, d.yaw}; }
inline BevBox bev(const GroundTruthBox& g) { return {g.cx, g.cy, g.l, g.w, g.yaw}; }

// ---------------------------------------------------------------------------
// Anchors. One anchor per (class, rotation) at every head cell, centered on
// the cell. The head grid covers the same extent as the pillar grid at half
// resolution.
// ---------------------------------------------------------------------------

struct Anchor {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double yaw = 0;
  int class_id = 0;
};

inline Anchor anchor_at(const ModelConfig& cfg, std::size_t iy, std::size_t ix,
                        std::size_t anchor_idx) {
  const std::size_t n_rot = cfg.anchors.rotations.size();
  std::size_t cls = anchor_idx / n_rot;
  std::size_t rot = anchor_idx % n_rot;
  const AnchorClassSpec& spec = cfg.anchors.classes[cls];
  Anchor a;
  double cell_x = (cfg.grid.x_max - cfg.grid.x_min) / static_cast<double>(cfg.head_width());
  double cell_y = (cfg.grid.y_max - cfg.grid.y_min) / static_cast<double>(cfg.head_height());
  a.x = cfg.grid.x_min + (static_cast<double>(ix) + 0.5) * cell_x;
  a.y = cfg.grid.y_min + (static_cast<double>(iy) + 0.5) * cell_y;
  a.z = spec.z;
  a.l = spec.l;
  a.w = spec.w;
  a.h = spec.h;
  a.yaw = cfg.anchors.rotations[rot];
  a.class_id = static_cast<int>(cls);
  return a;
}

// ---------------------------------------------------------------------------
// Box residual encoding (SSD/pillar convention):
//   dx = (cx - xa) / diag, dy = (cy - ya) / diag, dz = (cz - za) / ha,
//   dl = log(l / la), dw = log(w / wa), dh = log(h / ha),
//   dyaw = wrapped yaw residual in (-pi/2, pi/2], with a direction bin that
//   flips the decoded yaw by pi when set.
// ---------------------------------------------------------------------------

struct BoxResiduals {
  std::array<double, 7> delta{};  // dx, dy, dz, dl, dw, dh, dyaw
  int direction_bin = 0;
};

inline BoxResiduals encode_box(const GroundTruthBox& gt, const Anchor& anchor) {
  BoxResiduals r;
  double diag = std::sqrt(anchor.l * anchor.l + anchor.w * anchor.w);
  r.delta[0] = (gt.cx - anchor.x) / diag;
  r.delta[1] = (gt.cy - anchor.y) / diag;
  r.delta[2] = (gt.cz - anchor.z) / anchor.h;
  r.delta[3] = std::log(gt.l / anchor.l);
  r.delta[4] = std::log(gt.w / anchor.w);
  r.delta[5] = std::log(gt.h / anchor.h);
  double dyaw = wrap_angle(gt.yaw - anchor.yaw);
  if (dyaw > kPi / 2 || dyaw <= -kPi / 2) {
    r.direction_bin = 1;
    dyaw = wrap_angle(dyaw - kPi);
  }
  r.delta[6] = dyaw;
  return r;
}

inline Detection decode_box(const BoxResiduals& r, const Anchor& anchor) {
  Detection d;
  double diag = std::sqrt(anchor.l * anchor.l + anchor.w * anchor.w);
  d.cx = r.delta[0] * diag + anchor.x;
  d.cy = r.delta[1] * diag + anchor.y;
  d.cz = r.delta[2] * anchor.h + anchor.z;
  d.l = std::exp(r.delta[3]) * anchor.l;
  d.w = std::exp(r.delta[4]) * anchor.w;
  d.h = std::exp(r.delta[5]) * anchor.h;
  d.yaw = wrap_angle(anchor.yaw + r.delta[6] + (r.direction_bin ? kPi : 0.0));
  d.class_id = anchor.class_id;
  return d;
}

// ---------------------------------------------------------------------------
// Head decoding: per anchor, the best class logit becomes the score through a
// sigmoid; entries below the score threshold are dropped. Output order is
// deterministic (cell-major, then anchor).
// ---------------------------------------------------------------------------
template <class S>
std::vector<Detection> decode_boxes(const HeadOutputs<S>& outputs, const ModelConfig& cfg,
                                    double score_threshold) {
  const std::size_t h = outputs.cls.dim(1), w = outputs.cls.dim(2);
  const std::size_t a = cfg.anchors.anchors_per_cell();
  const std::size_t k = cfg.num_classes();
  if (outputs.cls.dim(0) != a * k || outputs.box.dim(0) != a * 7 ||
      outputs.direction.dim(0) != a * 2)
    throw ShapeError("decode_boxes: head channel mismatch");
  if (h != cfg.head_height() || w != cfg.head_width())
    throw ShapeError("decode_boxes: head spatial size mismatch");
  std::vector<Detection> dets;
  const std::size_t hw = h * w;
  for (std::size_t iy = 0; iy < h; ++iy) {
    for (std::size_t ix = 0; ix < w; ++ix) {
      std::size_t cell = iy * w + ix;
      for (std::size_t ai = 0; ai < a; ++ai) {
        double best_logit = -std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t ki = 0; ki < k; ++ki) {
          double logit = static_cast<double>(outputs.cls.data[(ai * k + ki) * hw + cell]);
          if (logit > best_logit) {
            best_logit = logit;
            best_k = ki;
          }
        }
        double score = sigmoid(best_logit);
        if (score < score_threshold) continue;
        Anchor anchor = anchor_at(cfg, iy, ix, ai);
        anchor.class_id = static_cast<int>(best_k);
        BoxResiduals r;
        for (int j = 0; j < 7; ++j)
          r.delta[static_cast<std::size_t>(j)] =
              static_cast<double>(outputs.box.data[(ai * 7 + static_cast<std::size_t>(j)) * hw + cell]);
        double dir0 = static_cast<double>(outputs.direction.data[(ai * 2 + 0) * hw + cell]);
        double dir1 = static_cast<double>(outputs.direction.data[(ai * 2 + 1) * hw + cell]);
        r.direction_bin = dir1 > dir0 ? 1 : 0;
        Detection det = decode_box(r, anchor);
        det.score = score;
        dets.push_back(det);
      }
    }
  }
  return dets;
}

// Total order used everywhere detections are ranked; distinct detections
// always differ in at least one component.
inline bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.cx != b.cx) return a.cx < b.cx;
  if (a.cy != b.cy) return a.cy < b.cy;
  if (a.yaw != b.yaw) return a.yaw < b.yaw;
  return a.cz < b.cz;
}

// Greedy per-class non-maximum suppression with rotated IoU.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  if (!(iou_threshold > 0 && iou_threshold < 1))
    throw ConfigError("nms: iou threshold must be in (0, 1)");
  std::sort(dets.begin(), dets.end(), detection_order);
  std::vector<Detection> kept;
  std::vector<bool> suppressed(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (suppressed[j] || dets[j].class_id != dets[i].class_id) continue;
      if (rotated_iou(bev(dets[i]), bev(dets[j])) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Target assignment for the losses: per-class IoU matching with the usual
// best-anchor guarantee for every ground-truth box.
// ---------------------------------------------------------------------------

struct AnchorTarget {
  // 1 positive, 0 negative, -1 ignored
  int label = 0;
  long gt_index = -1;
  BoxResiduals residuals;
};

struct TargetAssignment {
  std::vector<AnchorTarget> targets;  // cell-major, then anchor index
  std::size_t num_positive = 0, num_negative = 0, num_ignored = 0;
};

inline TargetAssignment assign_targets(const ModelConfig& cfg,
                                       const std::vector<GroundTruthBox>& gts) {
  const std::size_t h = cfg.head_height(), w = cfg.head_width();
  const std::size_t a = cfg.anchors.anchors_per_cell();
  const std::size_t n_rot = cfg.anchors.rotations.size();
  TargetAssignment out;
  out.targets.assign(h * w * a, AnchorTarget{});

  std::vector<double> best_gt_iou(gts.size(), 0.0);
  std::vector<long> best_gt_anchor(gts.size(), -1);

  for (std::size_t iy = 0; iy < h; ++iy) {
    for (std::size_t ix = 0; ix < w; ++ix) {
      for (std::size_t ai = 0; ai < a; ++ai) {
        std::size_t flat = (iy * w + ix) * a + ai;
        Anchor anchor = anchor_at(cfg, iy, ix, ai);
        const AnchorClassSpec& spec = cfg.anchors.classes[ai / n_rot];
        double best_iou = 0.0;
        long best_gt = -1;
        double reach = (std::hypot(anchor.l, anchor.w) + 20.0) / 2.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
          if (gts[gi].class_id != anchor.class_id) continue;
          if (std::hypot(gts[gi].cx - anchor.x, gts[gi].cy - anchor.y) > reach) continue;
          double iou = rotated_iou(bev(gts[gi]), BevBox{anchor.x, anchor.y, anchor.l, anchor.w,
                                                        anchor.yaw});
          if (iou > best_iou) {
            best_iou = iou;
            best_gt = static_cast<long>(gi);
          }
          if (iou > best_gt_iou[gi]) {
            best_gt_iou[gi] = iou;
            best_gt_anchor[gi] = static_cast<long>(flat);
          }
        }
        AnchorTarget& tgt = out.targets[flat];
        if (best_gt >= 0 && best_iou >= spec.pos_iou) {
          tgt.label = 1;
          tgt.gt_index = best_gt;
          tgt.residuals = encode_box(gts[static_cast<std::size_t>(best_gt)], anchor);
        } else if (best_iou < spec.neg_iou) {
          tgt.label = 0;
        } else {
          tgt.label = -1;
        }
      }
    }
  }

  // Every ground-truth box claims its best-overlapping anchor.
  for (std::size_t gi = 0; gi < gts.size(); ++gi) {
    if (best_gt_anchor[gi] < 0 || !(best_gt_iou[gi] > 0)) continue;
    auto flat = static_cast<std::size_t>(best_gt_anchor[gi]);
    AnchorTarget& tgt = out.targets[flat];
    if (tgt.label == 1) continue;
    std::size_t ai = flat % a;
    std::size_t cell = flat / a;
    Anchor anchor = anchor_at(cfg, cell / w, cell % w, ai);
    tgt.label = 1;
    tgt.gt_index = static_cast<long>(gi);
    tgt.residuals = encode_box(gts[gi], anchor);
  }

  for (const auto& t : out.targets) {
    if (t.label == 1) ++out.num_positive;
    else if (t.label == 0) ++out.num_negative;
    else ++out.num_ignored;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Focal loss on a predicted probability. Reduces to cross-entropy for
// gamma = 0, alpha_t = 1.
inline double focal_loss(double p, int target, double alpha = 0.25, double gamma = 2.0) {
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  double p_t = target == 1 ? p : 1.0 - p;
  double alpha_t = target == 1 ? alpha : 1.0 - alpha;
  return -alpha_t * std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

inline double smooth_l1(double diff, double beta = 1.0 / 9.0) {
  double d = std::abs(diff);
  return d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
}

inline double direction_ce(const std::array<double, 2>& logits, int target_bin) {
  double mx = std::max(logits[0], logits[1]);
  double denom = std::exp(logits[0] - mx) + std::exp(logits[1] - mx);
  return -(logits[static_cast<std::size_t>(target_bin)] - mx - std::log(denom));
}

}  // namespace rpk
