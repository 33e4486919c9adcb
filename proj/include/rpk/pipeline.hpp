#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "rpk/attention.hpp"
#include "rpk/backbone.hpp"
#include "rpk/detection.hpp"
#include "rpk/features.hpp"
#include "rpk/io.hpp"
#include "rpk/model.hpp"
#include "rpk/pillars.hpp"

namespace rpk {

struct PipelineStats {
  std::size_t points_in = 0;
  std::size_t points_retained = 0;
  std::size_t pillars = 0;
  std::size_t detections = 0;
  OpCounters attention;
};

// Full single-frame pipeline: features -> pillars -> (attention variant) ->
// encoder -> fusion -> head -> decode -> NMS. Deterministic and invariant to
// input point order by construction (canonical within-pillar ordering plus
// order-free reductions).
template <class S>
std::vector<Detection> run_pipeline(const RadarFrame& frame, const WeightStore<S>& store,
                                    const ModelConfig& cfg,
                                    const NormalizationStats* stats = nullptr,
                                    PipelineStats* run_stats = nullptr) {
  cfg.validate();
  if (run_stats) *run_stats = PipelineStats{};
  if (run_stats) run_stats->points_in = frame.points.size();

  PillarAssignment asn = assign_pillars(frame, cfg.grid);
  if (run_stats) {
    run_stats->points_retained = asn.retained.size();
    run_stats->pillars = asn.num_pillars();
  }
  // Nothing on the grid: nothing to detect (all-zero padding is not input).
  if (asn.num_pillars() == 0) return {};

  PointFeatures features = assemble_features(frame, cfg.features, &asn, cfg.offsets_pre_cap);
  if (stats) features = standardize(features, *stats);
  auto offsets = compute_center_offsets(frame, asn, cfg.grid);

  const std::size_t d_in = cfg.encoder_input_dim();
  Tensor<S> point_matrix({features.rows, d_in});
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t c = 0; c < features.cols; ++c)
      point_matrix(r, c) = static_cast<S>(features.at(r, c));
    for (std::size_t c = 0; c < 3; ++c)
      point_matrix(r, features.cols + c) = static_cast<S>(offsets[r][c]);
  }

  SparsePillarTensor<S> sparse;
  if (cfg.variant == AttentionVariant::point_masked ||
      cfg.variant == AttentionVariant::point_unmasked) {
    sparse = point_attention_forward(point_matrix, asn, store, cfg,
                                     cfg.variant == AttentionVariant::point_masked,
                                     run_stats ? &run_stats->attention : nullptr);
  } else {
    sparse = encode_pillars(point_matrix, asn, store.get("pfn.linear.weight"),
                            Tensor<S>({cfg.scaling.channels[0]}), store.get("pfn.bn.gamma"),
                            store.get("pfn.bn.beta"), store.get("pfn.bn.mean"),
                            store.get("pfn.bn.var"), cfg.bn_eps);
    if (cfg.variant == AttentionVariant::pillar)
      sparse = pillar_attention_forward(sparse, store, cfg, nullptr,
                                        run_stats ? &run_stats->attention : nullptr);
  }

  DenseGrid<S> grid = scatter_to_grid(sparse);
  auto stages = encoder_forward(grid.features, store, cfg);
  Tensor<S> fused = fuse_features(stages, store, cfg);
  if (cfg.variant == AttentionVariant::feature_late)
    fused = feature_attention_forward(fused, store, cfg,
                                      run_stats ? &run_stats->attention : nullptr);
  HeadOutputs<S> head = head_forward(fused, store, cfg);

  std::vector<Detection> dets = decode_boxes(head, cfg, cfg.score_threshold);
  // Keep the strongest candidates before the quadratic suppression pass.
  if (dets.size() > cfg.pre_nms_max) {
    std::sort(dets.begin(), dets.end(), detection_order);
    dets.resize(cfg.pre_nms_max);
  }
  dets = nms(std::move(dets), cfg.nms_iou);
  std::sort(dets.begin(), dets.end(), detection_order);
  if (dets.size() > cfg.max_detections) dets.resize(cfg.max_detections);
  if (run_stats) run_stats->detections = dets.size();
  return dets;
}

}  // namespace rpk
