#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "rpk/pipeline.hpp"
#include "rpk/rng.hpp"

using namespace rpk;

namespace {

ModelConfig desk_cfg() {
  ModelConfig cfg = make_preset("radarpillars-c32");
  cfg.scaling.channels = {8, 8, 8};
  cfg.attention.embed_dim = 8;
  cfg.neck_channels = 8;
  cfg.grid.n_x = cfg.grid.n_y = 64;
  return cfg;
}

RadarFrame shuffled(const RadarFrame& frame, std::uint64_t seed) {
  RadarFrame out = frame;
  Rng rng(seed);
  for (std::size_t i = out.points.size(); i > 1; --i)
    std::swap(out.points[i - 1], out.points[rng.uniform_index(i)]);
  return out;
}

}  // namespace

TEST_CASE("empty frames produce no detections") {
  ModelConfig cfg = desk_cfg();
  auto store = init_weights<float>(cfg, 1);
  RadarFrame empty;
  PipelineStats stats;
  auto dets = run_pipeline(empty, store, cfg, nullptr, &stats);
  CHECK(dets.empty());
  CHECK(stats.pillars == 0);
}

TEST_CASE("pipeline is deterministic and invariant to point order") {
  ModelConfig cfg = desk_cfg();
  auto store = init_weights<float>(cfg, 99);
  SceneSpec spec;
  spec.seed = 1234;
  auto [frame, boxes] = generate_scene(spec);

  auto reference = run_pipeline(frame, store, cfg);
  std::string ref_text = serialize_detections(reference);
  CHECK_FALSE(reference.empty());

  auto again = run_pipeline(frame, store, cfg);
  CHECK(serialize_detections(again) == ref_text);

  for (int trial = 0; trial < 5; ++trial) {
    auto dets = run_pipeline(shuffled(frame, 50 + trial), store, cfg);
    REQUIRE(serialize_detections(dets) == ref_text);  // bit-identical
  }
}

TEST_CASE("every attention variant runs end to end") {
  for (auto variant : {AttentionVariant::none, AttentionVariant::pillar,
                       AttentionVariant::point_masked, AttentionVariant::point_unmasked,
                       AttentionVariant::feature_late}) {
    ModelConfig cfg = desk_cfg();
    cfg.variant = variant;
    auto store = init_weights<float>(cfg, 7);
    SceneSpec spec;
    spec.seed = 777;
    auto [frame, boxes] = generate_scene(spec);
    PipelineStats stats;
    auto dets = run_pipeline(frame, store, cfg, nullptr, &stats);
    CHECK(stats.pillars > 0);
    // The ablation variants also stay permutation invariant.
    auto dets2 = run_pipeline(shuffled(frame, 3), store, cfg);
    CHECK(serialize_detections(dets2) == serialize_detections(dets));
  }
}

TEST_CASE("float64 pipeline runs and agrees loosely with float32") {
  ModelConfig cfg = desk_cfg();
  auto store32 = init_weights<float>(cfg, 31);
  auto store64 = init_weights<double>(cfg, 31);
  SceneSpec spec;
  spec.seed = 31;
  auto [frame, boxes] = generate_scene(spec);
  auto d32 = run_pipeline(frame, store32, cfg);
  auto d64 = run_pipeline(frame, store64, cfg);
  // Same candidate structure; scores agree to float precision.
  REQUIRE(d32.size() == d64.size());
  for (std::size_t i = 0; i < d32.size(); ++i) {
    CHECK(d32[i].class_id == d64[i].class_id);
    CHECK(d32[i].score == Catch::Approx(d64[i].score).margin(1e-4));
  }
}

TEST_CASE("pillar stage is exactly mirror-equivariant for y-agnostic encoders") {
  // Zero the PFN columns that are odd under the y flip (y, v_r_y, y_c); the
  // pillar features then depend only on flip-invariant channels, so the
  // scattered pseudo-image of the flipped frame is the mirrored pseudo-image.
  ModelConfig cfg = desk_cfg();
  auto store = init_weights<float>(cfg, 404);
  {
    auto& w = store.get_mutable("pfn.linear.weight");
    for (std::size_t ch = 0; ch < w.dim(0); ++ch) {
      w(ch, 1) = 0.0f;   // y
      w(ch, 7) = 0.0f;   // v_r_y
      w(ch, 9) = 0.0f;   // y_c
    }
  }
  SceneSpec spec;
  spec.seed = 606;
  auto [frame, boxes] = generate_scene(spec);
  auto flipped = augment_flip_y(frame);

  auto encode = [&](const RadarFrame& f) {
    auto asn = assign_pillars(f, cfg.grid);
    auto pf = assemble_features(f, cfg.features, &asn);
    auto offs = compute_center_offsets(f, asn, cfg.grid);
    Tensor<float> pm({pf.rows, cfg.encoder_input_dim()});
    for (std::size_t r = 0; r < pf.rows; ++r) {
      for (std::size_t c = 0; c < pf.cols; ++c) pm(r, c) = static_cast<float>(pf.at(r, c));
      for (std::size_t c = 0; c < 3; ++c)
        pm(r, pf.cols + c) = static_cast<float>(offs[r][c]);
    }
    auto sp = encode_pillars(pm, asn, store.get("pfn.linear.weight"), Tensor<float>({8}),
                             store.get("pfn.bn.gamma"), store.get("pfn.bn.beta"),
                             store.get("pfn.bn.mean"), store.get("pfn.bn.var"));
    return scatter_to_grid(pillar_attention_forward(sp, store, cfg));
  };

  auto grid_a = encode(frame);
  auto grid_b = encode(flipped);
  std::size_t h = grid_a.height(), w = grid_a.width();
  for (std::size_t ch = 0; ch < grid_a.channels(); ++ch)
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < w; ++ix) {
        float mirrored = grid_b.features(ch, h - 1 - iy, ix);
        CHECK(grid_a.features(ch, iy, ix) == Catch::Approx(mirrored).margin(1e-5));
      }
}

TEST_CASE("decode geometry is mirror-equivariant") {
  // Mirroring the head maps row-wise while negating the y and yaw residual
  // channels (and swapping direction bins on the pi/2 anchors) must flip the
  // decoded boxes in y.
  ModelConfig cfg = desk_cfg();
  Rng rng(505);
  const std::size_t h = cfg.head_height(), w = cfg.head_width();
  const std::size_t a = cfg.anchors.anchors_per_cell();
  const std::size_t k = cfg.num_classes();
  HeadOutputs<float> out;
  out.cls = Tensor<float>({a * k, h, w});
  out.box = Tensor<float>({a * 7, h, w});
  out.direction = Tensor<float>({a * 2, h, w});
  for (auto& v : out.cls.data) v = static_cast<float>(rng.uniform(-4, 1));
  for (auto& v : out.box.data) v = static_cast<float>(rng.uniform(-0.3, 0.3));
  for (auto& v : out.direction.data) v = static_cast<float>(rng.uniform(-1, 1));

  HeadOutputs<float> mirrored;
  mirrored.cls = out.cls;
  mirrored.box = out.box;
  mirrored.direction = out.direction;
  auto mirror_rows = [&](Tensor<float>& dst, const Tensor<float>& src) {
    for (std::size_t c = 0; c < src.dim(0); ++c)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) dst(c, iy, ix) = src(c, h - 1 - iy, ix);
  };
  mirror_rows(mirrored.cls, out.cls);
  mirror_rows(mirrored.box, out.box);
  mirror_rows(mirrored.direction, out.direction);
  const std::size_t n_rot = cfg.anchors.rotations.size();
  for (std::size_t ai = 0; ai < a; ++ai) {
    bool quarter_turn = (ai % n_rot) == 1;
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < w; ++ix) {
        mirrored.box(ai * 7 + 1, iy, ix) = -mirrored.box(ai * 7 + 1, iy, ix);
        mirrored.box(ai * 7 + 6, iy, ix) = -mirrored.box(ai * 7 + 6, iy, ix);
        if (quarter_turn)
          std::swap(mirrored.direction(ai * 2 + 0, iy, ix),
                    mirrored.direction(ai * 2 + 1, iy, ix));
      }
  }

  auto dets = decode_boxes(out, cfg, 0.3);
  auto dets_m = decode_boxes(mirrored, cfg, 0.3);
  REQUIRE(dets.size() == dets_m.size());
  auto canon = [](std::vector<Detection> v, bool flip_y) {
    for (auto& d : v) {
      if (flip_y) {
        d.cy = -d.cy;
        d.yaw = wrap_angle(-d.yaw);
      }
      // boxes are symmetric under a half turn
      if (d.yaw <= -kPi / 2) d.yaw += kPi;
      if (d.yaw > kPi / 2) d.yaw -= kPi;
    }
    std::sort(v.begin(), v.end(), detection_order);
    return v;
  };
  auto ca = canon(dets, false);
  auto cb = canon(dets_m, true);
  for (std::size_t i = 0; i < ca.size(); ++i) {
    CHECK(ca[i].cx == Catch::Approx(cb[i].cx).margin(1e-4));
    CHECK(ca[i].cy == Catch::Approx(cb[i].cy).margin(1e-4));
    CHECK(ca[i].l == Catch::Approx(cb[i].l).margin(1e-4));
    CHECK(std::abs(ca[i].yaw - cb[i].yaw) < 1e-4);
    CHECK(ca[i].score == Catch::Approx(cb[i].score).margin(1e-6));
  }
}

TEST_CASE("pre-NMS cap and max detections bound the output deterministically") {
  ModelConfig cfg = desk_cfg();
  cfg.pre_nms_max = 16;
  cfg.max_detections = 5;
  auto store = init_weights<float>(cfg, 2);
  SceneSpec spec;
  spec.seed = 2;
  auto [frame, boxes] = generate_scene(spec);
  auto dets = run_pipeline(frame, store, cfg);
  CHECK(dets.size() <= 5);
  auto dets2 = run_pipeline(shuffled(frame, 9), store, cfg);
  CHECK(serialize_detections(dets2) == serialize_detections(dets));
}
