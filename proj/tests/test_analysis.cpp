#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "rpk/analysis.hpp"
#include "rpk/model.hpp"
#include "rpk/rng.hpp"

using namespace rpk;

namespace {

// Independent sort-based reference for the magnitude procedure:
// clip at 0 -> divide by layer max -> drop <= 0.001 -> type-7 quartiles.
struct BruteStats {
  std::size_t surviving, dead;
  double q1, median, q3;
  std::size_t outliers;
};

double brute_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  double pos = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BruteStats brute_force(const std::vector<double>& raw) {
  double mx = 0;
  for (double v : raw) mx = std::max(mx, v);
  std::vector<double> survivors;
  for (double v : raw) {
    double n = std::max(v, 0.0) / mx;
    if (n > 0.001) survivors.push_back(n);
  }
  std::sort(survivors.begin(), survivors.end());
  BruteStats b{};
  b.surviving = survivors.size();
  b.dead = raw.size() - survivors.size();
  b.q1 = brute_quantile(survivors, 0.25);
  b.median = brute_quantile(survivors, 0.5);
  b.q3 = brute_quantile(survivors, 0.75);
  double iqr = b.q3 - b.q1;
  for (double v : survivors)
    if (v < b.q1 - 1.5 * iqr || v > b.q3 + 1.5 * iqr) ++b.outliers;
  return b;
}

}  // namespace

TEST_CASE("magnitude procedure hand trace") {
  auto stats = magnitude_stats_for("toy", {-0.5, 0.0005, 0.2, 1.0});
  CHECK(stats.surviving == 2);
  CHECK(stats.dead == 2);
  CHECK(stats.median == Catch::Approx(0.6));
  CHECK(stats.q1 == Catch::Approx(0.4));
  CHECK(stats.q3 == Catch::Approx(0.8));
  CHECK(stats.outliers == 0);
}

TEST_CASE("identical positive weights normalize to magnitude one") {
  auto stats = magnitude_stats_for("flat", std::vector<double>(32, 0.37));
  CHECK(stats.surviving == 32);
  CHECK(stats.median == 1.0);
  CHECK(stats.q1 == 1.0);
  CHECK(stats.q3 == 1.0);
  CHECK(stats.lo_whisker == 1.0);
  CHECK(stats.hi_whisker == 1.0);
}

TEST_CASE("all-negative layers are skipped with a warning record") {
  ModelConfig cfg = make_preset("radarpillars-c32");
  cfg.grid.n_x = cfg.grid.n_y = 32;
  auto store = init_weights<float>(cfg, 11);
  for (auto& v : store.get_mutable("head.dir.weight").data) v = -std::abs(v) - 0.1f;
  auto report = weight_magnitude_stats(store);
  CHECK(std::find(report.skipped.begin(), report.skipped.end(), "head.dir.weight") !=
        report.skipped.end());
  for (const auto& layer : report.layers) CHECK(layer.layer != "head.dir.weight");
}

TEST_CASE("magnitude stats match the brute-force oracle exactly") {
  Rng rng(505);
  for (int layer = 0; layer < 100; ++layer) {
    std::size_t n = 1 + rng.uniform_index(2000);
    std::vector<double> raw(n);
    bool any_positive = false;
    for (auto& v : raw) {
      v = rng.normal(0, rng.uniform(0.001, 0.3));
      if (layer % 7 == 0) v = std::abs(v);       // some all-positive layers
      if (layer % 11 == 0 && v > 0) v *= 1e-4;   // some mostly-dead layers
      any_positive = any_positive || v > 0;
    }
    if (!any_positive) raw[0] = 0.5;
    auto ours = magnitude_stats_for("layer", raw);
    auto brute = brute_force(raw);
    CHECK(ours.surviving == brute.surviving);
    CHECK(ours.dead == brute.dead);
    CHECK(ours.q1 == brute.q1);
    CHECK(ours.median == brute.median);
    CHECK(ours.q3 == brute.q3);
    CHECK(ours.outliers == brute.outliers);
  }
}

TEST_CASE("csv report is emitted for every layer") {
  ModelConfig cfg = make_preset("radarpillars-c32");
  cfg.grid.n_x = cfg.grid.n_y = 32;
  auto store = init_weights<float>(cfg, 13);
  auto report = weight_magnitude_stats(store);
  std::string csv = magnitude_report_csv(report);
  std::size_t lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == report.layers.size() + 1);
  CHECK(csv.rfind("layer,total,surviving,dead,", 0) == 0);
}

namespace {

GroundTruthBox make_box(double cx, double cy, int cls) {
  GroundTruthBox b;
  b.cx = cx;
  b.cy = cy;
  b.cz = 0;
  b.l = 3.9;
  b.w = 1.6;
  b.h = 1.5;
  b.yaw = 0.2;
  b.class_id = cls;
  return b;
}

Detection as_detection(const GroundTruthBox& b, double score) {
  return {b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw, b.class_id, score};
}

}  // namespace

TEST_CASE("AP basics") {
  std::vector<GroundTruthBox> gts{make_box(10, 0, 0), make_box(20, 5, 1), make_box(30, -5, 2)};
  std::vector<Detection> perfect;
  for (const auto& g : gts) perfect.push_back(as_detection(g, 0.9));

  auto res = evaluate_ap(perfect, gts, default_ap_thresholds());
  for (double ap : res.per_class) CHECK(ap == Catch::Approx(1.0));
  CHECK(res.mAP == Catch::Approx(1.0));

  auto none = evaluate_ap({}, gts, default_ap_thresholds());
  for (double ap : none.per_class) CHECK(ap == 0.0);

  // Empty ground truth: vacuous 1.0 without detections, 0.0 with them.
  auto vac = evaluate_ap({}, {}, default_ap_thresholds());
  for (double ap : vac.per_class) CHECK(ap == 1.0);
  auto fp = evaluate_ap({as_detection(gts[0], 0.5)}, {}, default_ap_thresholds());
  CHECK(fp.per_class[0] == 0.0);
}

TEST_CASE("AP hand-traced PR curves") {
  GroundTruthBox gt = make_box(10, 0, 0);
  Detection tp = as_detection(gt, 0.9);
  Detection fp = as_detection(make_box(40, 10, 0), 0.5);

  // TP ranked above FP: precision 1 at full recall -> AP 1.
  auto r1 = evaluate_ap({tp, fp}, {gt}, default_ap_thresholds());
  CHECK(r1.per_class[0] == Catch::Approx(1.0));

  // Scores swapped: FP first, so interpolated precision is 0.5 everywhere.
  tp.score = 0.5;
  fp.score = 0.9;
  auto r2 = evaluate_ap({tp, fp}, {gt}, default_ap_thresholds());
  CHECK(r2.per_class[0] == Catch::Approx(0.5));
}

TEST_CASE("AP is monotone in added true positives") {
  Rng rng(606);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GroundTruthBox> gts;
    std::vector<Detection> dets;
    int n_gt = 2 + static_cast<int>(rng.uniform_index(4));
    for (int i = 0; i < n_gt; ++i)
      gts.push_back(make_box(8.0 + 9.0 * i, rng.uniform(-10, 10), 0));
    // Some detections: a mix of hits and misses.
    for (int i = 0; i < n_gt; ++i) {
      if (rng.uniform01() < 0.5)
        dets.push_back(as_detection(gts[static_cast<std::size_t>(i)], rng.uniform(0.2, 1.0)));
      if (rng.uniform01() < 0.4)
        dets.push_back(as_detection(make_box(rng.uniform(5, 45), rng.uniform(-20, 20), 0),
                                    rng.uniform(0.2, 1.0)));
    }
    auto before = evaluate_ap(dets, gts, default_ap_thresholds());
    // Add a true positive for an unmatched ground-truth box.
    std::vector<bool> hit(gts.size(), false);
    for (const auto& d : dets)
      for (std::size_t g = 0; g < gts.size(); ++g)
        if (rotated_iou(bev(d), bev(gts[g])) >= 0.5) hit[g] = true;
    std::size_t target = 0;
    bool found = false;
    for (std::size_t g = 0; g < gts.size(); ++g)
      if (!hit[g]) {
        target = g;
        found = true;
        break;
      }
    if (!found) continue;
    dets.push_back(as_detection(gts[target], rng.uniform(0.2, 1.0)));
    auto after = evaluate_ap(dets, gts, default_ap_thresholds());
    CHECK(after.per_class[0] >= before.per_class[0] - 1e-12);
  }
}

TEST_CASE("region filter drops centers outside the corridor") {
  RegionFilter corridor;
  corridor.label = "driving_corridor";
  corridor.enabled = true;
  corridor.x_min = 0;
  corridor.x_max = 25.6;
  corridor.y_min = -4;
  corridor.y_max = 4;

  GroundTruthBox inside = make_box(10, 0, 0);
  GroundTruthBox outside = make_box(40, 10, 0);
  // The outside box is missed, but the corridor filter removes it.
  auto res = evaluate_ap({as_detection(inside, 0.9)}, {inside, outside},
                         default_ap_thresholds(), corridor);
  CHECK(res.per_class[0] == Catch::Approx(1.0));
  CHECK(res.region == "driving_corridor");
  auto entire = evaluate_ap({as_detection(inside, 0.9)}, {inside, outside},
                            default_ap_thresholds());
  CHECK(entire.per_class[0] < 1.0);
}

TEST_CASE("complexity counts") {
  auto c = complexity_count(320, 320, 200);
  CHECK(c.dense_entries == 10485760000ull);  // (320*320)^2 = 1.048576e10
  CHECK(c.sparse_entries == 40000ull);

  auto equal = complexity_count(8, 8, 64);
  CHECK(equal.dense_entries == equal.sparse_entries);
  CHECK(complexity_count(8, 8, 0).sparse_entries == 0);
  CHECK_THROWS_AS(complexity_count(4, 4, 17), ValueError);

  // Counter agreement with the attention module for the same (H, W, p).
  ModelConfig cfg;
  cfg.variant = AttentionVariant::pillar;
  cfg.scaling.channels = {4, 4, 4};
  cfg.attention.embed_dim = 8;
  auto store = init_attention_weights<float>(4, 4, cfg.attention, 2);
  SparsePillarTensor<float> sp;
  sp.height = sp.width = 8;
  sp.indices = {0, 3, 9, 17, 33};
  sp.features = Tensor<float>({5, 4});
  OpCounters counters;
  pillar_attention_forward(sp, store, cfg, nullptr, &counters);
  auto expect = complexity_count(8, 8, 5);
  CHECK(counters.score_entries == expect.sparse_entries);
  DenseGrid<float> grid = scatter_to_grid(sp);
  OpCounters dense_counters;
  dense_masked_oracle(grid, store, cfg, &dense_counters);
  CHECK(dense_counters.score_entries == expect.dense_entries);
}

TEST_CASE("benchmark rows expose p^2 score entries") {
  ModelConfig cfg;
  cfg.variant = AttentionVariant::pillar;
  cfg.scaling.channels = {8, 8, 8};
  cfg.attention.embed_dim = 8;
  auto report = benchmark_attention<float>(cfg, {8, 16, 32}, 3);
  REQUIRE(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(row.score_entries == static_cast<std::uint64_t>(row.p) * row.p);
    CHECK(row.median_ns > 0);
  }
  std::vector<std::size_t> unsorted{16, 8};
  CHECK_THROWS_AS(benchmark_attention<float>(cfg, unsorted, 2), ValueError);
}
