#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "rpk/model.hpp"
#include "rpk/weights.hpp"

using namespace rpk;
namespace fs = std::filesystem;

TEST_CASE("init_weights is deterministic and obeys the fan-in bound") {
  ModelConfig cfg = make_preset("radarpillars-c32");
  auto a = init_weights<float>(cfg, 2024);
  auto b = init_weights<float>(cfg, 2024);
  REQUIRE(a.names() == b.names());
  for (const auto& name : a.names()) REQUIRE(a.get(name).data == b.get(name).data);

  auto c = init_weights<float>(cfg, 2025);
  CHECK(a.get("pfn.linear.weight").data != c.get("pfn.linear.weight").data);

  // Bias tensors are all zeros; norm scales are ones.
  for (const auto& spec : build_tensor_specs(cfg)) {
    const auto& t = a.get(spec.name);
    if (spec.kind == ParamKind::bias || spec.kind == ParamKind::beta ||
        spec.kind == ParamKind::running_mean)
      for (float v : t.data) REQUIRE(v == 0.0f);
    if (spec.kind == ParamKind::gamma || spec.kind == ParamKind::running_var)
      for (float v : t.data) REQUIRE(v == 1.0f);
  }

  // A 3x3 conv with 32 input channels has fan_in 288.
  const auto& conv = a.get("encoder.stage1.conv1.weight");
  double bound = 1.0 / std::sqrt(288.0);
  bool nontrivial = false;
  for (float v : conv.data) {
    REQUIRE(std::abs(v) <= bound);
    if (std::abs(v) > bound / 2) nontrivial = true;
  }
  CHECK(nontrivial);
}

TEST_CASE("weight store round trip is bit exact") {
  ModelConfig cfg = make_preset("radarpillars-c32");
  cfg.grid.n_x = cfg.grid.n_y = 64;
  auto store = init_weights<float>(cfg, 7);
  fs::path dir = fs::temp_directory_path() / "rpk_test_store";
  store.save(dir.string());
  auto loaded = WeightStore<float>::load(dir.string());
  REQUIRE(loaded.size() == store.size());
  REQUIRE(loaded.names() == store.names());
  for (const auto& name : store.names()) {
    REQUIRE(loaded.get(name).shape == store.get(name).shape);
    REQUIRE(loaded.get(name).data == store.get(name).data);
  }
  CHECK(loaded.seed() == store.seed());
  CHECK(loaded.config_hash() == store.config_hash());

  // Double store round trip.
  auto store64 = init_weights<double>(cfg, 7);
  fs::path dir64 = fs::temp_directory_path() / "rpk_test_store64";
  store64.save(dir64.string());
  auto loaded64 = WeightStore<double>::load(dir64.string());
  for (const auto& name : store64.names())
    REQUIRE(loaded64.get(name).data == store64.get(name).data);

  // Cross-dtype load converts.
  auto as_float = WeightStore<float>::load(dir64.string());
  CHECK(as_float.get("pfn.linear.weight").data[0] ==
        static_cast<float>(store64.get("pfn.linear.weight").data[0]));

  fs::remove_all(dir);
  fs::remove_all(dir64);
}

TEST_CASE("missing or mismatched tensors are shape errors") {
  ModelConfig cfg = make_preset("radarpillars-c32");
  auto store = init_weights<float>(cfg, 7);
  CHECK_THROWS_AS(store.get("no.such.tensor"), ShapeError);
  validate_store(store, cfg);
  ModelConfig wider = cfg;
  wider.scaling.channels = {64, 64, 64};
  CHECK_THROWS_AS(validate_store(store, wider), ShapeError);
}

TEST_CASE("config JSON round trip and hashing") {
  ModelConfig cfg = make_preset("radarpillars-c32-e128");
  nlohmann::json j = cfg;
  ModelConfig back = j.get<ModelConfig>();
  CHECK(canonical_config_json(back) == canonical_config_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  ModelConfig other = make_preset("baseline-pp");
  CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("parameter counts reproduce the published model sizes") {
  // Uniform (64, 64, 64): 0.79 M.
  auto u64 = count_params(make_preset("uniform-c64"));
  CHECK(u64.total == 793096);
  CHECK(std::abs(static_cast<double>(u64.total) / 1e6 - 0.79) <= 0.079);

  // Uniform (32, 32, 32) without attention: 0.26 M.
  auto u32 = count_params(make_preset("uniform-c32"));
  CHECK(u32.total == 263336);
  CHECK(std::abs(static_cast<double>(u32.total) / 1e6 - 0.26) <= 0.026);

  // Doubling baseline (64, 128, 256): 4.84 M.
  auto pp = count_params(make_preset("baseline-pp"));
  CHECK(pp.total == 4834824);
  CHECK(std::abs(static_cast<double>(pp.total) / 1e6 - 4.84) <= 0.484);

  // The full model with PillarAttention: 0.27 M.
  auto full = count_params(make_preset("radarpillars-c32"));
  CHECK(full.total == 273992);
  CHECK(std::abs(static_cast<double>(full.total) / 1e6 - 0.27) <= 0.027);

  // Uniform-vs-baseline reduction of 83.6%.
  double reduction = 1.0 - static_cast<double>(u64.total) / static_cast<double>(pp.total);
  CHECK(reduction >= 0.80);
  CHECK(reduction == Catch::Approx(0.836).margin(0.005));
}

TEST_CASE("flop counting formulas") {
  // Single 3x3 conv 32->32 on a 160x160 map: 2 * 9 * 32 * 32 * 160^2 FLOPs.
  ModelConfig cfg = make_preset("radarpillars-c32");
  auto report = count_flops(cfg, 216);
  std::uint64_t stage1_first_conv_flops = 2ull * 9 * 32 * 32 * 160 * 160;
  CHECK(stage1_first_conv_flops == 471859200ull);
  // stage 1 holds 4 such convs.
  CHECK(report.macs_per_component.at("encoder.stage1") == 4 * stage1_first_conv_flops / 2);

  // Attention scores+values at p = 200, E = 32: 2 * (2 * 200^2 * 32) FLOPs.
  ModelConfig small = cfg;
  auto r200 = count_flops(small, 200);
  std::uint64_t att_macs = r200.macs_per_component.at("att");
  std::uint64_t scores_values_flops = 2ull * (2ull * 200 * 200 * 32);
  CHECK(scores_values_flops == 5120000ull);
  std::uint64_t projections = 200ull * 32 * 32 * (1 + 3 + 1) + 2ull * 200 * 32 * 64 +
                              200ull * 32 * 32;
  CHECK(att_macs == scores_values_flops / 2 + projections);

  // Full-model totals (frozen; see also the acceptance analysis).
  CHECK(report.total_macs == 2413721856ull);
  CHECK(report.total_flops() == 2 * report.total_macs);

  // The baseline matches the published 16.46 GFLOPS under MAC counting.
  auto pp = count_flops(make_preset("baseline-pp"), 216);
  CHECK(static_cast<double>(pp.total_macs) / 1e9 == Catch::Approx(16.46).epsilon(0.02));
}

TEST_CASE("scaling config invariants") {
  ScalingConfig uniform;
  uniform.channels = {32, 32, 64};
  uniform.mode = ScalingConfig::Mode::uniform;
  CHECK_THROWS_AS(uniform.validate(), ConfigError);
  ScalingConfig doubling;
  doubling.channels = {64, 128, 256};
  doubling.mode = ScalingConfig::Mode::doubling;
  doubling.validate();
  doubling.channels = {64, 128, 128};
  CHECK_THROWS_AS(doubling.validate(), ConfigError);
}

TEST_CASE("presets cover the published configurations") {
  for (const auto& name : preset_names()) {
    ModelConfig cfg = make_preset(name);
    cfg.validate();
  }
  CHECK(make_preset("e128").attention.embed_dim == 128);
  CHECK(make_preset("e32").attention.embed_dim == 32);
  CHECK(make_preset("uniform-c512").scaling.channels[0] == 512);
  CHECK(make_preset("baseline-pp").variant == AttentionVariant::none);
  CHECK_THROWS_AS(make_preset("uniform-c13"), ConfigError);
  CHECK_THROWS_AS(make_preset("nonsense"), ConfigError);
}
