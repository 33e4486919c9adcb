#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpk/errors.hpp"
#include "rpk/features.hpp"
#include "rpk/pillars.hpp"
#include "rpk/rng.hpp"
#include "rpk/weights.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Architecture configuration
// ---------------------------------------------------------------------------

enum class AttentionVariant { none, pillar, point_masked, point_unmasked, feature_late };

inline const char* variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::none: return "none";
    case AttentionVariant::pillar: return "pillar";
    case AttentionVariant::point_masked: return "point_masked";
    case AttentionVariant::point_unmasked: return "point_unmasked";
    case AttentionVariant::feature_late: return "feature_late";
  }
  return "none";
}

inline AttentionVariant variant_from_name(const std::string& s) {
  if (s == "none") return AttentionVariant::none;
  if (s == "pillar") return AttentionVariant::pillar;
  if (s == "point_masked") return AttentionVariant::point_masked;
  if (s == "point_unmasked") return AttentionVariant::point_unmasked;
  if (s == "feature_late") return AttentionVariant::feature_late;
  throw ConfigError("unknown attention variant '" + s + "'");
}

struct AttentionConfig {
  std::uint32_t embed_dim = 32;  // hidden dimension E
  std::uint32_t heads = 1;
  std::uint32_t expansion = 2;   // FFN width factor
  bool prenorm = false;          // extra layer norm before the attention sub-block

  void validate() const {
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0)
      throw ConfigError("attention: E must be a positive multiple of heads");
    if (expansion < 1) throw ConfigError("attention: expansion must be >= 1");
  }
};

// Channel plan for the three encoder stages.
struct ScalingConfig {
  enum class Mode { uniform, doubling, custom };
  std::array<std::uint32_t, 3> channels{32, 32, 32};
  Mode mode = Mode::uniform;

  void validate() const {
    for (auto c : channels)
      if (c == 0) throw ConfigError("stage channels must be positive");
    if (mode == Mode::uniform &&
        !(channels[0] == channels[1] && channels[1] == channels[2]))
      throw ConfigError("uniform scaling requires equal stage channels");
    if (mode == Mode::doubling &&
        !(channels[1] == 2 * channels[0] && channels[2] == 4 * channels[0]))
      throw ConfigError("doubling scaling requires (C, 2C, 4C)");
  }
};

struct AnchorClassSpec {
  std::string name;
  double l = 1, w = 1, h = 1;
  double z = 0;  // anchor center height
  double pos_iou = 0.5, neg_iou = 0.35;
};

struct AnchorSpec {
  std::vector<AnchorClassSpec> classes;
  std::vector<double> rotations{0.0, 1.5707963267948966};

  std::size_t anchors_per_cell() const { return classes.size() * rotations.size(); }

  void validate() const {
    if (classes.empty() || rotations.empty()) throw ConfigError("anchor spec is empty");
    for (const auto& c : classes) {
      if (!(c.l > 0) || !(c.w > 0) || !(c.h > 0)) throw ConfigError("anchor sizes must be > 0");
      if (!(c.pos_iou > c.neg_iou)) throw ConfigError("pos_iou must exceed neg_iou");
    }
  }

  static AnchorSpec defaults() {
    AnchorSpec spec;
    spec.classes = {{"car", 3.9, 1.6, 1.56, 0.0, 0.6, 0.45},
                    {"pedestrian", 0.8, 0.6, 1.73, 0.0, 0.5, 0.35},
                    {"cyclist", 1.76, 0.6, 1.73, 0.0, 0.5, 0.35}};
    return spec;
  }
};

struct ModelConfig {
  GridConfig grid;
  FeatureSetConfig features;
  ScalingConfig scaling;
  // Convolutions per stage after the stride-2 stage head; every stage starts
  // with one stride-2 3x3 convolution, so stage s runs 1 + stage_layers[s]
  // convolutions at 1/2^(s+1) of the grid resolution.
  std::array<std::uint32_t, 3> stage_layers{3, 5, 5};
  std::uint32_t neck_channels = 128;  // per-lateral upsample width
  AttentionVariant variant = AttentionVariant::pillar;
  AttentionConfig attention;
  AnchorSpec anchors = AnchorSpec::defaults();
  double score_threshold = 0.1;
  double nms_iou = 0.5;
  std::uint32_t pre_nms_max = 1024;
  std::uint32_t max_detections = 500;
  // Dense token guard for the late feature-attention variant, which is
  // quadratic in the map size.
  std::uint32_t attention_token_limit = 16384;
  double bn_eps = 1e-5;
  bool offsets_pre_cap = true;

  std::size_t num_classes() const { return anchors.classes.size(); }
  std::size_t point_feature_dim() const { return features.channel_count(); }
  std::size_t encoder_input_dim() const { return point_feature_dim() + 3; }
  std::size_t head_height() const { return grid.height() / 2; }
  std::size_t head_width() const { return grid.width() / 2; }
  std::size_t fused_channels() const { return 3 * neck_channels; }

  std::size_t attention_in_channels() const {
    switch (variant) {
      case AttentionVariant::pillar: return scaling.channels[0];
      case AttentionVariant::point_masked:
      case AttentionVariant::point_unmasked: return encoder_input_dim();
      case AttentionVariant::feature_late: return fused_channels();
      case AttentionVariant::none: return 0;
    }
    return 0;
  }

  std::size_t attention_out_channels() const {
    switch (variant) {
      case AttentionVariant::pillar:
      case AttentionVariant::point_masked:
      case AttentionVariant::point_unmasked: return scaling.channels[0];
      case AttentionVariant::feature_late: return fused_channels();
      case AttentionVariant::none: return 0;
    }
    return 0;
  }

  bool has_pfn() const {
    return variant != AttentionVariant::point_masked && variant != AttentionVariant::point_unmasked;
  }

  void validate() const {
    grid.validate();
    features.validate();
    scaling.validate();
    attention.validate();
    anchors.validate();
    if (grid.n_x % 8 != 0 || grid.n_y % 8 != 0)
      throw ConfigError("grid size must be divisible by 8 (three stride-2 stages)");
    if (neck_channels == 0) throw ConfigError("neck_channels must be positive");
    if (score_threshold < 0 || score_threshold > 1)
      throw ConfigError("score_threshold must be in [0, 1]");
    if (!(nms_iou > 0 && nms_iou < 1)) throw ConfigError("nms_iou must be in (0, 1)");
  }
};

// ---------------------------------------------------------------------------
// Config JSON (one canonical schema; also the CLI config file format)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const GridConfig& g) {
  j = nlohmann::json{{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min},
                     {"y_max", g.y_max}, {"z_min", g.z_min}, {"z_max", g.z_max},
                     {"n_x", g.n_x},     {"n_y", g.n_y},
                     {"max_points_per_pillar", g.max_points_per_pillar}};
}

inline void from_json(const nlohmann::json& j, GridConfig& g) {
  GridConfig d;
  g.x_min = j.value("x_min", d.x_min);
  g.x_max = j.value("x_max", d.x_max);
  g.y_min = j.value("y_min", d.y_min);
  g.y_max = j.value("y_max", d.y_max);
  g.z_min = j.value("z_min", d.z_min);
  g.z_max = j.value("z_max", d.z_max);
  g.n_x = j.value("n_x", d.n_x);
  g.n_y = j.value("n_y", d.n_y);
  g.max_points_per_pillar = j.value("max_points_per_pillar", d.max_points_per_pillar);
}

inline void to_json(nlohmann::json& j, const AttentionConfig& a) {
  j = nlohmann::json{{"embed_dim", a.embed_dim},
                     {"heads", a.heads},
                     {"expansion", a.expansion},
                     {"prenorm", a.prenorm}};
}

inline void from_json(const nlohmann::json& j, AttentionConfig& a) {
  AttentionConfig d;
  a.embed_dim = j.value("embed_dim", d.embed_dim);
  a.heads = j.value("heads", d.heads);
  a.expansion = j.value("expansion", d.expansion);
  a.prenorm = j.value("prenorm", d.prenorm);
}

inline void to_json(nlohmann::json& j, const ScalingConfig& s) {
  const char* mode = s.mode == ScalingConfig::Mode::uniform
                         ? "uniform"
                         : s.mode == ScalingConfig::Mode::doubling ? "doubling" : "custom";
  j = nlohmann::json{{"channels", s.channels}, {"mode", mode}};
}

inline void from_json(const nlohmann::json& j, ScalingConfig& s) {
  ScalingConfig d;
  s.channels = j.value("channels", d.channels);
  std::string mode = j.value("mode", std::string("custom"));
  s.mode = mode == "uniform" ? ScalingConfig::Mode::uniform
           : mode == "doubling" ? ScalingConfig::Mode::doubling
                                : ScalingConfig::Mode::custom;
}

inline void to_json(nlohmann::json& j, const AnchorClassSpec& a) {
  j = nlohmann::json{{"name", a.name},       {"l", a.l},
                     {"w", a.w},             {"h", a.h},
                     {"z", a.z},             {"pos_iou", a.pos_iou},
                     {"neg_iou", a.neg_iou}};
}

inline void from_json(const nlohmann::json& j, AnchorClassSpec& a) {
  j.at("name").get_to(a.name);
  j.at("l").get_to(a.l);
  j.at("w").get_to(a.w);
  j.at("h").get_to(a.h);
  a.z = j.value("z", 0.0);
  a.pos_iou = j.value("pos_iou", 0.5);
  a.neg_iou = j.value("neg_iou", 0.35);
}

inline void to_json(nlohmann::json& j, const AnchorSpec& a) {
  j = nlohmann::json{{"classes", a.classes}, {"rotations", a.rotations}};
}

inline void from_json(const nlohmann::json& j, AnchorSpec& a) {
  AnchorSpec d = AnchorSpec::defaults();
  a.classes = j.value("classes", d.classes);
  a.rotations = j.value("rotations", d.rotations);
}

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = nlohmann::json{{"grid", m.grid},
                     {"features", m.features},
                     {"scaling", m.scaling},
                     {"stage_layers", m.stage_layers},
                     {"neck_channels", m.neck_channels},
                     {"variant", variant_name(m.variant)},
                     {"attention", m.attention},
                     {"anchors", m.anchors},
                     {"score_threshold", m.score_threshold},
                     {"nms_iou", m.nms_iou},
                     {"pre_nms_max", m.pre_nms_max},
                     {"max_detections", m.max_detections},
                     {"attention_token_limit", m.attention_token_limit},
                     {"bn_eps", m.bn_eps},
                     {"offsets_pre_cap", m.offsets_pre_cap}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  ModelConfig d;
  m.grid = j.value("grid", d.grid);
  m.features = j.value("features", d.features);
  m.scaling = j.value("scaling", d.scaling);
  m.stage_layers = j.value("stage_layers", d.stage_layers);
  m.neck_channels = j.value("neck_channels", d.neck_channels);
  m.variant = variant_from_name(j.value("variant", std::string("pillar")));
  m.attention = j.value("attention", d.attention);
  m.anchors = j.value("anchors", d.anchors);
  m.score_threshold = j.value("score_threshold", d.score_threshold);
  m.nms_iou = j.value("nms_iou", d.nms_iou);
  m.pre_nms_max = j.value("pre_nms_max", d.pre_nms_max);
  m.max_detections = j.value("max_detections", d.max_detections);
  m.attention_token_limit = j.value("attention_token_limit", d.attention_token_limit);
  m.bn_eps = j.value("bn_eps", d.bn_eps);
  m.offsets_pre_cap = j.value("offsets_pre_cap", d.offsets_pre_cap);
}

// Canonical serialization (sorted keys, no whitespace) used for hashing.
inline std::string canonical_config_json(const ModelConfig& cfg) {
  nlohmann::json j = cfg;  // nlohmann::json orders keys lexicographically
  return j.dump();
}

inline std::string config_hash(const ModelConfig& cfg) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config_json(cfg))));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Presets: the named configurations used throughout the evaluation tables.
// ---------------------------------------------------------------------------

inline ModelConfig make_preset(const std::string& name) {
  ModelConfig cfg;
  auto uniform = [&](std::uint32_t c) {
    cfg.scaling.channels = {c, c, c};
    cfg.scaling.mode = ScalingConfig::Mode::uniform;
  };
  auto base_features = [&]() {
    cfg.features = FeatureSetConfig{};
    cfg.features.v_rel_xy = false;
    cfg.features.v_r_xy = false;  // {x, y, z, rcs, v_rel, v_r}
  };
  if (name == "radarpillars-c32" || name == "e32") {
    uniform(32);
    cfg.variant = AttentionVariant::pillar;
    cfg.attention.embed_dim = 32;
    return cfg;
  }
  if (name == "radarpillars-c32-e128" || name == "e128") {
    uniform(32);
    cfg.variant = AttentionVariant::pillar;
    cfg.attention.embed_dim = 128;
    return cfg;
  }
  if (name.rfind("uniform-c", 0) == 0) {
    int c = std::stoi(name.substr(9));
    if (c <= 0 || (c & (c - 1)) != 0 || c < 16 || c > 512)
      throw ConfigError("uniform presets cover c16..c512 (powers of two)");
    uniform(static_cast<std::uint32_t>(c));
    cfg.variant = AttentionVariant::none;
    base_features();
    return cfg;
  }
  if (name == "baseline-pp") {
    cfg.scaling.channels = {64, 128, 256};
    cfg.scaling.mode = ScalingConfig::Mode::doubling;
    cfg.variant = AttentionVariant::none;
    base_features();
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
  return {"radarpillars-c32", "radarpillars-c32-e128", "e32",        "e128",
          "uniform-c16",      "uniform-c32",           "uniform-c64", "uniform-c128",
          "uniform-c256",     "uniform-c512",          "baseline-pp"};
}

// ---------------------------------------------------------------------------
// Tensor enumeration: the single source of truth for which tensors a config
// owns. init_weights, count_params, and the forward passes all consume it.
// ---------------------------------------------------------------------------

enum class ParamKind { weight, bias, gamma, beta, running_mean, running_var };

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  ParamKind kind = ParamKind::weight;
  std::size_t fan_in = 1;  // only meaningful for kind == weight

  std::size_t size() const { return Tensor<float>::numel(shape); }
};

namespace detail {

inline void add_bn(std::vector<TensorSpec>& specs, const std::string& prefix, std::size_t c) {
  specs.push_back({prefix + ".gamma", {c}, ParamKind::gamma});
  specs.push_back({prefix + ".beta", {c}, ParamKind::beta});
  specs.push_back({prefix + ".mean", {c}, ParamKind::running_mean});
  specs.push_back({prefix + ".var", {c}, ParamKind::running_var});
}

inline void add_linear(std::vector<TensorSpec>& specs, const std::string& prefix, std::size_t out,
                       std::size_t in) {
  specs.push_back({prefix + ".weight", {out, in}, ParamKind::weight, in});
  specs.push_back({prefix + ".bias", {out}, ParamKind::bias});
}

}  // namespace detail

inline void append_attention_specs(std::vector<TensorSpec>& specs, std::size_t embed_dim,
                                   std::size_t cin, std::size_t cout, std::size_t expansion,
                                   bool prenorm) {
  const std::size_t e = embed_dim;
  detail::add_linear(specs, "att.in_proj", e, cin);
  if (prenorm) {
    specs.push_back({"att.prenorm.gamma", {e}, ParamKind::gamma});
    specs.push_back({"att.prenorm.beta", {e}, ParamKind::beta});
  }
  detail::add_linear(specs, "att.q", e, e);
  detail::add_linear(specs, "att.k", e, e);
  detail::add_linear(specs, "att.v", e, e);
  detail::add_linear(specs, "att.attn_out", e, e);
  specs.push_back({"att.ffn.norm.gamma", {e}, ParamKind::gamma});
  specs.push_back({"att.ffn.norm.beta", {e}, ParamKind::beta});
  detail::add_linear(specs, "att.ffn.w1", expansion * e, e);
  detail::add_linear(specs, "att.ffn.w2", e, expansion * e);
  detail::add_linear(specs, "att.out_proj", cout, e);
}

inline std::vector<TensorSpec> build_tensor_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<TensorSpec> specs;
  const auto c1 = cfg.scaling.channels[0];
  const std::size_t d_in = cfg.encoder_input_dim();

  if (cfg.has_pfn()) {
    specs.push_back({"pfn.linear.weight", {c1, d_in}, ParamKind::weight, d_in});
    detail::add_bn(specs, "pfn.bn", c1);
  }

  if (cfg.variant != AttentionVariant::none) {
    append_attention_specs(specs, cfg.attention.embed_dim, cfg.attention_in_channels(),
                           cfg.attention_out_channels(), cfg.attention.expansion,
                           cfg.attention.prenorm);
  }

  for (std::size_t s = 0; s < 3; ++s) {
    std::size_t cin = s == 0 ? c1 : cfg.scaling.channels[s - 1];
    std::size_t cout = cfg.scaling.channels[s];
    std::string stage = "encoder.stage" + std::to_string(s + 1);
    for (std::size_t j = 0; j <= cfg.stage_layers[s]; ++j) {
      std::size_t in = j == 0 ? cin : cout;
      specs.push_back({stage + ".conv" + std::to_string(j) + ".weight",
                       {cout, in, 3, 3},
                       ParamKind::weight,
                       in * 9});
      detail::add_bn(specs, stage + ".bn" + std::to_string(j), cout);
    }
  }

  for (std::size_t s = 0; s < 3; ++s) {
    std::size_t k = std::size_t(1) << s;  // kernel == stride: 1, 2, 4
    std::string lat = "neck.lateral" + std::to_string(s + 1);
    // fan_in of the adjoint map: contributions per output element.
    specs.push_back({lat + ".weight",
                     {cfg.scaling.channels[s], cfg.neck_channels, k, k},
                     ParamKind::weight,
                     cfg.scaling.channels[s]});
    detail::add_bn(specs, lat + ".bn", cfg.neck_channels);
  }

  const std::size_t f = cfg.fused_channels();
  const std::size_t a = cfg.anchors.anchors_per_cell();
  const std::size_t k_cls = cfg.num_classes();
  specs.push_back({"head.cls.weight", {a * k_cls, f, 1, 1}, ParamKind::weight, f});
  specs.push_back({"head.cls.bias", {a * k_cls}, ParamKind::bias});
  specs.push_back({"head.box.weight", {a * 7, f, 1, 1}, ParamKind::weight, f});
  specs.push_back({"head.box.bias", {a * 7}, ParamKind::bias});
  specs.push_back({"head.dir.weight", {a * 2, f, 1, 1}, ParamKind::weight, f});
  specs.push_back({"head.dir.bias", {a * 2}, ParamKind::bias});
  return specs;
}

// ---------------------------------------------------------------------------
// Deterministic initialization. Weights are uniform in
// [-1/sqrt(fan_in), +1/sqrt(fan_in)], drawn from a per-tensor splitmix64
// stream seeded with (seed XOR fnv1a(name)). Biases and shift terms are zero,
// norm scales one, running means zero, running variances one. The same
// (config, seed) reproduces the store bit for bit in any implementation of
// this scheme.
// ---------------------------------------------------------------------------
template <class S>
void init_from_specs(WeightStore<S>& store, const std::vector<TensorSpec>& specs,
                     std::uint64_t seed) {
  for (const TensorSpec& spec : specs) {
    Tensor<S> t(spec.shape);
    switch (spec.kind) {
      case ParamKind::weight: {
        double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        std::uint64_t state = seed ^ fnv1a64(spec.name);
        for (std::size_t i = 0; i < t.size(); ++i) {
          double u = static_cast<double>(splitmix64_next(state) >> 11) * 0x1.0p-53;
          t.data[i] = static_cast<S>((2.0 * u - 1.0) * bound);
        }
        break;
      }
      case ParamKind::bias:
      case ParamKind::beta:
      case ParamKind::running_mean:
        break;  // zeros
      case ParamKind::gamma:
      case ParamKind::running_var:
        t.fill(S(1));
        break;
    }
    store.add(spec.name, std::move(t));
  }
}

template <class S = float>
WeightStore<S> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  WeightStore<S> store;
  store.set_metadata(seed, config_hash(cfg));
  init_from_specs(store, build_tensor_specs(cfg), seed);
  return store;
}

// A store holding only the transformer-block tensors; initialization is
// identical to the corresponding subset of a full model store with the same
// seed (per-tensor streams depend only on seed and name).
template <class S = float>
WeightStore<S> init_attention_weights(std::size_t cin, std::size_t cout,
                                      const AttentionConfig& acfg, std::uint64_t seed) {
  acfg.validate();
  std::vector<TensorSpec> specs;
  append_attention_specs(specs, acfg.embed_dim, cin, cout, acfg.expansion, acfg.prenorm);
  WeightStore<S> store;
  store.set_metadata(seed, "attention-block");
  init_from_specs(store, specs, seed);
  return store;
}

// Checks that a store carries exactly the tensors the config expects.
template <class S>
void validate_store(const WeightStore<S>& store, const ModelConfig& cfg) {
  for (const TensorSpec& spec : build_tensor_specs(cfg)) {
    const Tensor<S>& t = store.get(spec.name);
    if (t.shape != spec.shape)
      throw ShapeError("tensor '" + spec.name + "' has shape " + shape_str(t.shape) +
                       ", config expects " + shape_str(spec.shape));
  }
}

// ---------------------------------------------------------------------------
// Parameter and FLOP counting
// ---------------------------------------------------------------------------

struct CountReport {
  std::map<std::string, std::uint64_t> per_component;
  std::uint64_t total = 0;
};

namespace detail {

inline std::string component_of(const std::string& name) {
  auto dot = name.find('.');
  std::string head = name.substr(0, dot);
  if (head == "encoder") {
    auto second = name.find('.', dot + 1);
    return name.substr(0, second);
  }
  return head;
}

}  // namespace detail

// Learnable parameters: weights, biases, and norm affine terms. Running
// statistics are bookkeeping, not parameters.
inline CountReport count_params(const ModelConfig& cfg) {
  CountReport report;
  for (const TensorSpec& spec : build_tensor_specs(cfg)) {
    if (spec.kind == ParamKind::running_mean || spec.kind == ParamKind::running_var) continue;
    report.per_component[detail::component_of(spec.name)] += spec.size();
    report.total += spec.size();
  }
  return report;
}

struct FlopReport {
  std::map<std::string, std::uint64_t> macs_per_component;
  std::uint64_t total_macs = 0;
  std::uint64_t occupancy = 0;  // pillar count assumed for the attention term
  // 1 MAC = 2 FLOPs. Batch norm, activations, and softmax are excluded from
  // the totals.
  std::uint64_t total_flops() const { return 2 * total_macs; }
};

// Multiply-accumulate counts for one forward pass at the configured grid.
// `occupancy` is the assumed number of occupied pillars (and of input
// points), which only the input layer and attention depend on; the default
// is the mean points-per-scan of the target sensor.
inline FlopReport count_flops(const ModelConfig& cfg, std::uint64_t occupancy = 216) {
  cfg.validate();
  FlopReport report;
  report.occupancy = occupancy;
  auto add = [&](const std::string& component, std::uint64_t macs) {
    report.macs_per_component[component] += macs;
    report.total_macs += macs;
  };

  const std::uint64_t d_in = cfg.encoder_input_dim();
  const std::uint64_t c1 = cfg.scaling.channels[0];
  if (cfg.has_pfn()) add("pfn", occupancy * d_in * c1);

  if (cfg.variant != AttentionVariant::none) {
    std::uint64_t tokens = occupancy;
    if (cfg.variant == AttentionVariant::point_masked ||
        cfg.variant == AttentionVariant::point_unmasked)
      tokens = occupancy * cfg.grid.max_points_per_pillar;
    if (cfg.variant == AttentionVariant::feature_late)
      tokens = static_cast<std::uint64_t>(cfg.head_height()) * cfg.head_width();
    const std::uint64_t e = cfg.attention.embed_dim;
    const std::uint64_t cin = cfg.attention_in_channels();
    const std::uint64_t cout = cfg.attention_out_channels();
    std::uint64_t macs = tokens * cin * e;        // in-projection
    macs += 3 * tokens * e * e;                   // Q, K, V
    macs += 2 * tokens * tokens * e;              // scores + value mix
    macs += tokens * e * e;                       // attention output projection
    macs += 2 * tokens * e * (cfg.attention.expansion * e);  // FFN
    macs += tokens * e * cout;                    // out-projection
    add("att", macs);
  }

  for (std::size_t s = 0; s < 3; ++s) {
    std::uint64_t cin = s == 0 ? c1 : cfg.scaling.channels[s - 1];
    std::uint64_t cout = cfg.scaling.channels[s];
    std::uint64_t hw = (cfg.grid.height() >> (s + 1)) * (cfg.grid.width() >> (s + 1));
    std::string stage = "encoder.stage" + std::to_string(s + 1);
    add(stage, 9 * cin * cout * hw);
    for (std::size_t j = 0; j < cfg.stage_layers[s]; ++j) add(stage, 9 * cout * cout * hw);
  }

  for (std::size_t s = 0; s < 3; ++s) {
    std::uint64_t k = std::uint64_t(1) << s;
    std::uint64_t hw_in = (cfg.grid.height() >> (s + 1)) * (cfg.grid.width() >> (s + 1));
    add("neck", k * k * cfg.scaling.channels[s] * cfg.neck_channels * hw_in);
  }

  const std::uint64_t a = cfg.anchors.anchors_per_cell();
  const std::uint64_t head_out = a * cfg.num_classes() + a * 7 + a * 2;
  add("head", cfg.fused_channels() * head_out * cfg.head_height() * cfg.head_width());
  return report;
}

}  // namespace rpk
