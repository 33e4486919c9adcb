// rpk: command-line front end for the 4D-radar pillar detection pipeline.
// Subcommands: gen | infer | eval | params | flops | bench | analyze-weights
// | selfcheck. Every command is deterministic given its flags and seeds.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rpk/analysis.hpp"
#include "rpk/attention.hpp"
#include "rpk/io.hpp"
#include "rpk/model.hpp"
#include "rpk/pipeline.hpp"
#include "rpk/selfcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

rpk::ModelConfig load_config(const std::string& config_path, const std::string& preset,
                             const std::string& variant) {
  rpk::ModelConfig cfg;
  if (!config_path.empty() && !preset.empty())
    throw rpk::ConfigError("give either --config or --preset, not both");
  if (!config_path.empty()) {
    cfg = json::parse(rpk::read_file(config_path)).get<rpk::ModelConfig>();
  } else {
    cfg = rpk::make_preset(preset.empty() ? "radarpillars-c32" : preset);
  }
  if (!variant.empty()) cfg.variant = rpk::variant_from_name(variant);
  cfg.validate();
  return cfg;
}

unsigned effective_jobs(unsigned jobs) {
  if (const char* env = std::getenv("RPK_THREADS")) {
    unsigned cap = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    if (cap > 0) jobs = std::min(jobs, cap);
  }
  return std::max(1u, jobs);
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu", i);
  return buf;
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir, long n_frames,
            long seed_override) {
  rpk::SceneSpec spec;
  if (!spec_path.empty()) spec = json::parse(rpk::read_file(spec_path)).get<rpk::SceneSpec>();
  if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
  fs::create_directories(fs::path(out_dir) / "frames");
  fs::create_directories(fs::path(out_dir) / "labels");

  rpk::Rng root(spec.seed);
  json manifest;
  manifest["seed"] = spec.seed;
  manifest["n_frames"] = n_frames;
  manifest["scene_spec"] = spec;
  json frames = json::array();
  for (long i = 0; i < n_frames; ++i) {
    rpk::SceneSpec frame_spec = spec;
    frame_spec.seed = root.child(static_cast<std::uint64_t>(i)).seed();
    auto [frame, boxes] = rpk::generate_scene(frame_spec);
    frame.frame_id = frame_name(static_cast<std::size_t>(i));
    std::string csv_rel = "frames/" + frame.frame_id + ".csv";
    std::string labels_rel = "labels/" + frame.frame_id + ".jsonl";
    rpk::write_file((fs::path(out_dir) / csv_rel).string(), rpk::serialize_frame(frame));
    rpk::write_file((fs::path(out_dir) / labels_rel).string(), rpk::serialize_labels(boxes));
    frames.push_back({{"frame_id", frame.frame_id}, {"csv", csv_rel}, {"labels", labels_rel}});
  }
  manifest["frames"] = frames;
  rpk::write_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cerr << "wrote " << n_frames << " frames to " << out_dir << "\n";
  return 0;
}

template <class S>
int run_infer(const rpk::ModelConfig& cfg, const std::string& weights_dir, long seed,
              const std::vector<std::string>& frame_paths, const std::string& out_path,
              const std::string& stats_path, unsigned jobs) {
  rpk::WeightStore<S> store;
  if (!weights_dir.empty()) {
    store = rpk::WeightStore<S>::load(weights_dir);
  } else {
    store = rpk::init_weights<S>(cfg, static_cast<std::uint64_t>(seed));
  }
  rpk::validate_store(store, cfg);

  rpk::NormalizationStats stats;
  bool have_stats = !stats_path.empty();
  if (have_stats) {
    stats = json::parse(rpk::read_file(stats_path)).get<rpk::NormalizationStats>();
    stats.validate();
  }

  std::vector<std::string> outputs(frame_paths.size());
  std::vector<rpk::PipelineStats> run_stats(frame_paths.size());
  std::vector<std::string> errors(frame_paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= frame_paths.size()) return;
      try {
        rpk::RadarFrame frame = rpk::parse_frame(rpk::read_file(frame_paths[i]));
        auto dets = rpk::run_pipeline<S>(frame, store, cfg, have_stats ? &stats : nullptr,
                                         &run_stats[i]);
        outputs[i] = rpk::serialize_detections(dets);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned n_threads = std::min<std::size_t>(effective_jobs(jobs), frame_paths.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < frame_paths.size(); ++i)
    if (!errors[i].empty()) throw rpk::IOError(frame_paths[i] + ": " + errors[i]);

  if (frame_paths.size() == 1 && !fs::is_directory(out_path)) {
    if (fs::path(out_path).has_parent_path())
      fs::create_directories(fs::path(out_path).parent_path());
    rpk::write_file(out_path, outputs[0]);
  } else {
    fs::create_directories(out_path);
    for (std::size_t i = 0; i < frame_paths.size(); ++i) {
      std::string stem = fs::path(frame_paths[i]).stem().string();
      rpk::write_file((fs::path(out_path) / (stem + ".dets.jsonl")).string(), outputs[i]);
    }
  }

  double mean_p = 0, mean_d = 0;
  for (const auto& s : run_stats) {
    mean_p += static_cast<double>(s.pillars);
    mean_d += static_cast<double>(s.detections);
  }
  if (!run_stats.empty()) {
    mean_p /= static_cast<double>(run_stats.size());
    mean_d /= static_cast<double>(run_stats.size());
  }
  std::cerr << "frames=" << frame_paths.size() << " mean_pillars=" << mean_p
            << " mean_detections=" << mean_d << "\n";
  return 0;
}

std::vector<std::string> collect_frames(const std::vector<std::string>& positional,
                                        const std::string& frames_dir) {
  std::vector<std::string> paths = positional;
  if (!frames_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(frames_dir))
      if (entry.path().extension() == ".csv") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw rpk::ConfigError("no input frames given");
  return paths;
}

// Pair detection and label files by their leading "name" stem (text before
// the first dot), so frame_00001.dets.jsonl matches frame_00001.jsonl.
std::vector<std::pair<std::string, std::string>> pair_eval_inputs(const std::string& dets,
                                                                  const std::string& labels) {
  auto stem_of = [](const fs::path& p) {
    std::string s = p.filename().string();
    return s.substr(0, s.find('.'));
  };
  if (!fs::is_directory(dets) && !fs::is_directory(labels)) return {{dets, labels}};
  if (!(fs::is_directory(dets) && fs::is_directory(labels)))
    throw rpk::ConfigError("--dets and --labels must both be files or both directories");
  std::map<std::string, std::string> det_map, label_map;
  for (const auto& e : fs::directory_iterator(dets))
    if (e.path().extension() == ".jsonl") det_map[stem_of(e.path())] = e.path().string();
  for (const auto& e : fs::directory_iterator(labels))
    if (e.path().extension() == ".jsonl") label_map[stem_of(e.path())] = e.path().string();
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [stem, path] : det_map) {
    auto it = label_map.find(stem);
    if (it != label_map.end()) pairs.emplace_back(path, it->second);
  }
  if (pairs.empty()) throw rpk::ConfigError("no matching detection/label file pairs");
  return pairs;
}

void emit(const json& j, const std::string& out_path) {
  std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    rpk::write_file(out_path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D-radar pillar detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, preset, variant, weights_dir, out_path, stats_path, frames_dir;
  long seed = -1;
  bool use_float64 = false;
  unsigned jobs = 1;

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic labeled scenes");
  std::string gen_spec;
  long gen_n = 10;
  gen->add_option("--spec", gen_spec, "SceneSpec JSON path (defaults built in)");
  gen->add_option("--n", gen_n, "number of frames")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed, "override the spec seed");
  gen->add_option("--out", out_path, "output directory")->required();

  // infer
  auto* infer = app.add_subcommand("infer", "run the detection pipeline on frame CSVs");
  std::vector<std::string> infer_frames;
  infer->add_option("frames", infer_frames, "frame CSV paths");
  infer->add_option("--frames-dir", frames_dir, "directory of frame CSVs");
  infer->add_option("--config", config_path, "model config JSON");
  infer->add_option("--preset", preset, "named preset configuration");
  infer->add_option("--variant", variant, "attention variant override");
  infer->add_option("--weights", weights_dir, "weight container directory");
  infer->add_option("--seed", seed, "deterministic-init seed (instead of --weights)");
  infer->add_option("--stats", stats_path, "normalization stats JSON");
  infer->add_option("--out", out_path, "output file (single frame) or directory")->required();
  infer->add_option("--jobs", jobs, "frame-level parallelism");
  infer->add_flag("--float64", use_float64, "run the pipeline in double precision");

  // eval
  auto* eval = app.add_subcommand("eval", "average precision of detections against labels");
  std::string dets_path, labels_path, region_name = "entire_area", corridor;
  std::vector<double> iou_thresholds = rpk::default_ap_thresholds();
  eval->add_option("--dets", dets_path, "detections JSONL file or directory")->required();
  eval->add_option("--labels", labels_path, "labels JSONL file or directory")->required();
  eval->add_option("--region", region_name, "entire_area or driving_corridor");
  eval->add_option("--corridor", corridor, "corridor rectangle as x0,x1,y0,y1");
  eval->add_option("--iou", iou_thresholds, "per-class IoU thresholds (car, pedestrian, cyclist)");
  eval->add_option("--out", out_path, "report JSON path (stdout if omitted)");

  // params / flops
  auto* params = app.add_subcommand("params", "parameter count report");
  params->add_option("--config", config_path, "model config JSON");
  params->add_option("--preset", preset, "named preset configuration");
  params->add_option("--variant", variant, "attention variant override");
  params->add_option("--out", out_path, "report JSON path (stdout if omitted)");

  auto* flops = app.add_subcommand("flops", "FLOP count report (1 MAC = 2 FLOPs)");
  long occupancy = 216;
  flops->add_option("--config", config_path, "model config JSON");
  flops->add_option("--preset", preset, "named preset configuration");
  flops->add_option("--variant", variant, "attention variant override");
  flops->add_option("--occupancy", occupancy, "assumed occupied-pillar count");
  flops->add_option("--out", out_path, "report JSON path (stdout if omitted)");

  // bench
  auto* bench = app.add_subcommand("bench", "attention wall-clock scaling benchmark");
  std::vector<std::size_t> p_values{256, 512, 1024, 2048};
  std::size_t reps = 7;
  bench->add_option("--config", config_path, "model config JSON");
  bench->add_option("--preset", preset, "named preset configuration");
  bench->add_option("--p", p_values, "occupancy values, ascending");
  bench->add_option("--reps", reps, "repetitions per p");
  bench->add_option("--seed", seed, "weight seed");
  bench->add_option("--out", out_path, "report JSON path (stdout if omitted)");

  // analyze-weights
  auto* analyze = app.add_subcommand("analyze-weights", "weight-magnitude box statistics");
  analyze->add_option("--weights", weights_dir, "weight container directory")->required();
  analyze->add_option("--out", out_path, "report JSON path (stdout if omitted)");
  std::string csv_path;
  analyze->add_option("--csv", csv_path, "also write a plot-ready CSV here");

  // selfcheck
  auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in oracle suites");
  selfcheck->add_flag("--float64", use_float64, "tighten tolerances to the double-precision spec");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_spec, out_path, gen_n, seed);

    if (infer->parsed()) {
      rpk::ModelConfig cfg = load_config(config_path, preset, variant);
      if (weights_dir.empty() == (seed < 0))
        throw rpk::ConfigError("provide exactly one of --weights or --seed");
      auto frames = collect_frames(infer_frames, frames_dir);
      try {
        return use_float64 ? run_infer<double>(cfg, weights_dir, seed, frames, out_path,
                                               stats_path, jobs)
                           : run_infer<float>(cfg, weights_dir, seed, frames, out_path,
                                              stats_path, jobs);
      } catch (const rpk::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }

    if (eval->parsed()) {
      rpk::RegionFilter region;
      if (region_name == "driving_corridor") {
        region.label = "driving_corridor";
        region.enabled = true;
        region.x_min = 0;
        region.x_max = 25.6;
        region.y_min = -4;
        region.y_max = 4;
        if (!corridor.empty()) {
          if (std::sscanf(corridor.c_str(), "%lf,%lf,%lf,%lf", &region.x_min, &region.x_max,
                          &region.y_min, &region.y_max) != 4)
            throw rpk::ConfigError("--corridor expects x0,x1,y0,y1");
        }
      } else if (region_name != "entire_area") {
        throw rpk::ConfigError("--region must be entire_area or driving_corridor");
      }
      std::vector<rpk::EvalFrame> frames;
      for (const auto& [det_file, label_file] : pair_eval_inputs(dets_path, labels_path)) {
        rpk::EvalFrame f;
        f.detections = rpk::parse_detections(rpk::read_file(det_file));
        f.ground_truth = rpk::parse_labels(rpk::read_file(label_file));
        frames.push_back(std::move(f));
      }
      rpk::APResult result = rpk::evaluate_ap(frames, iou_thresholds, region);
      json j = result;
      j["frames"] = frames.size();
      emit(j, out_path);
      return 0;
    }

    if (params->parsed()) {
      rpk::ModelConfig cfg = load_config(config_path, preset, variant);
      rpk::CountReport report = rpk::count_params(cfg);
      json j;
      j["per_component"] = report.per_component;
      j["total"] = report.total;
      j["total_millions"] = static_cast<double>(report.total) / 1e6;
      emit(j, out_path);
      return 0;
    }

    if (flops->parsed()) {
      rpk::ModelConfig cfg = load_config(config_path, preset, variant);
      rpk::FlopReport report = rpk::count_flops(cfg, static_cast<std::uint64_t>(occupancy));
      json j;
      j["per_component_macs"] = report.macs_per_component;
      j["total_macs"] = report.total_macs;
      j["total_flops"] = report.total_flops();
      j["gmacs"] = static_cast<double>(report.total_macs) / 1e9;
      j["gflops"] = static_cast<double>(report.total_flops()) / 1e9;
      j["occupancy"] = report.occupancy;
      emit(j, out_path);
      return 0;
    }

    if (bench->parsed()) {
      rpk::ModelConfig cfg = load_config(config_path, preset, variant);
      auto report = rpk::benchmark_attention<float>(cfg, p_values, reps,
                                                    seed < 0 ? 42u : static_cast<std::uint64_t>(seed));
      json j = report;
      emit(j, out_path);
      std::cerr << "log-log slope over the largest decade: " << report.loglog_slope << "\n";
      return 0;
    }

    if (analyze->parsed()) {
      auto store = rpk::WeightStore<float>::load(weights_dir);
      rpk::WeightMagnitudeReport report = rpk::weight_magnitude_stats(store);
      emit(json(report), out_path);
      if (!csv_path.empty()) rpk::write_file(csv_path, rpk::magnitude_report_csv(report));
      return 0;
    }

    if (selfcheck->parsed()) {
      rpk::SelfCheckResult result = rpk::run_selfcheck(use_float64, std::cout);
      if (!result.ok()) {
        std::cerr << result.failures.size() << " suite(s) failed\n";
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
