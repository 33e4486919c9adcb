#pragma once

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "rpk/attention.hpp"
#include "rpk/features.hpp"
#include "rpk/gradcheck.hpp"
#include "rpk/model.hpp"
#include "rpk/nn.hpp"
#include "rpk/pillars.hpp"
#include "rpk/rng.hpp"

namespace rpk {

// Built-in oracle suites behind `selfcheck`: sparse-vs-dense attention
// equivalence, analytic-vs-numeric gradients, conv/transposed-conv
// adjointness, velocity decomposition identities, and the weight container
// round trip. Fixed seeds; nonzero exit on any failure.

struct SelfCheckResult {
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

namespace selfcheck_detail {

template <class S>
SparsePillarTensor<S> random_sparse(Rng& rng, std::size_t h, std::size_t w, std::size_t p,
                                    std::size_t channels) {
  SparsePillarTensor<S> sp;
  sp.height = h;
  sp.width = w;
  std::vector<std::size_t> all(h * w);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (std::size_t i = all.size(); i > 1; --i)
    std::swap(all[i - 1], all[rng.uniform_index(i)]);
  all.resize(p);
  std::sort(all.begin(), all.end());
  sp.indices = all;
  sp.features = Tensor<S>({p, channels});
  for (auto& v : sp.features.data) v = static_cast<S>(rng.uniform(-2.0, 2.0));
  return sp;
}

template <class S>
double oracle_gap(Rng& rng, std::size_t h, std::size_t w, std::size_t p, std::size_t channels,
                  std::uint32_t embed, std::uint64_t seed) {
  AttentionConfig acfg;
  acfg.embed_dim = embed;
  ModelConfig cfg;
  cfg.variant = AttentionVariant::pillar;
  cfg.attention = acfg;
  cfg.scaling.channels = {static_cast<std::uint32_t>(channels),
                          static_cast<std::uint32_t>(channels),
                          static_cast<std::uint32_t>(channels)};
  WeightStore<S> store = init_attention_weights<S>(channels, channels, acfg, seed);

  auto sparse = random_sparse<S>(rng, h, w, p, channels);
  auto grid = scatter_to_grid(sparse);
  auto sparse_out = pillar_attention_forward(sparse, store, cfg);
  auto dense_out = dense_masked_oracle(grid, store, cfg);
  auto scattered = scatter_to_grid(sparse_out);

  double max_diff = 0.0;
  for (std::size_t i = 0; i < dense_out.features.size(); ++i) {
    double diff = std::abs(static_cast<double>(dense_out.features.data[i]) -
                           static_cast<double>(scattered.features.data[i]));
    max_diff = std::max(max_diff, diff);
  }
  return max_diff;
}

template <class S>
double gradcheck_worst(Rng& rng, std::size_t p, std::size_t channels, std::uint32_t embed,
                       std::uint64_t seed, double h_step) {
  AttentionConfig acfg;
  acfg.embed_dim = embed;
  WeightStore<S> store = init_attention_weights<S>(channels, channels, acfg, seed);
  Tensor<S> tokens({p, channels});
  for (auto& v : tokens.data) v = static_cast<S>(rng.uniform(-1.5, 1.5));
  Tensor<S> probe({p, channels});
  for (auto& v : probe.data) v = static_cast<S>(rng.uniform(-1.0, 1.0));

  auto loss = [&]() {
    Tensor<S> out = attention_block_forward(tokens, nullptr, store, acfg);
    double acc = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
      acc += static_cast<double>(out.data[i]) * static_cast<double>(probe.data[i]);
    return acc;
  };

  AttentionCache<S> cache;
  attention_block_forward(tokens, nullptr, store, acfg, &cache);
  auto grads = attention_block_backward(cache, store, acfg, probe);

  double worst = max_relative_error(grads.tokens, central_difference_grad(tokens, loss, h_step));
  for (const auto& name : store.names()) {
    Tensor<S>& param = store.get_mutable(name);
    Tensor<S> numeric = central_difference_grad(param, loss, h_step);
    worst = std::max(worst, max_relative_error(grads.weights.at(name), numeric));
  }
  return worst;
}

template <class S>
double adjointness_worst(Rng& rng, int trials) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::size_t cin = 1 + rng.uniform_index(3);
    std::size_t cout = 1 + rng.uniform_index(3);
    std::size_t k = 1 + rng.uniform_index(3);
    std::size_t stride = 1 + rng.uniform_index(2);
    std::size_t pad = rng.uniform_index(2);
    std::size_t h = k + pad + 2 + rng.uniform_index(6);
    std::size_t w = k + pad + 2 + rng.uniform_index(6);
    Tensor<S> x({cin, h, w});
    for (auto& v : x.data) v = static_cast<S>(rng.uniform(-1.0, 1.0));
    Tensor<S> kernel({cout, cin, k, k});
    for (auto& v : kernel.data) v = static_cast<S>(rng.uniform(-1.0, 1.0));
    Tensor<S> cx = conv2d<S>(x, kernel, nullptr, stride, pad);
    Tensor<S> y(cx.shape);
    for (auto& v : y.data) v = static_cast<S>(rng.uniform(-1.0, 1.0));
    std::size_t opad_h = h - ((cx.dim(1) - 1) * stride + k - 2 * pad);
    std::size_t opad_w = w - ((cx.dim(2) - 1) * stride + k - 2 * pad);
    Tensor<S> ty = transposed_conv2d<S>(y, kernel, nullptr, stride, pad, opad_h,
                                        static_cast<long>(opad_w));
    double lhs = 0, rhs = 0, scale = 0;
    for (std::size_t i = 0; i < cx.size(); ++i)
      lhs += static_cast<double>(cx.data[i]) * static_cast<double>(y.data[i]);
    for (std::size_t i = 0; i < x.size(); ++i)
      rhs += static_cast<double>(x.data[i]) * static_cast<double>(ty.data[i]);
    scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

}  // namespace selfcheck_detail

inline SelfCheckResult run_selfcheck(bool use_float64, std::ostream& out) {
  SelfCheckResult result;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "[ok]   " : "[FAIL] ") << name << ": " << detail << "\n";
    if (!ok) result.failures.push_back(name);
  };
  char buf[128];

  {
    Rng rng(1001);
    double tol = use_float64 ? 1e-10 : 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 25; ++i) {
      std::size_t h = 1 + rng.uniform_index(16);
      std::size_t w = 1 + rng.uniform_index(16);
      std::size_t hw = h * w;
      std::size_t p = i == 0 ? 0 : i == 1 ? 1 : i == 2 ? hw : rng.uniform_index(hw + 1);
      std::size_t c = 1 + rng.uniform_index(8);
      std::uint32_t e = (i % 2 == 0) ? 8u : 32u;
      double gap = use_float64
                       ? selfcheck_detail::oracle_gap<double>(rng, h, w, p, c, e, 7000 + i)
                       : selfcheck_detail::oracle_gap<float>(rng, h, w, p, c, e, 7000 + i);
      worst = std::max(worst, gap);
    }
    std::snprintf(buf, sizeof(buf), "max |sparse - dense| = %.3e (tol %.0e)", worst, tol);
    report("attention sparse equals dense masked oracle", worst < tol, buf);
  }

  {
    Rng rng(2002);
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      std::size_t p = 1 + rng.uniform_index(8);
      std::size_t c = 1 + rng.uniform_index(4);
      std::uint32_t e = (i % 2 == 0) ? 4u : 8u;
      worst = std::max(worst,
                       selfcheck_detail::gradcheck_worst<double>(rng, p, c, e, 9000 + i, 1e-5));
    }
    std::snprintf(buf, sizeof(buf), "max relative error = %.3e (tol 1e-06)", worst);
    report("attention analytic gradients match finite differences", worst < 1e-6, buf);
  }

  {
    Rng rng(3003);
    double tol = use_float64 ? 1e-11 : 1e-5;
    double worst = use_float64 ? selfcheck_detail::adjointness_worst<double>(rng, 20)
                               : selfcheck_detail::adjointness_worst<float>(rng, 20);
    std::snprintf(buf, sizeof(buf), "max <conv x, y> - <x, tconv y> gap = %.3e (tol %.0e)", worst,
                  tol);
    report("conv2d / transposed_conv2d adjoint identity", worst < tol, buf);
  }

  {
    Rng rng(4004);
    double worst_energy = 0.0;
    bool signs_ok = true, flip_ok = true;
    for (int i = 0; i < 100000; ++i) {
      double x = rng.uniform(-60.0, 60.0);
      double y = rng.uniform(-60.0, 60.0);
      double v = rng.uniform(-30.0, 30.0);
      if (x == 0 && y == 0) continue;
      auto d = decompose_radial(x, y, v);
      double lhs = d.v_x * d.v_x + d.v_y * d.v_y;
      double rel = std::abs(lhs - v * v) / std::max(1e-12, v * v);
      worst_energy = std::max(worst_energy, rel);
      if (x != 0 && v != 0 && d.v_x * (v * x) < 0) signs_ok = false;
      if (y != 0 && v != 0 && d.v_y * (v * y) < 0) signs_ok = false;
      auto f = decompose_radial(x, -y, v);
      if (f.v_x != d.v_x || f.v_y != -d.v_y) flip_ok = false;
    }
    std::snprintf(buf, sizeof(buf), "max energy error = %.3e, signs %s, flip %s", worst_energy,
                  signs_ok ? "ok" : "bad", flip_ok ? "ok" : "bad");
    report("velocity decomposition identities", worst_energy < 1e-9 && signs_ok && flip_ok, buf);
  }

  {
    ModelConfig cfg = make_preset("radarpillars-c32");
    cfg.grid.n_x = cfg.grid.n_y = 32;  // small store for the round trip
    WeightStore<float> store = init_weights<float>(cfg, 99);
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "rpk_selfcheck_weights";
    store.save(dir.string());
    WeightStore<float> loaded = WeightStore<float>::load(dir.string());
    bool ok = loaded.size() == store.size();
    for (const auto& name : store.names())
      ok = ok && loaded.has(name) && loaded.get(name).shape == store.get(name).shape &&
           loaded.get(name).data == store.get(name).data;
    fs::remove_all(dir);
    report("weight container bit-exact round trip", ok,
           ok ? "all tensors identical" : "mismatch after reload");
  }

  return result;
}

}  // namespace rpk
