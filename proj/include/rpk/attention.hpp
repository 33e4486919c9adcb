#pragma once

#include <cmath>
#include <type_traits>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpk/errors.hpp"
#include "rpk/model.hpp"
#include "rpk/nn.hpp"
#include "rpk/pillars.hpp"
#include "rpk/tensor.hpp"
#include "rpk/weights.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Operation counters: the complexity claim made measurable. The sparse path
// computes exactly heads * p^2 score entries; the dense reference computes
// heads * (HW)^2.
// ---------------------------------------------------------------------------
struct OpCounters {
  std::string variant;
  std::size_t grid_h = 0, grid_w = 0;
  std::size_t p = 0;  // token count
  std::uint64_t score_entries = 0;
  std::uint64_t flops = 0;  // 2 * MACs of the block at this token count
};

inline void to_json(nlohmann::json& j, const OpCounters& c) {
  j = nlohmann::json{{"variant", c.variant}, {"H", c.grid_h},
                     {"W", c.grid_w},        {"p", c.p},
                     {"score_entries", c.score_entries}, {"flops", c.flops}};
}

// Everything the backward pass needs from one forward call.
template <class S>
struct AttentionCache {
  Tensor<S> tokens;   // n x Cin
  Tensor<S> x;        // in-projection output, n x E
  Tensor<S> a;        // attention input (x, or prenorm(x))
  Tensor<S> q, k, v;  // n x E
  Tensor<S> probs;    // heads x n x n
  Tensor<S> mixed;    // concatenated head outputs, n x E
  Tensor<S> y;        // x + attention output
  Tensor<S> ln;       // layer-normed y
  Tensor<S> h1;       // FFN hidden pre-activation
  Tensor<S> g;        // gelu(h1)
  Tensor<S> z;        // y + FFN output
  std::vector<std::uint8_t> key_mask;  // empty means all keys valid
};

template <class S>
struct AttentionGradients {
  Tensor<S> tokens;  // gradient w.r.t. the input tokens
  std::map<std::string, Tensor<S>> weights;
};

namespace detail {

template <class S>
Tensor<S> matmul_atb(const Tensor<S>& a, const Tensor<S>& b) {
  // C = A^T * B with A: n x k, B: n x m.
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("matmul_atb: shape mismatch");
  std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<S> c({k, m});
  for (std::size_t t = 0; t < n; ++t) {
    const S* at = &a.data[t * k];
    const S* bt = &b.data[t * m];
    for (std::size_t i = 0; i < k; ++i) {
      S av = at[i];
      if (av == S(0)) continue;
      S* ci = &c.data[i * m];
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bt[j];
    }
  }
  return c;
}

template <class S>
Tensor<S> colsum(const Tensor<S>& a) {
  std::size_t n = a.dim(0), m = a.dim(1);
  Tensor<S> out({m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(j) += a(i, j);
  return out;
}

// dx of layer_norm given upstream dy, recomputing the per-row statistics.
template <class S>
Tensor<S> layer_norm_backward(const Tensor<S>& dy, const Tensor<S>& x, const Tensor<S>& gamma,
                              Tensor<S>& dgamma, Tensor<S>& dbeta, double eps = 1e-5) {
  std::size_t n = x.dim(0), e = x.dim(1);
  Tensor<S> dx({n, e});
  for (std::size_t i = 0; i < n; ++i) {
    const S* xi = &x.data[i * e];
    const S* dyi = &dy.data[i * e];
    S mean = S(0);
    for (std::size_t j = 0; j < e; ++j) mean += xi[j];
    mean /= static_cast<S>(e);
    S var = S(0);
    for (std::size_t j = 0; j < e; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<S>(e);
    S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    S sum_g = S(0), sum_gx = S(0);
    for (std::size_t j = 0; j < e; ++j) {
      S xhat = (xi[j] - mean) * inv;
      S gg = dyi[j] * gamma(j);
      dgamma(j) += dyi[j] * xhat;
      dbeta(j) += dyi[j];
      sum_g += gg;
      sum_gx += gg * xhat;
    }
    S inv_e = S(1) / static_cast<S>(e);
    for (std::size_t j = 0; j < e; ++j) {
      S xhat = (xi[j] - mean) * inv;
      S gg = dyi[j] * gamma(j);
      dx(i, j) = inv * (gg - sum_g * inv_e - xhat * sum_gx * inv_e);
    }
  }
  return dx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The transformer block shared by every attention variant:
//   in-projection (Cin -> E), self-attention sub-block with residual,
//   FFN sub-block (LayerNorm -> W1 -> GeLU -> W2) with residual,
//   out-projection (E -> Cout). No positional embedding.
// `key_mask` (optional) excludes tokens from the softmax as keys; a fully
// masked row yields a zero attention distribution.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> attention_block_forward(const Tensor<S>& tokens,
                                  const std::vector<std::uint8_t>* key_mask,
                                  const WeightStore<S>& store, const AttentionConfig& acfg,
                                  std::type_identity_t<AttentionCache<S>>* cache = nullptr,
                                  OpCounters* counters = nullptr) {
  acfg.validate();
  if (tokens.rank() != 2) throw ShapeError("attention: tokens must be n x C");
  const std::size_t n = tokens.dim(0);
  const std::size_t e = acfg.embed_dim;
  const std::size_t heads = acfg.heads;
  const std::size_t d = e / heads;
  const S inv_sqrt_d = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  if (key_mask && key_mask->size() != n) throw ShapeError("attention: key mask size mismatch");

  const Tensor<S>& w_in = store.get("att.in_proj.weight");
  const Tensor<S>& b_in = store.get("att.in_proj.bias");
  if (w_in.dim(0) != e || w_in.dim(1) != tokens.dim(1))
    throw ShapeError("attention: in-projection expects " + std::to_string(w_in.dim(1)) +
                     " token channels, got " + std::to_string(tokens.dim(1)));

  Tensor<S> x = linear(tokens, w_in, &b_in);
  Tensor<S> a = acfg.prenorm ? layer_norm(x, store.get("att.prenorm.gamma"),
                                          store.get("att.prenorm.beta"))
                             : x;

  Tensor<S> q = linear(a, store.get("att.q.weight"), &store.get("att.q.bias"));
  Tensor<S> k = linear(a, store.get("att.k.weight"), &store.get("att.k.bias"));
  Tensor<S> v = linear(a, store.get("att.v.weight"), &store.get("att.v.bias"));

  Tensor<S> probs;
  if (cache) probs = Tensor<S>({heads, n, n});
  Tensor<S> mixed({n, e});
  const S neg_inf = -std::numeric_limits<S>::infinity();
  for (std::size_t h = 0; h < heads; ++h) {
    std::size_t off = h * d;
    // scores, masked keys at -inf
    Tensor<S> scores({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      const S* qi = &q.data[i * e + off];
      for (std::size_t j = 0; j < n; ++j) {
        if (key_mask && !(*key_mask)[j]) {
          scores(i, j) = neg_inf;
          continue;
        }
        const S* kj = &k.data[j * e + off];
        S acc = S(0);
        for (std::size_t c = 0; c < d; ++c) acc += qi[c] * kj[c];
        scores(i, j) = acc * inv_sqrt_d;
      }
    }
    softmax_rows_inplace(scores);
    for (std::size_t i = 0; i < n; ++i) {
      S* mi = &mixed.data[i * e + off];
      for (std::size_t j = 0; j < n; ++j) {
        S p = scores(i, j);
        if (p == S(0)) continue;
        const S* vj = &v.data[j * e + off];
        for (std::size_t c = 0; c < d; ++c) mi[c] += p * vj[c];
      }
    }
    if (cache)
      std::copy(scores.data.begin(), scores.data.end(), probs.data.begin() + h * n * n);
  }

  Tensor<S> attn = linear(mixed, store.get("att.attn_out.weight"), &store.get("att.attn_out.bias"));
  Tensor<S> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += attn.data[i];

  Tensor<S> ln = layer_norm(y, store.get("att.ffn.norm.gamma"), store.get("att.ffn.norm.beta"));
  Tensor<S> h1 = linear(ln, store.get("att.ffn.w1.weight"), &store.get("att.ffn.w1.bias"));
  Tensor<S> g = h1;
  for (S& val : g.data) val = gelu(val);
  Tensor<S> ffn = linear(g, store.get("att.ffn.w2.weight"), &store.get("att.ffn.w2.bias"));
  Tensor<S> z = y;
  for (std::size_t i = 0; i < z.size(); ++i) z.data[i] += ffn.data[i];

  Tensor<S> out = linear(z, store.get("att.out_proj.weight"), &store.get("att.out_proj.bias"));

  if (counters) {
    counters->p = n;
    counters->score_entries = static_cast<std::uint64_t>(heads) * n * n;
    std::uint64_t macs = static_cast<std::uint64_t>(n) * tokens.dim(1) * e;
    macs += 3ull * n * e * e;
    macs += 2ull * heads * n * n * d;
    macs += static_cast<std::uint64_t>(n) * e * e;
    macs += 2ull * n * e * (acfg.expansion * e);
    macs += static_cast<std::uint64_t>(n) * e * out.dim(1);
    counters->flops = 2 * macs;
  }
  if (cache) {
    cache->tokens = tokens;
    cache->x = std::move(x);
    cache->a = std::move(a);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->mixed = std::move(mixed);
    cache->y = std::move(y);
    cache->ln = std::move(ln);
    cache->h1 = std::move(h1);
    cache->g = std::move(g);
    cache->z = std::move(z);
    cache->key_mask = key_mask ? *key_mask : std::vector<std::uint8_t>();
  }
  return out;
}

// Exact analytic gradients of the block w.r.t. the input tokens and every
// weight tensor. Verified against central finite differences by the test
// suite and the self-check command.
template <class S>
AttentionGradients<S> attention_block_backward(const AttentionCache<S>& cache,
                                               const WeightStore<S>& store,
                                               const AttentionConfig& acfg,
                                               const Tensor<S>& grad_out) {
  acfg.validate();
  const std::size_t n = cache.tokens.dim(0);
  const std::size_t e = acfg.embed_dim;
  const std::size_t heads = acfg.heads;
  const std::size_t d = e / heads;
  const S inv_sqrt_d = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor<S>& w_out = store.get("att.out_proj.weight");
  if (grad_out.rank() != 2 || grad_out.dim(0) != n || grad_out.dim(1) != w_out.dim(0))
    throw ShapeError("attention backward: grad shape mismatch");

  AttentionGradients<S> grads;
  auto& gw = grads.weights;

  // out = z * Wout^T + bout
  gw["att.out_proj.weight"] = detail::matmul_atb(grad_out, cache.z);
  gw["att.out_proj.bias"] = detail::colsum(grad_out);
  Tensor<S> dz = matmul(grad_out, w_out);

  // z = y + G * W2^T + b2
  gw["att.ffn.w2.weight"] = detail::matmul_atb(dz, cache.g);
  gw["att.ffn.w2.bias"] = detail::colsum(dz);
  Tensor<S> dg = matmul(dz, store.get("att.ffn.w2.weight"));
  Tensor<S> dh1 = dg;
  for (std::size_t i = 0; i < dh1.size(); ++i)
    dh1.data[i] = dg.data[i] * gelu_derivative(cache.h1.data[i]);
  gw["att.ffn.w1.weight"] = detail::matmul_atb(dh1, cache.ln);
  gw["att.ffn.w1.bias"] = detail::colsum(dh1);
  Tensor<S> dln = matmul(dh1, store.get("att.ffn.w1.weight"));

  Tensor<S> dnorm_gamma({e}), dnorm_beta({e});
  Tensor<S> dy = detail::layer_norm_backward(dln, cache.y, store.get("att.ffn.norm.gamma"),
                                             dnorm_gamma, dnorm_beta);
  gw["att.ffn.norm.gamma"] = std::move(dnorm_gamma);
  gw["att.ffn.norm.beta"] = std::move(dnorm_beta);
  for (std::size_t i = 0; i < dy.size(); ++i) dy.data[i] += dz.data[i];  // residual

  // y = x + mixed * Wo^T + bo
  gw["att.attn_out.weight"] = detail::matmul_atb(dy, cache.mixed);
  gw["att.attn_out.bias"] = detail::colsum(dy);
  Tensor<S> dmixed = matmul(dy, store.get("att.attn_out.weight"));

  Tensor<S> dq({n, e}), dk({n, e}), dv({n, e});
  for (std::size_t h = 0; h < heads; ++h) {
    std::size_t off = h * d;
    const S* probs = &cache.probs.data[h * n * n];
    for (std::size_t i = 0; i < n; ++i) {
      const S* pi = probs + i * n;
      const S* dmi = &dmixed.data[i * e + off];
      // dP_ij = dM_i . V_j ; softmax backward gives dS.
      S dot_dp_p = S(0);
      std::vector<S> dp(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (pi[j] == S(0)) {
          dp[j] = S(0);
          continue;
        }
        const S* vj = &cache.v.data[j * e + off];
        S acc = S(0);
        for (std::size_t c = 0; c < d; ++c) acc += dmi[c] * vj[c];
        dp[j] = acc;
        dot_dp_p += acc * pi[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        S p = pi[j];
        if (p == S(0)) continue;
        S ds = p * (dp[j] - dot_dp_p) * inv_sqrt_d;
        const S* kj = &cache.k.data[j * e + off];
        const S* qi = &cache.q.data[i * e + off];
        S* dqi = &dq.data[i * e + off];
        S* dkj = &dk.data[j * e + off];
        S* dvj = &dv.data[j * e + off];
        for (std::size_t c = 0; c < d; ++c) {
          dqi[c] += ds * kj[c];
          dkj[c] += ds * qi[c];
          dvj[c] += p * dmi[c];
        }
      }
    }
  }

  gw["att.q.weight"] = detail::matmul_atb(dq, cache.a);
  gw["att.q.bias"] = detail::colsum(dq);
  gw["att.k.weight"] = detail::matmul_atb(dk, cache.a);
  gw["att.k.bias"] = detail::colsum(dk);
  gw["att.v.weight"] = detail::matmul_atb(dv, cache.a);
  gw["att.v.bias"] = detail::colsum(dv);

  Tensor<S> da = matmul(dq, store.get("att.q.weight"));
  {
    Tensor<S> t = matmul(dk, store.get("att.k.weight"));
    for (std::size_t i = 0; i < da.size(); ++i) da.data[i] += t.data[i];
    t = matmul(dv, store.get("att.v.weight"));
    for (std::size_t i = 0; i < da.size(); ++i) da.data[i] += t.data[i];
  }

  Tensor<S> dx = dy;  // residual from y = x + ...
  if (acfg.prenorm) {
    Tensor<S> dpre_gamma({e}), dpre_beta({e});
    Tensor<S> via_norm = detail::layer_norm_backward(da, cache.x,
                                                     store.get("att.prenorm.gamma"), dpre_gamma,
                                                     dpre_beta);
    gw["att.prenorm.gamma"] = std::move(dpre_gamma);
    gw["att.prenorm.beta"] = std::move(dpre_beta);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += via_norm.data[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += da.data[i];
  }

  gw["att.in_proj.weight"] = detail::matmul_atb(dx, cache.tokens);
  gw["att.in_proj.bias"] = detail::colsum(dx);
  grads.tokens = matmul(dx, store.get("att.in_proj.weight"));
  return grads;
}

// ---------------------------------------------------------------------------
// PillarAttention: the occupied pillars are the tokens. Indices pass through
// untouched; empty pillars stay empty (exactly zero after scatter).
// ---------------------------------------------------------------------------
template <class S>
SparsePillarTensor<S> pillar_attention_forward(const SparsePillarTensor<S>& sparse,
                                               const WeightStore<S>& store,
                                               const ModelConfig& cfg,
                                               std::type_identity_t<AttentionCache<S>>* cache = nullptr,
                                               OpCounters* counters = nullptr) {
  sparse.validate();
  SparsePillarTensor<S> out;
  out.indices = sparse.indices;
  out.height = sparse.height;
  out.width = sparse.width;
  if (counters) {
    counters->variant = "pillar";
    counters->grid_h = sparse.height;
    counters->grid_w = sparse.width;
  }
  if (sparse.num_pillars() == 0) {
    out.features = Tensor<S>({0, cfg.attention_out_channels()});
    if (counters) {
      counters->p = 0;
      counters->score_entries = 0;
      counters->flops = 0;
    }
    return out;
  }
  out.features =
      attention_block_forward(sparse.features, nullptr, store, cfg.attention, cache, counters);
  return out;
}

// ---------------------------------------------------------------------------
// Dense reference: all H*W cells are tokens and unoccupied cells are masked
// out of the softmax. Must agree with the sparse path on occupied cells; this
// is the oracle the sparse implementation is verified against.
// ---------------------------------------------------------------------------
template <class S>
DenseGrid<S> dense_masked_oracle(const DenseGrid<S>& grid, const WeightStore<S>& store,
                                 const ModelConfig& cfg, OpCounters* counters = nullptr) {
  const std::size_t c = grid.channels();
  const std::size_t h = grid.height(), w = grid.width();
  const std::size_t hw = h * w;
  Tensor<S> tokens({hw, c});
  for (std::size_t t = 0; t < hw; ++t)
    for (std::size_t ch = 0; ch < c; ++ch) tokens(t, ch) = grid.features.data[ch * hw + t];

  Tensor<S> out_tokens =
      attention_block_forward<S>(tokens, &grid.mask, store, cfg.attention, nullptr, counters);
  if (counters) {
    counters->variant = "dense_oracle";
    counters->grid_h = h;
    counters->grid_w = w;
    counters->p = hw;
  }

  DenseGrid<S> out;
  std::size_t c_out = out_tokens.dim(1);
  out.features = Tensor<S>({c_out, h, w});
  out.mask = grid.mask;
  for (std::size_t t = 0; t < hw; ++t) {
    if (!grid.mask[t]) continue;  // unoccupied cells stay exactly zero
    for (std::size_t ch = 0; ch < c_out; ++ch)
      out.features.data[ch * hw + t] = out_tokens(t, ch);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PointAttention ablation: every radar point is a token. Points are grouped
// (not projected) by pillar, zero-padded to the pillar cap; attention runs
// over all tokens. The masked flavor excludes padding slots from the softmax
// and from the final per-pillar max-pool.
// ---------------------------------------------------------------------------
template <class S>
SparsePillarTensor<S> point_attention_forward(const Tensor<S>& point_matrix,
                                              const PillarAssignment& asn,
                                              const WeightStore<S>& store, const ModelConfig& cfg,
                                              bool masked, OpCounters* counters = nullptr) {
  if (point_matrix.rank() != 2 || point_matrix.dim(0) != asn.retained.size())
    throw ShapeError("point_attention: point matrix must cover retained points");
  const std::size_t p = asn.num_pillars();
  const std::size_t cap = asn.cap;
  const std::size_t d_in = point_matrix.rank() == 2 ? point_matrix.dim(1) : 0;
  const std::size_t n = p * cap;
  const std::size_t c_out = cfg.attention_out_channels();

  SparsePillarTensor<S> out;
  out.indices = asn.occupied;
  out.height = asn.n_y;
  out.width = asn.n_x;
  if (counters) {
    counters->variant = masked ? "point_masked" : "point_unmasked";
    counters->grid_h = asn.n_y;
    counters->grid_w = asn.n_x;
  }
  if (p == 0) {
    out.features = Tensor<S>({0, c_out});
    if (counters) {
      counters->p = 0;
      counters->score_entries = 0;
      counters->flops = 0;
    }
    return out;
  }

  Tensor<S> tokens({n, d_in});
  std::vector<std::uint8_t> valid(n, 0);
  std::size_t row = 0;
  for (std::size_t pi = 0; pi < p; ++pi) {
    for (std::uint32_t s = 0; s < asn.counts[pi]; ++s, ++row) {
      std::size_t t = pi * cap + s;
      valid[t] = 1;
      for (std::size_t ch = 0; ch < d_in; ++ch) tokens(t, ch) = point_matrix(row, ch);
    }
  }

  Tensor<S> out_tokens = attention_block_forward(tokens, masked ? &valid : nullptr, store,
                                                 cfg.attention, nullptr, counters);

  out.features = Tensor<S>({p, c_out});
  for (std::size_t pi = 0; pi < p; ++pi) {
    std::size_t slots = masked ? asn.counts[pi] : cap;
    for (std::size_t ch = 0; ch < c_out; ++ch) {
      S best = out_tokens(pi * cap, ch);
      for (std::size_t s = 1; s < slots; ++s) {
        S val = out_tokens(pi * cap + s, ch);
        if (val > best) best = val;
      }
      out.features(pi, ch) = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Late feature attention ablation: the fused encoder map is flattened into
// H'*W' dense tokens (no mask). Quadratic in the map area, hence the token
// guard.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> feature_attention_forward(const Tensor<S>& fused, const WeightStore<S>& store,
                                    const ModelConfig& cfg, OpCounters* counters = nullptr) {
  if (fused.rank() != 3) throw ShapeError("feature_attention: expected C x H x W");
  const std::size_t c = fused.dim(0), h = fused.dim(1), w = fused.dim(2);
  const std::size_t n = h * w;
  if (n > cfg.attention_token_limit)
    throw ResourceError("feature attention over " + std::to_string(n) +
                        " tokens exceeds the limit of " +
                        std::to_string(cfg.attention_token_limit) +
                        " (quadratic cost); raise attention_token_limit to override");
  Tensor<S> tokens({n, c});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t ch = 0; ch < c; ++ch) tokens(t, ch) = fused.data[ch * n + t];
  Tensor<S> out_tokens =
      attention_block_forward(tokens, nullptr, store, cfg.attention, nullptr, counters);
  if (counters) {
    counters->variant = "feature_late";
    counters->grid_h = h;
    counters->grid_w = w;
  }
  Tensor<S> out({out_tokens.dim(1), h, w});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t ch = 0; ch < out_tokens.dim(1); ++ch)
      out.data[ch * n + t] = out_tokens(t, ch);
  return out;
}

}  // namespace rpk
