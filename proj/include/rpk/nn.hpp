#pragma once

#include <cmath>
#include <type_traits>
#include <cstddef>
#include <vector>

#include "rpk/errors.hpp"
#include "rpk/tensor.hpp"

namespace rpk {

// Forward-only NN primitives. All reductions run in a fixed order (ascending
// index), so outputs are reproducible bit for bit across runs and input
// permutations.

// ---------------------------------------------------------------------------
// Dense kernels
// ---------------------------------------------------------------------------

// Y = X * W^T + b, with X: n x in, W: out x in, b: out (optional).
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight,
                 const std::type_identity_t<Tensor<S>>* bias = nullptr) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1))
    throw ShapeError("linear: shape mismatch");
  std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias && bias->size() != out_dim) throw ShapeError("linear: bias size mismatch");
  Tensor<S> y({n, out_dim});
  for (std::size_t i = 0; i < n; ++i) {
    const S* xi = &x.data[i * in];
    for (std::size_t o = 0; o < out_dim; ++o) {
      const S* w = &weight.data[o * in];
      S acc = bias ? (*bias)(o) : S(0);
      for (std::size_t k = 0; k < in; ++k) acc += xi[k] * w[k];
      y(i, o) = acc;
    }
  }
  return y;
}

// C = A * B^T, rows of both operands contiguous.
template <class S>
Tensor<S> matmul_bt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("matmul_bt: shape mismatch");
  std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  Tensor<S> c({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const S* ai = &a.data[i * k];
    for (std::size_t j = 0; j < m; ++j) {
      const S* bj = &b.data[j * k];
      S acc = S(0);
      for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
      c(i, j) = acc;
    }
  }
  return c;
}

// C = A * B (ikj order; per-element accumulation still ascends in k).
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: shape mismatch");
  std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<S> c({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    S* ci = &c.data[i * m];
    for (std::size_t l = 0; l < k; ++l) {
      S av = a(i, l);
      if (av == S(0)) continue;
      const S* bl = &b.data[l * m];
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bl[j];
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class S>
void relu_inplace(Tensor<S>& t) {
  for (S& v : t.data)
    if (v < S(0)) v = S(0);
}

template <class S>
S gelu(S x) {
  // Exact (erf) form; the derivative used by the backward pass matches it.
  return static_cast<S>(0.5) * x *
         (static_cast<S>(1) + static_cast<S>(std::erf(static_cast<double>(x) / 1.4142135623730951)));
}

template <class S>
S gelu_derivative(S x) {
  double xd = static_cast<double>(x);
  double cdf = 0.5 * (1.0 + std::erf(xd / 1.4142135623730951));
  double pdf = std::exp(-0.5 * xd * xd) / 2.5066282746310002;  // sqrt(2*pi)
  return static_cast<S>(cdf + xd * pdf);
}

template <class S>
S sigmoid(S x) {
  if (x >= S(0)) {
    S e = static_cast<S>(std::exp(-static_cast<double>(x)));
    return S(1) / (S(1) + e);
  }
  S e = static_cast<S>(std::exp(static_cast<double>(x)));
  return e / (S(1) + e);
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Per-token layer norm over the last axis (population variance, eps inside
// the square root), followed by the affine transform.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     double eps = 1e-5) {
  if (x.rank() != 2) throw ShapeError("layer_norm: expected tokens x E");
  std::size_t n = x.dim(0), e = x.dim(1);
  if (gamma.size() != e || beta.size() != e) throw ShapeError("layer_norm: affine size mismatch");
  Tensor<S> y({n, e});
  for (std::size_t i = 0; i < n; ++i) {
    const S* xi = &x.data[i * e];
    S mean = S(0);
    for (std::size_t j = 0; j < e; ++j) mean += xi[j];
    mean /= static_cast<S>(e);
    S var = S(0);
    for (std::size_t j = 0; j < e; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<S>(e);
    S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    for (std::size_t j = 0; j < e; ++j)
      y(i, j) = (xi[j] - mean) * inv * gamma(j) + beta(j);
  }
  return y;
}

// Row-wise softmax with max subtraction. Entries <= `mask_floor` rows can be
// masked upstream by writing -infinity into the logits.
template <class S>
void softmax_rows_inplace(Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("softmax: expected 2-D input");
  std::size_t n = x.dim(0), m = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    S* row = &x.data[i * m];
    S mx = row[0];
    for (std::size_t j = 1; j < m; ++j)
      if (row[j] > mx) mx = row[j];
    if (!(mx > -std::numeric_limits<S>::infinity())) {
      // Fully masked row: leave a zero distribution.
      for (std::size_t j = 0; j < m; ++j) row[j] = S(0);
      continue;
    }
    S sum = S(0);
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)));
      sum += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= sum;
  }
}

template <class S>
std::vector<S> softmax(const std::vector<S>& logits) {
  Tensor<S> t({1, logits.size()});
  t.data = logits;
  softmax_rows_inplace(t);
  return t.data;
}

// Inference-mode batch norm over the channel axis of a C x H x W volume.
template <class S>
void batchnorm2d_inplace(Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                         const Tensor<S>& mean, const Tensor<S>& var, double eps = 1e-5) {
  if (x.rank() != 3) throw ShapeError("batchnorm2d: expected C x H x W");
  std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (gamma.size() != c || beta.size() != c || mean.size() != c || var.size() != c)
    throw ShapeError("batchnorm2d: parameter size mismatch");
  for (std::size_t ch = 0; ch < c; ++ch) {
    S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var(ch)) + eps));
    S scale = gamma(ch) * inv;
    S shift = beta(ch) - mean(ch) * scale;
    S* p = &x.data[ch * hw];
    for (std::size_t i = 0; i < hw; ++i) p[i] = p[i] * scale + shift;
  }
}

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation convention)
// ---------------------------------------------------------------------------

// input: C_in x H x W; kernel: C_out x C_in x kh x kw; bias optional.
// H' = floor((H + 2 pad - kh) / stride) + 1.
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel,
                 const std::type_identity_t<Tensor<S>>* bias, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(1) != input.dim(0))
    throw ShapeError("conv2d: shape mismatch");
  std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  std::size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (bias && bias->size() != c_out) throw ShapeError("conv2d: bias size mismatch");
  if (h + 2 * pad < kh || w + 2 * pad < kw) throw ShapeError("conv2d: kernel larger than input");
  std::size_t h_out = (h + 2 * pad - kh) / stride + 1;
  std::size_t w_out = (w + 2 * pad - kw) / stride + 1;
  Tensor<S> out({c_out, h_out, w_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    S b = bias ? (*bias)(co) : S(0);
    for (std::size_t oy = 0; oy < h_out; ++oy) {
      for (std::size_t ox = 0; ox < w_out; ++ox) {
        S acc = b;
        long base_y = static_cast<long>(oy * stride) - static_cast<long>(pad);
        long base_x = static_cast<long>(ox * stride) - static_cast<long>(pad);
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            long iy = base_y + static_cast<long>(ky);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const S* in_row = &input.data[(ci * h + static_cast<std::size_t>(iy)) * w];
            const S* k_row = &kernel.data[((co * c_in + ci) * kh + ky) * kw];
            for (std::size_t kx = 0; kx < kw; ++kx) {
              long ix = base_x + static_cast<long>(kx);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += in_row[static_cast<std::size_t>(ix)] * k_row[kx];
            }
          }
        }
        out(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

// Transposed convolution, the adjoint map of conv2d: for matched parameters
// <conv(x), y> = <x, tconv(y)>. kernel: C_in x C_out x kh x kw (C_in is the
// input of *this* op). Output H = (H_in - 1) * stride - 2 pad + kh + opad_h,
// and likewise for the width with opad_w (pass opad_w = -1 to reuse opad_h).
template <class S>
Tensor<S> transposed_conv2d(const Tensor<S>& input, const Tensor<S>& kernel,
                            const std::type_identity_t<Tensor<S>>* bias, std::size_t stride,
                            std::size_t pad = 0, std::size_t opad_h = 0, long opad_w = -1) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(0) != input.dim(0))
    throw ShapeError("transposed_conv2d: shape mismatch");
  std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  std::size_t c_out = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (bias && bias->size() != c_out) throw ShapeError("transposed_conv2d: bias size mismatch");
  std::size_t opad_w_eff = opad_w < 0 ? opad_h : static_cast<std::size_t>(opad_w);
  long h_out_l = static_cast<long>((h - 1) * stride + kh + opad_h) - 2 * static_cast<long>(pad);
  long w_out_l = static_cast<long>((w - 1) * stride + kw + opad_w_eff) - 2 * static_cast<long>(pad);
  if (h_out_l <= 0 || w_out_l <= 0) throw ShapeError("transposed_conv2d: empty output");
  auto h_out = static_cast<std::size_t>(h_out_l);
  auto w_out = static_cast<std::size_t>(w_out_l);
  Tensor<S> out({c_out, h_out, w_out});
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      for (std::size_t ix = 0; ix < w; ++ix) {
        S v = input(ci, iy, ix);
        if (v == S(0)) continue;
        for (std::size_t co = 0; co < c_out; ++co) {
          const S* k_base = &kernel.data[(ci * c_out + co) * kh * kw];
          for (std::size_t ky = 0; ky < kh; ++ky) {
            long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
            if (oy < 0 || oy >= static_cast<long>(h_out)) continue;
            S* out_row = &out.data[(co * h_out + static_cast<std::size_t>(oy)) * w_out];
            for (std::size_t kx = 0; kx < kw; ++kx) {
              long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
              if (ox < 0 || ox >= static_cast<long>(w_out)) continue;
              out_row[static_cast<std::size_t>(ox)] += v * k_base[ky * kw + kx];
            }
          }
        }
      }
    }
  }
  if (bias) {
    std::size_t hw = h_out * w_out;
    for (std::size_t co = 0; co < c_out; ++co) {
      S b = (*bias)(co);
      S* p = &out.data[co * hw];
      for (std::size_t i = 0; i < hw; ++i) p[i] += b;
    }
  }
  return out;
}

}  // namespace rpk
