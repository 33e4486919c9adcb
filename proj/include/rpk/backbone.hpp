#pragma once

#include <array>
#include <string>

#include "rpk/errors.hpp"
#include "rpk/model.hpp"
#include "rpk/nn.hpp"
#include "rpk/tensor.hpp"
#include "rpk/weights.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Three-stage convolutional encoder. Every stage opens with a stride-2 3x3
// convolution and continues with stage_layers[s] stride-1 convolutions, all
// followed by batch norm (inference) and ReLU. On a 320x320 pseudo-image the
// stages emit 160x160, 80x80, and 40x40 maps.
// ---------------------------------------------------------------------------
template <class S>
std::array<Tensor<S>, 3> encoder_forward(const Tensor<S>& grid, const WeightStore<S>& store,
                                         const ModelConfig& cfg) {
  if (grid.rank() != 3 || grid.dim(0) != cfg.scaling.channels[0])
    throw ShapeError("encoder: input must be C1 x H x W");
  std::array<Tensor<S>, 3> stages;
  const Tensor<S>* current = &grid;
  for (std::size_t s = 0; s < 3; ++s) {
    std::string stage = "encoder.stage" + std::to_string(s + 1);
    Tensor<S> x = *current;
    for (std::size_t j = 0; j <= cfg.stage_layers[s]; ++j) {
      std::string conv = stage + ".conv" + std::to_string(j);
      std::string bn = stage + ".bn" + std::to_string(j);
      x = conv2d(x, store.get(conv + ".weight"), nullptr, j == 0 ? 2 : 1, 1);
      batchnorm2d_inplace(x, store.get(bn + ".gamma"), store.get(bn + ".beta"),
                          store.get(bn + ".mean"), store.get(bn + ".var"), cfg.bn_eps);
      relu_inplace(x);
    }
    stages[s] = std::move(x);
    current = &stages[s];
  }
  return stages;
}

// ---------------------------------------------------------------------------
// Multi-scale fusion: each stage output is brought to half grid resolution by
// a transposed convolution with kernel == stride (1, 2, 4), batch norm, and
// ReLU, then the three maps are concatenated along channels.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> fuse_features(const std::array<Tensor<S>, 3>& stages, const WeightStore<S>& store,
                        const ModelConfig& cfg) {
  const std::size_t h = cfg.head_height(), w = cfg.head_width();
  Tensor<S> fused({cfg.fused_channels(), h, w});
  for (std::size_t s = 0; s < 3; ++s) {
    std::string lat = "neck.lateral" + std::to_string(s + 1);
    std::size_t stride = std::size_t(1) << s;
    Tensor<S> up = transposed_conv2d(stages[s], store.get(lat + ".weight"), nullptr, stride);
    if (up.dim(1) != h || up.dim(2) != w)
      throw ShapeError("neck: lateral " + std::to_string(s + 1) + " produced " +
                       std::to_string(up.dim(1)) + "x" + std::to_string(up.dim(2)) +
                       ", expected " + std::to_string(h) + "x" + std::to_string(w));
    batchnorm2d_inplace(up, store.get(lat + ".bn.gamma"), store.get(lat + ".bn.beta"),
                        store.get(lat + ".bn.mean"), store.get(lat + ".bn.var"), cfg.bn_eps);
    relu_inplace(up);
    std::copy(up.data.begin(), up.data.end(),
              fused.data.begin() + static_cast<long>(s * cfg.neck_channels * h * w));
  }
  return fused;
}

// ---------------------------------------------------------------------------
// SSD-style head: three parallel 1x1 convolutions over the fused map.
// ---------------------------------------------------------------------------
template <class S>
struct HeadOutputs {
  Tensor<S> cls;       // (A*K) x H' x W'
  Tensor<S> box;       // (A*7) x H' x W'
  Tensor<S> direction; // (A*2) x H' x W'
};

template <class S>
HeadOutputs<S> head_forward(const Tensor<S>& fused, const WeightStore<S>& store,
                            const ModelConfig& cfg) {
  if (fused.rank() != 3 || fused.dim(0) != cfg.fused_channels())
    throw ShapeError("head: fused map channel mismatch");
  HeadOutputs<S> out;
  out.cls = conv2d(fused, store.get("head.cls.weight"), &store.get("head.cls.bias"), 1, 0);
  out.box = conv2d(fused, store.get("head.box.weight"), &store.get("head.box.bias"), 1, 0);
  out.direction = conv2d(fused, store.get("head.dir.weight"), &store.get("head.dir.bias"), 1, 0);
  return out;
}

}  // namespace rpk
