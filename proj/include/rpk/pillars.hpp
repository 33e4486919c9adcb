#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "rpk/errors.hpp"
#include "rpk/io.hpp"
#include "rpk/tensor.hpp"

namespace rpk {

// ---------------------------------------------------------------------------
// Grid configuration. Defaults follow the target radar sensor area:
// forward 51.2 m, lateral +-25.6 m, 0.16 m cells -> 320x320 pillars.
// ---------------------------------------------------------------------------
struct GridConfig {
  double x_min = 0.0, x_max = 51.2;
  double y_min = -25.6, y_max = 25.6;
  double z_min = -3.0, z_max = 2.0;
  std::uint32_t n_x = 320, n_y = 320;
  std::uint32_t max_points_per_pillar = 10;

  double cell_x() const { return (x_max - x_min) / n_x; }
  double cell_y() const { return (y_max - y_min) / n_y; }
  // Dense grid rows are y cells, columns are x cells.
  std::size_t height() const { return n_y; }
  std::size_t width() const { return n_x; }

  void validate() const {
    if (n_x == 0 || n_y == 0 || !(cell_x() > 0) || !(cell_y() > 0) || !(z_max > z_min))
      throw ConfigError("invalid grid extents");
    if (max_points_per_pillar == 0) throw ConfigError("max_points_per_pillar must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Pillar assignment. Points are grouped by cell and ordered inside each
// pillar by a total key so every reduction downstream is reproducible for
// any input permutation. Points beyond the per-pillar cap keep their slot
// number (>= cap) so pre-cap statistics can still see them.
// ---------------------------------------------------------------------------
struct PillarAssignment {
  struct Entry {
    std::size_t point;   // index into the source frame
    std::uint32_t ix, iy;
    std::uint32_t slot;  // < max_points_per_pillar
  };

  std::uint32_t n_x = 0, n_y = 0;
  std::uint32_t cap = 0;
  // Retained points in canonical order: ascending row-major pillar index,
  // then ascending slot.
  std::vector<Entry> retained;
  std::vector<std::size_t> occupied;          // row-major indices, strictly increasing
  std::vector<std::uint32_t> counts;          // retained points per occupied pillar
  std::vector<std::uint32_t> total_counts;    // in-range points per occupied pillar (pre-cap)
  // Per occupied pillar: all in-range point indices, key-sorted (pre-cap).
  std::vector<std::vector<std::size_t>> pillar_points;
  // Per source point: position in `occupied`, or -1 if out of range.
  std::vector<long> point_pillar;
  // Per source point: slot by key order within its pillar (may exceed cap).
  std::vector<long> point_slot;

  std::size_t num_pillars() const { return occupied.size(); }
};

namespace detail {

// Total order on points; ties beyond the primary key (x, y, z, v_r) are
// broken by the remaining channels so only fully identical points compare
// equal (and those are interchangeable).
inline bool point_key_less(const RadarPoint& a, const RadarPoint& b) {
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  if (a.z != b.z) return a.z < b.z;
  if (a.v_r != b.v_r) return a.v_r < b.v_r;
  if (a.rcs != b.rcs) return a.rcs < b.rcs;
  return a.v_rel < b.v_rel;
}

}  // namespace detail

inline PillarAssignment assign_pillars(const RadarFrame& frame, const GridConfig& grid) {
  grid.validate();
  PillarAssignment asn;
  asn.n_x = grid.n_x;
  asn.n_y = grid.n_y;
  asn.cap = grid.max_points_per_pillar;
  asn.point_pillar.assign(frame.points.size(), -1);
  asn.point_slot.assign(frame.points.size(), -1);

  std::map<std::size_t, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const RadarPoint& p = frame.points[i];
    if (p.x < grid.x_min || p.x >= grid.x_max) continue;
    if (p.y < grid.y_min || p.y >= grid.y_max) continue;
    if (p.z < grid.z_min || p.z >= grid.z_max) continue;
    auto ix = static_cast<std::size_t>(std::floor((p.x - grid.x_min) / grid.cell_x()));
    auto iy = static_cast<std::size_t>(std::floor((p.y - grid.y_min) / grid.cell_y()));
    ix = std::min<std::size_t>(ix, grid.n_x - 1);  // guard the right-open boundary
    iy = std::min<std::size_t>(iy, grid.n_y - 1);
    cells[iy * grid.n_x + ix].push_back(i);
  }

  for (auto& [index, pts] : cells) {
    std::sort(pts.begin(), pts.end(), [&](std::size_t a, std::size_t b) {
      return detail::point_key_less(frame.points[a], frame.points[b]);
    });
    std::size_t occ = asn.occupied.size();
    asn.occupied.push_back(index);
    asn.total_counts.push_back(static_cast<std::uint32_t>(pts.size()));
    std::uint32_t kept = std::min<std::uint32_t>(static_cast<std::uint32_t>(pts.size()), asn.cap);
    asn.counts.push_back(kept);
    auto ix = static_cast<std::uint32_t>(index % grid.n_x);
    auto iy = static_cast<std::uint32_t>(index / grid.n_x);
    for (std::size_t s = 0; s < pts.size(); ++s) {
      asn.point_pillar[pts[s]] = static_cast<long>(occ);
      asn.point_slot[pts[s]] = static_cast<long>(s);
      if (s < kept)
        asn.retained.push_back({pts[s], ix, iy, static_cast<std::uint32_t>(s)});
    }
    asn.pillar_points.push_back(std::move(pts));
  }
  return asn;
}

// Offsets of retained points from their pillar center (x, y) and from the
// vertical mid-plane (z), in canonical retained order.
inline std::vector<std::array<double, 3>> compute_center_offsets(const RadarFrame& frame,
                                                                 const PillarAssignment& asn,
                                                                 const GridConfig& grid) {
  std::vector<std::array<double, 3>> out;
  out.reserve(asn.retained.size());
  double z_mid = (grid.z_min + grid.z_max) / 2.0;
  for (const auto& e : asn.retained) {
    const RadarPoint& p = frame.points[e.point];
    double cx = grid.x_min + (e.ix + 0.5) * grid.cell_x();
    double cy = grid.y_min + (e.iy + 0.5) * grid.cell_y();
    out.push_back({p.x - cx, p.y - cy, p.z - z_mid});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse pillar features and the dense pseudo-image
// ---------------------------------------------------------------------------

template <class S>
struct SparsePillarTensor {
  Tensor<S> features;                 // p x C
  std::vector<std::size_t> indices;   // row-major grid positions, strictly increasing
  std::size_t height = 0, width = 0;

  std::size_t num_pillars() const { return indices.size(); }
  std::size_t channels() const { return features.rank() == 2 ? features.dim(1) : 0; }

  void validate() const {
    if (features.rank() != 2 || features.dim(0) != indices.size())
      throw ShapeError("sparse features must be p x C with one row per index");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= height * width) throw InvariantError("pillar index out of grid");
      if (i > 0 && indices[i] <= indices[i - 1])
        throw InvariantError("pillar indices must be strictly increasing");
    }
  }
};

template <class S>
struct DenseGrid {
  Tensor<S> features;              // C x H x W
  std::vector<std::uint8_t> mask;  // H*W occupancy

  std::size_t channels() const { return features.dim(0); }
  std::size_t height() const { return features.dim(1); }
  std::size_t width() const { return features.dim(2); }
};

template <class S>
DenseGrid<S> scatter_to_grid(const SparsePillarTensor<S>& sparse) {
  sparse.validate();
  DenseGrid<S> grid;
  std::size_t c = sparse.features.rank() == 2 ? sparse.features.dim(1) : 0;
  if (c == 0) throw ShapeError("scatter_to_grid: sparse tensor must have C > 0");
  grid.features = Tensor<S>({c, sparse.height, sparse.width});
  grid.mask.assign(sparse.height * sparse.width, 0);
  std::size_t hw = sparse.height * sparse.width;
  for (std::size_t i = 0; i < sparse.indices.size(); ++i) {
    std::size_t idx = sparse.indices[i];
    if (grid.mask[idx]) throw InvariantError("duplicate pillar index in scatter");
    grid.mask[idx] = 1;
    for (std::size_t ch = 0; ch < c; ++ch)
      grid.features.data[ch * hw + idx] = sparse.features(i, ch);
  }
  return grid;
}

template <class S>
SparsePillarTensor<S> gather_from_grid(const DenseGrid<S>& grid) {
  SparsePillarTensor<S> sparse;
  sparse.height = grid.height();
  sparse.width = grid.width();
  std::size_t hw = sparse.height * sparse.width;
  for (std::size_t idx = 0; idx < hw; ++idx)
    if (grid.mask[idx]) sparse.indices.push_back(idx);
  std::size_t c = grid.channels();
  sparse.features = Tensor<S>({sparse.indices.size(), c});
  for (std::size_t i = 0; i < sparse.indices.size(); ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      sparse.features(i, ch) = grid.features.data[ch * hw + sparse.indices[i]];
  return sparse;
}

// ---------------------------------------------------------------------------
// PointNet-style pillar encoder: per point linear -> batch-norm (inference
// affine) -> ReLU, then channel-wise max over the points of each pillar.
// `point_matrix` holds the retained points in canonical order, one row per
// point, with (D + 3) columns (features plus center offsets).
// ---------------------------------------------------------------------------
template <class S>
SparsePillarTensor<S> encode_pillars(const Tensor<S>& point_matrix, const PillarAssignment& asn,
                                     const Tensor<S>& weight, const Tensor<S>& bias,
                                     const Tensor<S>& bn_gamma, const Tensor<S>& bn_beta,
                                     const Tensor<S>& bn_mean, const Tensor<S>& bn_var,
                                     double bn_eps = 1e-5) {
  if (point_matrix.rank() != 2 || point_matrix.dim(0) != asn.retained.size())
    throw ShapeError("encode_pillars: point matrix must have one row per retained point");
  std::size_t d_in = point_matrix.rank() == 2 ? point_matrix.dim(1) : 0;
  if (weight.rank() != 2 || weight.dim(1) != d_in)
    throw ShapeError("encode_pillars: weight shape mismatch");
  std::size_t c = weight.dim(0);
  if (bias.size() != c || bn_gamma.size() != c || bn_beta.size() != c || bn_mean.size() != c ||
      bn_var.size() != c)
    throw ShapeError("encode_pillars: affine/bn parameter size mismatch");

  SparsePillarTensor<S> out;
  out.height = asn.n_y;
  out.width = asn.n_x;
  out.indices = asn.occupied;
  out.features = Tensor<S>({asn.occupied.size(), c});

  std::vector<S> scale(c), shift(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(bn_var(ch)) + bn_eps));
    scale[ch] = bn_gamma(ch) * inv;
    shift[ch] = bn_beta(ch) - bn_gamma(ch) * bn_mean(ch) * inv;
  }

  std::size_t row = 0;
  for (std::size_t pi = 0; pi < asn.occupied.size(); ++pi) {
    std::uint32_t kept = asn.counts[pi];
    for (std::uint32_t s = 0; s < kept; ++s, ++row) {
      const S* x = &point_matrix.data[row * d_in];
      for (std::size_t ch = 0; ch < c; ++ch) {
        S acc = bias(ch);
        const S* w = &weight.data[ch * d_in];
        for (std::size_t k = 0; k < d_in; ++k) acc += w[k] * x[k];
        acc = acc * scale[ch] + shift[ch];
        if (acc < S(0)) acc = S(0);
        S& cell = out.features(pi, ch);
        if (s == 0 || acc > cell) cell = acc;
      }
    }
  }
  return out;
}

}  // namespace rpk
