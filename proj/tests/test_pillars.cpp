#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "rpk/features.hpp"
#include "rpk/io.hpp"
#include "rpk/model.hpp"
#include "rpk/pillars.hpp"
#include "rpk/rng.hpp"

using namespace rpk;

TEST_CASE("assign_pillars cell arithmetic and range filtering") {
  RadarFrame frame;
  frame.points.push_back({0.08, -25.52, 0.5, 0, 0, 0});  // cell (0, 0)
  frame.points.push_back({60.0, 0.0, 0.0, 0, 0, 0});     // out of x range
  frame.points.push_back({10.0, 30.0, 0.0, 0, 0, 0});    // out of y range
  frame.points.push_back({10.0, 0.0, 5.0, 0, 0, 0});     // out of z range
  GridConfig grid;
  auto asn = assign_pillars(frame, grid);
  REQUIRE(asn.num_pillars() == 1);
  CHECK(asn.retained.size() == 1);
  CHECK(asn.retained[0].ix == 0);
  CHECK(asn.retained[0].iy == 0);
  CHECK(asn.occupied[0] == 0);
  CHECK(asn.point_pillar[1] == -1);
  CHECK(asn.point_pillar[2] == -1);
  CHECK(asn.point_pillar[3] == -1);
}

TEST_CASE("per-pillar cap keeps the lowest-key points") {
  RadarFrame frame;
  for (int i = 0; i < 12; ++i)
    frame.points.push_back({1.0 + 0.001 * i, 1.0, 0.0, 0, 0, 0});
  GridConfig grid;
  auto asn = assign_pillars(frame, grid);
  REQUIRE(asn.num_pillars() == 1);
  CHECK(asn.counts[0] == 10);
  CHECK(asn.total_counts[0] == 12);
  CHECK(asn.retained.size() == 10);
  // Lowest x values are retained.
  for (const auto& e : asn.retained) CHECK(frame.points[e.point].x < 1.0 + 0.001 * 10);
}

TEST_CASE("occupancy never exceeds the point count") {
  SceneSpec spec;
  spec.seed = 77;
  auto [frame, boxes] = generate_scene(spec);
  GridConfig grid;
  auto asn = assign_pillars(frame, grid);
  CHECK(asn.num_pillars() <= frame.points.size());
}

TEST_CASE("center offsets") {
  GridConfig grid;
  RadarFrame frame;
  // Exactly at the cell center of cell (0, 0) and at z mid-plane.
  frame.points.push_back({0.08, -25.52, -0.5, 0, 0, 0});
  auto asn = assign_pillars(frame, grid);
  auto offsets = compute_center_offsets(frame, asn, grid);
  REQUIRE(offsets.size() == 1);
  CHECK(offsets[0][0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(offsets[0][1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(offsets[0][2] == Catch::Approx(0.0).margin(1e-12));

  // Bound check: offsets stay within half a cell.
  SceneSpec spec;
  spec.seed = 4;
  auto [f2, b2] = generate_scene(spec);
  auto asn2 = assign_pillars(f2, grid);
  for (const auto& off : compute_center_offsets(f2, asn2, grid)) {
    CHECK(std::abs(off[0]) <= grid.cell_x() / 2 + 1e-12);
    CHECK(std::abs(off[1]) <= grid.cell_y() / 2 + 1e-12);
  }
}

namespace {

template <class S>
SparsePillarTensor<S> encode_from_frame(const RadarFrame& frame, const GridConfig& grid,
                                        const Tensor<S>& weight, const Tensor<S>& bias,
                                        const Tensor<S>& ones, const Tensor<S>& zeros) {
  auto asn = assign_pillars(frame, grid);
  FeatureSetConfig fcfg;
  auto pf = assemble_features(frame, fcfg, &asn);
  auto offsets = compute_center_offsets(frame, asn, grid);
  Tensor<S> pm({pf.rows, pf.cols + 3});
  for (std::size_t r = 0; r < pf.rows; ++r) {
    for (std::size_t c = 0; c < pf.cols; ++c) pm(r, c) = static_cast<S>(pf.at(r, c));
    for (std::size_t c = 0; c < 3; ++c) pm(r, pf.cols + c) = static_cast<S>(offsets[r][c]);
  }
  return encode_pillars(pm, asn, weight, bias, ones, zeros, zeros, ones);
}

}  // namespace

TEST_CASE("encode_pillars: single point and max semantics") {
  GridConfig grid;
  const std::size_t d_in = 11, c = 4;
  Tensor<float> weight({c, d_in});
  Rng rng(55);
  for (auto& v : weight.data) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  Tensor<float> bias({c}), zeros({c}), ones({c});
  ones.fill(1.0f);

  RadarFrame one;
  one.points.push_back({3, 4, 0.2, 7, 2.0, 5.0});
  auto sp = encode_from_frame(one, grid, weight, bias, ones, zeros);
  REQUIRE(sp.num_pillars() == 1);
  // Single point per pillar: feature = relu(affine(point)).
  auto asn = assign_pillars(one, grid);
  FeatureSetConfig fcfg;
  auto pf = assemble_features(one, fcfg, &asn);
  auto offs = compute_center_offsets(one, asn, grid);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0;
    for (std::size_t k = 0; k < 8; ++k) acc += weight(ch, k) * pf.at(0, k);
    for (std::size_t k = 0; k < 3; ++k) acc += weight(ch, 8 + k) * offs[0][k];
    double bn = acc / std::sqrt(1.0 + 1e-5);
    double expect = std::max(0.0, bn);
    CHECK(static_cast<double>(sp.features(0, ch)) == Catch::Approx(expect).margin(1e-5));
  }
}

TEST_CASE("encode_pillars is bit-identical under point permutation") {
  SceneSpec spec;
  spec.seed = 31415;
  auto [frame, boxes] = generate_scene(spec);
  GridConfig grid;
  const std::size_t d_in = 11, c = 8;
  Tensor<float> weight({c, d_in});
  Rng rng(66);
  for (auto& v : weight.data) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  Tensor<float> bias({c}), zeros({c}), ones({c});
  ones.fill(1.0f);

  auto reference = encode_from_frame(frame, grid, weight, bias, ones, zeros);
  for (int trial = 0; trial < 5; ++trial) {
    RadarFrame permuted = frame;
    Rng shuffle(1000 + trial);
    for (std::size_t i = permuted.points.size(); i > 1; --i)
      std::swap(permuted.points[i - 1], permuted.points[shuffle.uniform_index(i)]);
    auto sp = encode_from_frame(permuted, grid, weight, bias, ones, zeros);
    REQUIRE(sp.indices == reference.indices);
    REQUIRE(sp.features.data == reference.features.data);  // bitwise
  }
}

TEST_CASE("scatter and gather") {
  SparsePillarTensor<float> empty;
  empty.height = empty.width = 4;
  empty.features = Tensor<float>({0, 3});
  auto zero_grid = scatter_to_grid(empty);
  CHECK(zero_grid.features.size() == 3 * 16);
  for (float v : zero_grid.features.data) CHECK(v == 0.0f);
  for (auto m : zero_grid.mask) CHECK(m == 0);

  SparsePillarTensor<float> sp;
  sp.height = sp.width = 4;
  sp.indices = {0, 5, 15};
  sp.features = Tensor<float>({3, 2});
  for (std::size_t i = 0; i < sp.features.size(); ++i)
    sp.features.data[i] = static_cast<float>(i + 1);
  auto grid = scatter_to_grid(sp);
  CHECK(grid.features(0, 0, 0) == 1.0f);  // single pillar index 0 -> cell (0, 0)
  CHECK(grid.features(1, 0, 0) == 2.0f);
  CHECK(grid.mask[5] == 1);
  auto back = gather_from_grid(grid);
  CHECK(back.indices == sp.indices);
  CHECK(back.features.data == sp.features.data);

  SparsePillarTensor<float> dup = sp;
  dup.indices = {5, 5, 15};
  CHECK_THROWS_AS(scatter_to_grid(dup), InvariantError);

  // scatter(gather(grid)) is identity on grids whose unoccupied cells are 0.
  auto again = scatter_to_grid(back);
  CHECK(again.features.data == grid.features.data);
  CHECK(again.mask == grid.mask);
}
