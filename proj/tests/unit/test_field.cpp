// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "../common/tiny_model.hpp"
#include "cdngp/error.hpp"
#include "cdngp/field.hpp"

namespace cdngp {
namespace {

using testing::make_tiny;
using testing::tiny_arch;

TEST(Fuse, SumAndConcat) {
  const std::vector<double> a{1, 2}, z{0, 0};
  EXPECT_EQ(fuse_features<double>(a, z, FusionMode::Sum), a);
  const std::vector<double> b{3, -1};
  EXPECT_EQ(fuse_features<double>(a, b, FusionMode::Sum), fuse_features<double>(b, a, FusionMode::Sum));
  const std::vector<double> one{1}, two{2};
  EXPECT_EQ(fuse_features<double>(one, two, FusionMode::Concat), (std::vector<double>{1, 2}));
  EXPECT_THROW(fuse_features<double>(one, a, FusionMode::Sum), ConfigError);
}

TEST(DirectionEncoding, ConstantTerm) {
  std::array<double, kDirectionWidth> out{};
  const std::array<double, 3> d{0, 0, 1};
  EXPECT_TRUE(encode_direction<double>(d, out));
  EXPECT_NEAR(out[0], 0.5 / std::sqrt(std::numbers::pi), 1e-15);
}

TEST(DirectionEncoding, AntipodalParity) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::array<double, 3> d{g(rng), g(rng), g(rng)};
    const double n = std::hypot(d[0], d[1], d[2]);
    for (auto& v : d) v /= n;
    const std::array<double, 3> m{-d[0], -d[1], -d[2]};
    std::array<double, kDirectionWidth> a{}, b{};
    encode_direction<double>(d, a);
    encode_direction<double>(m, b);
    for (std::size_t i = 0; i < kDirectionWidth; ++i) {
      const int degree = i == 0 ? 0 : i < 4 ? 1 : i < 9 ? 2 : 3;
      const double sign = degree % 2 == 1 ? -1.0 : 1.0;
      EXPECT_NEAR(b[i], sign * a[i], 1e-12) << "component " << i;
    }
  }
}

TEST(DirectionEncoding, NonUnitIsNormalizedAndFlagged) {
  std::array<double, kDirectionWidth> a{}, b{};
  EXPECT_FALSE(encode_direction<double>(std::array<double, 3>{0, 3, 4}, a));
  encode_direction<double>(std::array<double, 3>{0, 0.6, 0.8}, b);
  for (std::size_t i = 0; i < kDirectionWidth; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(FieldModel, ZeroModel) {
  const FieldArch arch = tiny_arch();
  SpatialEncoder<double> base("base", arch.layout, arch.spatial);
  const Branch<double> b0 = make_branch<double>(arch, 0);
  FieldModel<double> model(arch, base, b0, &b0);
  const std::array<double, 3> x{0.3, 0.4, 0.5}, d{0, 0, 1};
  const FieldSample s = model.query(x, 0.5, d);
  EXPECT_DOUBLE_EQ(s.sigma, 1.0);
  for (double c : s.color) EXPECT_DOUBLE_EQ(c, 0.5);
}

TEST(FieldModel, QueryIsDeterministicAndInRange) {
  auto t = make_tiny(3, 1, tiny_arch());
  for (auto* b : t.base.blocks()) {
    for (double& v : b->values) v *= 8.0;
  }
  const auto model = t.model();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 50; ++i) {
    const std::array<double, 3> x{u(rng), u(rng), u(rng)}, d{0, 1, 0};
    const double time = u(rng);
    const auto a = model.query(x, time, d);
    const auto b = model.query(x, time, d);
    EXPECT_EQ(a.sigma, b.sigma);
    EXPECT_EQ(a.color, b.color);
    EXPECT_GE(a.sigma, 0.0);
    for (double c : a.color) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
  }
}

TEST(FieldModel, BatchForwardMatchesQuery) {
  for (auto layout : {SpatialLayout::Voxel, SpatialLayout::Plane, SpatialLayout::Merf}) {
    FieldArch arch = tiny_arch();
    arch.layout = layout;
    arch.spatial.log2_table = 8;
    auto t = make_tiny(5, 2, arch, 4, 5);
    const auto model = t.model();
    FieldCache<double> serial, parallel;
    model.forward(t.batch, serial, Exec::Serial);
    model.forward(t.batch, parallel, Exec::Parallel);
    for (std::size_t r = 0; r < t.batch.n_rays(); ++r) {
      const std::array<double, 3> d{t.batch.directions(0, r), t.batch.directions(1, r), t.batch.directions(2, r)};
      for (std::uint32_t s = t.batch.ray_offsets[r]; s < t.batch.ray_offsets[r + 1]; ++s) {
        const std::array<double, 3> x{t.batch.positions(0, s), t.batch.positions(1, s), t.batch.positions(2, s)};
        const auto q = model.query(x, t.batch.times[r], d);
        EXPECT_NEAR(serial.sigma[s], q.sigma, 1e-10 * std::max(1.0, q.sigma));
        for (int c = 0; c < 3; ++c) {
          EXPECT_NEAR(serial.color(c, s), q.color[static_cast<std::size_t>(c)], 1e-10);
          EXPECT_EQ(serial.color(c, s), parallel.color(c, s));
        }
        EXPECT_EQ(serial.sigma[s], parallel.sigma[s]);
      }
    }
  }
}

TEST(FieldModel, SumFusionIsSymmetricInBaseAndAux) {
  FieldArch arch = tiny_arch();
  arch.aux_log2 = arch.spatial.log2_table;
  auto t = make_tiny(6, 1, arch);
  Branch<double>& b1 = t.branches[1];
  ASSERT_TRUE(b1.aux.has_value());
  SpatialEncoder<double> swapped_base = *b1.aux;
  Branch<double> swapped = b1;
  swapped.aux = t.base;
  FieldModel<double> a(arch, t.base, b1, &t.branches[0]);
  FieldModel<double> b(arch, swapped_base, swapped, &t.branches[0]);
  const std::array<double, 3> x{0.21, 0.52, 0.83}, d{1, 0, 0};
  const auto qa = a.query(x, 0.4, d);
  const auto qb = b.query(x, 0.4, d);
  EXPECT_NEAR(qa.sigma, qb.sigma, 1e-12 * std::max(1.0, qa.sigma));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(qa.color[c], qb.color[c], 1e-12);
}

TEST(FieldModel, ZeroAuxMatchesBaseOnlyField) {
  const FieldArch arch = tiny_arch();
  auto t = make_tiny(7, 1, arch);
  Branch<double>& b1 = t.branches[1];
  for (auto* blk : b1.aux->blocks()) std::fill(blk->values.begin(), blk->values.end(), 0.0);
  Branch<double> only_base = make_branch<double>(arch, 0);
  ASSERT_EQ(only_base.sigma_net.params().shape, b1.sigma_net.params().shape);
  only_base.sigma_net = b1.sigma_net;
  only_base.color_net = b1.color_net;
  only_base.temporal = b1.temporal;
  FieldModel<double> with_aux(arch, t.base, b1, &t.branches[0]);
  FieldModel<double> base_only(arch, t.base, only_base, &only_base);
  const std::array<double, 3> x{0.6, 0.1, 0.35}, d{0, 0, -1};
  const auto a = with_aux.query(x, 0.7, d);
  const auto b = base_only.query(x, 0.7, d);
  EXPECT_DOUBLE_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.color, b.color);
}

TEST(FieldModel, ConcatDoublesSpatialWidth) {
  FieldArch arch = tiny_arch();
  arch.fusion = FusionMode::Concat;
  const std::size_t w = arch.spatial_width();
  EXPECT_EQ(arch.sigma_input_width(1), 2 * w + arch.temporal_width(1));
  arch.fusion = FusionMode::Sum;
  EXPECT_EQ(arch.sigma_input_width(1), w + arch.temporal_width(1));
}

TEST(Compose, Definition) {
  FieldSample a{1.0, {0.2, 0.2, 0.2}, {}};
  const auto s = compose_fields(a, a);
  EXPECT_DOUBLE_EQ(s.sigma, 2.0);
  for (double c : s.color) EXPECT_DOUBLE_EQ(c, 0.4);
  const FieldSample zero{0.0, {0, 0, 0}, {}};
  const auto id = compose_fields(a, zero);
  EXPECT_DOUBLE_EQ(id.sigma, 1.0);
  EXPECT_EQ(id.color, a.color);
  FieldSample bright{0.5, {0.8, 0.9, 0.1}, {}};
  const auto clamped = compose_fields(bright, bright);
  EXPECT_DOUBLE_EQ(clamped.color[0], 1.0);
  EXPECT_DOUBLE_EQ(clamped.color[2], 0.2);
}

TEST(Compose, ModelSumsBaseAndBranch) {
  for (auto mode : {Composition::Full, Composition::StaticDynamic}) {
    FieldArch arch = tiny_arch();
    arch.composition = mode;
    auto t = make_tiny(8, 1, arch);
    const auto model = t.model();
    const std::array<double, 3> x{0.4, 0.45, 0.5}, d{0, 1, 0};
    const auto full = model.query(x, 0.3, d);
    const auto base = model.query_base(x, 0.3, d);
    EXPECT_GT(full.sigma, base.sigma);
    if (mode == Composition::StaticDynamic) {
      const auto later = model.query_base(x, 0.9, d);
      EXPECT_EQ(base.sigma, later.sigma);
      EXPECT_EQ(base.color, later.color);
    }
  }
}

TEST(Names, RoundTrip) {
  for (auto f : {FusionMode::Sum, FusionMode::Concat}) EXPECT_EQ(parse_fusion_mode(to_string(f)), f);
  for (auto c : {Composition::Fused, Composition::Full, Composition::StaticDynamic}) {
    EXPECT_EQ(parse_composition(to_string(c)), c);
  }
  EXPECT_THROW(parse_fusion_mode("product"), ConfigError);
}

}  // namespace
}  // namespace cdngp
