// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "../common/tiny_model.hpp"

namespace cdngp {
namespace {

using testing::check_objective;
using testing::make_tiny;
using testing::tiny_arch;

struct Variant {
  const char* name;
  SpatialLayout layout;
  FusionMode fusion;
  TemporalMode temporal;
  Composition composition;
};

void PrintTo(const Variant& v, std::ostream* os) { *os << v.name; }

class ObjectiveGradient : public ::testing::TestWithParam<Variant> {};

TEST_P(ObjectiveGradient, MatchesCentralDifferences) {
  const Variant v = GetParam();
  FieldArch a = tiny_arch();
  a.layout = v.layout;
  a.fusion = v.fusion;
  a.temporal = v.temporal;
  a.composition = v.composition;
  if (v.temporal == TemporalMode::Hash4D) a.aux_log2 = a.spatial.log2_table;
  for (std::size_t k : {0u, 1u, 2u}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      auto t = make_tiny(seed * 31 + k, k, a);
      const auto r = check_objective(t, LossWeights{});
      EXPECT_LT(r.max_rel_error, 1e-3) << v.name << " k=" << k << " seed=" << seed << " worst " << r.worst_block
                                       << "[" << r.worst_index << "]";
      EXPECT_GT(r.coordinates, 0u);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Variants, ObjectiveGradient,
    ::testing::Values(
        Variant{"voxel_sum", SpatialLayout::Voxel, FusionMode::Sum, TemporalMode::Hash, Composition::Fused},
        Variant{"voxel_concat", SpatialLayout::Voxel, FusionMode::Concat, TemporalMode::Hash, Composition::Fused},
        Variant{"plane_sum", SpatialLayout::Plane, FusionMode::Sum, TemporalMode::Hash, Composition::Fused},
        Variant{"merf_sum", SpatialLayout::Merf, FusionMode::Sum, TemporalMode::Hash, Composition::Fused},
        Variant{"merf_concat", SpatialLayout::Merf, FusionMode::Concat, TemporalMode::Hash, Composition::Fused},
        Variant{"freq", SpatialLayout::Voxel, FusionMode::Sum, TemporalMode::Freq, Composition::Fused},
        Variant{"freq_mlp", SpatialLayout::Voxel, FusionMode::Sum, TemporalMode::FreqMlp, Composition::Fused},
        Variant{"hash4d", SpatialLayout::Voxel, FusionMode::Sum, TemporalMode::Hash4D, Composition::Fused},
        Variant{"full", SpatialLayout::Voxel, FusionMode::Sum, TemporalMode::Hash, Composition::Full},
        Variant{"static_dynamic", SpatialLayout::Voxel, FusionMode::Sum, TemporalMode::Hash,
                Composition::StaticDynamic}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(ObjectiveGradient, SerialAndParallelAgree) {
  auto t = make_tiny(5, 1, tiny_arch(), 16, 8);
  const auto r = check_objective(t, LossWeights{}, 1e-6, 32, Exec::Parallel);
  EXPECT_LT(r.max_rel_error, 1e-3);
}

}  // namespace
}  // namespace cdngp
