// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <vector>

#include "cdngp/field.hpp"
#include "cdngp/losses.hpp"
#include "cdngp/objective.hpp"

namespace cdngp::testing {

/// L=2, F=2, P=6 grids, hidden widths 16 / 8.
inline FieldArch tiny_arch() {
  FieldArch a;
  a.spatial = {3, 2, 2, 6, 2, 8};
  a.aux_log2 = 6;
  a.temporal_grid = {1, 2, 2, 6, 2, 10};
  a.hidden_sigma = {16};
  a.latent = 4;
  a.hidden_color = {8};
  a.table_init = 0.5;
  return a;
}

/// Double-precision model with branches 0..k and a random ray batch.
struct TinySetup {
  FieldArch arch;
  SpatialEncoder<double> base;
  std::vector<Branch<double>> branches;
  SampleBatch<double> batch;
  std::vector<double> target;
  std::size_t k = 0;

  FieldModel<double> model() const { return FieldModel<double>(arch, base, branches[k], &branches[0]); }
};

inline SampleBatch<double> random_batch(std::mt19937_64& rng, std::size_t rays, std::size_t per_ray) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  SampleBatch<double> b;
  b.positions.resize(3, static_cast<Eigen::Index>(rays * per_ray));
  b.directions.resize(3, static_cast<Eigen::Index>(rays));
  for (std::size_t r = 0; r < rays; ++r) {
    double d[3] = {g(rng), g(rng), g(rng)};
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (int a = 0; a < 3; ++a) b.directions(a, static_cast<Eigen::Index>(r)) = d[a] / n;
    b.times.push_back(u(rng));
    double s = 0.05 * u(rng);
    for (std::size_t i = 0; i < per_ray; ++i) {
      const auto col = static_cast<Eigen::Index>(r * per_ray + i);
      for (int a = 0; a < 3; ++a) b.positions(a, col) = 0.05 + 0.9 * u(rng);
      const double w = 0.04 + 0.08 * u(rng);
      b.s_begin.push_back(s);
      b.s_end.push_back(s + w);
      b.deltas.push_back(2.0 * w);
      s += w + 0.01 * u(rng);
    }
    b.ray_offsets.push_back(static_cast<std::uint32_t>((r + 1) * per_ray));
  }
  return b;
}

inline TinySetup make_tiny(std::uint64_t seed, std::size_t k, const FieldArch& arch, std::size_t rays = 3,
                           std::size_t per_ray = 8) {
  std::mt19937_64 rng(seed);
  TinySetup t;
  t.arch = arch;
  t.k = k;
  t.base = SpatialEncoder<double>("base", arch.layout, arch.spatial);
  t.base.init_uniform(rng, arch.table_init);
  for (std::size_t j = 0; j <= k; ++j) {
    t.branches.push_back(make_branch<double>(arch, j));
    init_branch_params(t.branches.back(), arch, rng);
  }
  // Non-zero biases so no activation sits exactly at a kink.
  for (auto& b : t.branches) {
    for (auto* blk : b.blocks()) {
      std::uniform_real_distribution<double> u(-0.2, 0.2);
      for (double& v : blk->values) v += 0.01 * u(rng);
    }
  }
  t.batch = random_batch(rng, rays, per_ray);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < 3 * rays; ++i) t.target.push_back(u(rng));
  return t;
}

/// Blocks trained for branch k: base tables on k = 0, then the branch's own.
inline std::vector<ParamBlock<double>*> trainable(TinySetup& t) {
  std::vector<ParamBlock<double>*> out;
  if (t.k == 0) {
    for (auto* b : t.base.blocks()) out.push_back(b);
  }
  for (auto* b : t.branches[t.k].blocks()) out.push_back(b);
  return out;
}

/// Finite-difference check of the full objective (all four terms).
inline GradCheckReport check_objective(TinySetup& t, const LossWeights& w, double h = 1e-6,
                                       std::size_t max_per_block = 64, Exec exec = Exec::Serial) {
  const auto blocks = trainable(t);
  std::vector<std::vector<double>> grads;
  GradSink<double> sink;
  grads.reserve(blocks.size());
  for (auto* b : blocks) grads.emplace_back(b->size(), 0.0);
  for (std::size_t i = 0; i < blocks.size(); ++i) sink.attach(*blocks[i], grads[i]);
  const CompositeOptions composite{{0.1, 0.2, 0.3}, false};
  FieldCache<double> cache;
  evaluate_objective<double>(t.model(), t.batch, t.target, w, composite, &sink, exec, cache);
  std::vector<GradCheckBlock<double>> checks;
  for (std::size_t i = 0; i < blocks.size(); ++i) checks.push_back({blocks[i]->name, blocks[i]->values, grads[i]});
  const auto loss = [&]() {
    FieldCache<double> c;
    return evaluate_objective<double>(t.model(), t.batch, t.target, w, composite, nullptr, exec, c).total;
  };
  return finite_diff_check<double>(loss, checks, h, 7, max_per_block);
}

}  // namespace cdngp::testing
