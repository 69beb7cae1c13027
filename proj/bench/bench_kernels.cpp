// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels. Argument 0 = Exec::Serial,
// 1 = Exec::Parallel.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "cdngp/config.hpp"
#include "cdngp/continual.hpp"
#include "cdngp/objective.hpp"
#include "cdngp/parallel.hpp"
#include "cdngp/renderer.hpp"
#include "cdngp/scene.hpp"

namespace cdngp {
namespace {

constexpr std::size_t kRays = 1024;
constexpr std::size_t kPerRay = 32;

Exec exec_of(const benchmark::State& s) { return s.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void label(benchmark::State& s) {
  s.SetLabel(s.range(0) == 0 ? "serial" : "omp x" + std::to_string(max_threads(Exec::Parallel)));
}

Mat<float> random_points(int dims, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Mat<float> p(dims, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (int d = 0; d < dims; ++d) p(d, j) = u(rng);
  }
  return p;
}

SampleBatch<float> random_batch(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SampleBatch<float> b;
  b.positions = random_points(3, kRays * kPerRay, seed + 1);
  b.directions.resize(3, static_cast<Eigen::Index>(kRays));
  for (std::size_t r = 0; r < kRays; ++r) {
    b.directions.col(static_cast<Eigen::Index>(r)) = Eigen::Vector3f(u(rng) - 0.5f, u(rng) - 0.5f, 1.0f).normalized();
    b.times.push_back(u(rng));
    for (std::size_t i = 0; i < kPerRay; ++i) {
      const float s0 = static_cast<float>(i) / kPerRay;
      b.s_begin.push_back(s0);
      b.s_end.push_back(s0 + 1.0f / kPerRay);
      b.deltas.push_back(2.0f / kPerRay);
    }
    b.ray_offsets.push_back(static_cast<std::uint32_t>((r + 1) * kPerRay));
  }
  return b;
}

/// Toy-preset model with branches 0 and 1.
struct ToyModel {
  TrainConfig config = toy_config();
  SpatialEncoder<float> base{"base", config.arch.layout, config.arch.spatial};
  std::vector<Branch<float>> branches;

  ToyModel() {
    std::mt19937_64 rng(11);
    base.init_uniform(rng, 1e-1);
    for (std::size_t k = 0; k < 2; ++k) {
      branches.push_back(make_branch<float>(config.arch, k));
      init_branch_params(branches.back(), config.arch, rng);
    }
  }
  FieldModel<float> model() const { return FieldModel<float>(config.arch, base, branches[1], &branches[0]); }
};

void BM_HashEncode(benchmark::State& s) {
  const HashEncoder<float> enc("bench", toy_config().arch.spatial);
  const Mat<float> pts = random_points(3, kRays * kPerRay, 3);
  Mat<float> out;
  for (auto _ : s) {
    enc.encode_batch(pts, out, exec_of(s));
    benchmark::DoNotOptimize(out.data());
  }
  s.SetItemsProcessed(s.iterations() * pts.cols());
  label(s);
}
BENCHMARK(BM_HashEncode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_HashBackward(benchmark::State& s) {
  HashEncoder<float> enc("bench", toy_config().arch.spatial);
  const Mat<float> pts = random_points(3, kRays * kPerRay, 4);
  const Mat<float> grad = Mat<float>::Ones(static_cast<Eigen::Index>(enc.output_width()), pts.cols());
  std::vector<float> tables(enc.tables().size());
  for (auto _ : s) {
    enc.backward_batch(pts, grad, tables, exec_of(s));
    benchmark::DoNotOptimize(tables.data());
  }
  s.SetItemsProcessed(s.iterations() * pts.cols());
  label(s);
}
BENCHMARK(BM_HashBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FieldForward(benchmark::State& s) {
  const ToyModel toy;
  const auto model = toy.model();
  const SampleBatch<float> batch = random_batch(5);
  FieldCache<float> cache;
  for (auto _ : s) {
    model.forward(batch, cache, exec_of(s));
    benchmark::DoNotOptimize(cache.sigma.data());
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(batch.n_samples()));
  label(s);
}
BENCHMARK(BM_FieldForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ObjectiveWithGradient(benchmark::State& s) {
  ToyModel toy;
  const auto model = toy.model();
  const SampleBatch<float> batch = random_batch(6);
  const std::vector<float> target(3 * kRays, 0.5f);
  std::vector<std::vector<float>> grads;
  GradSink<float> sink;
  std::vector<ParamBlock<float>*> blocks;
  for (auto* b : toy.branches[1].blocks()) blocks.push_back(b);
  grads.reserve(blocks.size());
  for (auto* b : blocks) grads.emplace_back(b->size(), 0.0f);
  for (std::size_t i = 0; i < blocks.size(); ++i) sink.attach(*blocks[i], grads[i]);
  FieldCache<float> cache;
  for (auto _ : s) {
    const auto r = evaluate_objective<float>(model, batch, target, toy.config.loss, toy.config.composite(), &sink,
                                             exec_of(s), cache);
    benchmark::DoNotOptimize(r.total);
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(kRays));
  label(s);
}
BENCHMARK(BM_ObjectiveWithGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RenderImage(benchmark::State& s) {
  const ToyModel toy;
  const auto model = toy.model();
  const auto cams = arc_cameras(3, 64, 64);
  OccupancyGrid grid(toy.config.grid_resolution);
  grid.fill(1.0f);
  RenderSettings rs = render_settings(toy.config);
  rs.exec = exec_of(s);
  for (auto _ : s) {
    const auto img = render_image<float>(model, cams[1], 0.5, grid, rs);
    benchmark::DoNotOptimize(img.image.rgb.data());
  }
  s.SetItemsProcessed(s.iterations() * 64 * 64);
  label(s);
}
BENCHMARK(BM_RenderImage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cdngp

BENCHMARK_MAIN();
