// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "cdngp/continual.hpp"
#include "cdngp/error.hpp"

namespace cdngp {

namespace {

struct Optimizer {
  std::vector<ParamBlock<float>*> blocks;
  std::vector<AlignedVector<float>> grads;
  std::vector<AdamState<float>> states;
  GradSink<float> sink;

  explicit Optimizer(std::vector<ParamBlock<float>*> b) : blocks(std::move(b)) {
    grads.reserve(blocks.size());
    for (auto* blk : blocks) {
      grads.emplace_back(blk->size(), 0.0f);
      states.emplace_back(blk->size());
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) sink.attach(*blocks[i], grads[i]);
  }

  void zero() {
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
  }

  void step(float lr) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      adam_step<float>(states[i], blocks[i]->values, grads[i], lr);
    }
  }
};

}  // namespace

ChunkStats train_branch(ModelRepo& repo, std::size_t k, const SceneDataset& dataset, const ChunkFrames& frames,
                        const TrainHooks& hooks) {
  if (k >= repo.branches.size()) throw ContractViolation("train_branch: branch not initialized");
  if (frames.range != repo.schedule.chunks[k]) throw ContractViolation("train_branch: frames belong to another chunk");
  const TrainConfig& cfg = repo.config;
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = chunk_rng(cfg.seed, k);
  const std::uint64_t eta = repo.schedule.iterations(k);

  // Every branch starts from an all-occupied grid so newly moving content is
  // not culled before the density cache catches up.
  repo.grid.raise_to(static_cast<float>(2.0 * cfg.grid_threshold));

  const std::vector<double> weights = importance_weights(frames, cfg.importance_floor);
  const ImportanceSampler sampler(weights);
  const std::size_t n_pix = frames.images[0][0].pixel_count();
  const int n_chunk_frames = frames.range.size();

  Optimizer opt(trainable_blocks(repo, k));
  const FieldModel<float> model = repo.model(k);
  const CompositeOptions composite = cfg.composite();
  const DensityFn density = [&](const Mat<float>& pos, std::span<const float> times, std::vector<float>& sigma) {
    model.density(pos, times, sigma, Exec::Parallel);
  };

  ChunkStats stats;
  stats.chunk = k;
  stats.iterations = eta;
  stats.losses.reserve(eta);
  std::vector<RaySample> picks(cfg.batch_rays);
  std::vector<Ray> rays(cfg.batch_rays);
  std::vector<double> times(cfg.batch_rays);
  std::vector<std::size_t> slots(cfg.batch_rays);
  std::vector<float> target;
  SampleBatch<float> batch;
  FieldCache<float> cache;
  std::uniform_int_distribution<int> pick_frame(0, n_chunk_frames - 1);

  for (std::uint64_t s = 0; s < eta; ++s) {
    if (s % OccupancyGrid::kUpdateInterval == 0) update_occupancy(repo.grid, density, s, rng);

    for (std::size_t r = 0; r < cfg.batch_rays; ++r) {
      const std::size_t idx = sampler.draw(rng);
      const std::size_t slot = idx / n_pix;
      const auto pixel = static_cast<std::uint32_t>(idx % n_pix);
      const int fi = pick_frame(rng);
      slots[r] = slot;
      picks[r] = {frames.views[slot], frames.range.begin + fi, pixel};
      rays[r] = generate_rays(dataset.cameras()[frames.views[slot]], std::span(&pixel, 1))[0];
      times[r] = repo.schedule.local_time(frames.range.begin + fi);
    }
    if (hooks.on_batch) hooks.on_batch(k, picks);

    build_sample_batch<float>(rays, times, repo.grid, cfg.step, &rng, batch);
    target.resize(3 * cfg.batch_rays);
    for (std::size_t r = 0; r < cfg.batch_rays; ++r) {
      const Image& img = frames.images[picks[r].frame - frames.range.begin][slots[r]];
      for (int c = 0; c < 3; ++c) target[3 * r + c] = img.rgb[3 * std::size_t{picks[r].pixel} + c];
    }

    opt.zero();
    ObjectiveResult res;
    try {
      res = evaluate_objective<float>(model, batch, target, cfg.loss, composite, &opt.sink, Exec::Parallel, cache);
      opt.step(static_cast<float>(cosine_lr(s, eta, cfg.lr)));
    } catch (const NumericalError& e) {
      throw NumericalError("chunk " + std::to_string(k) + " step " + std::to_string(s) + ": " + e.what());
    }
    if (s == 0) stats.first_loss = res.total;
    stats.last_loss = res.total;
    stats.losses.push_back(res.total);
    if (hooks.on_step) hooks.on_step(k, s, res);
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("chunk {} trained: {} steps, loss {:.5f} -> {:.5f}, {:.1f} s", k, eta, stats.first_loss,
               stats.last_loss, stats.seconds);
  return stats;
}

std::vector<ChunkStats> run_continual(ModelRepo& repo, const SceneDataset& dataset, const TrainHooks& hooks,
                                      int last_chunk, FrameResidency* residency) {
  if (dataset.n_frames() != repo.schedule.n_frames) {
    throw ContractViolation("run_continual: dataset has " + std::to_string(dataset.n_frames()) +
                            " frames, model expects " + std::to_string(repo.schedule.n_frames));
  }
  const std::size_t end =
      last_chunk < 0 ? repo.schedule.size() : std::min(repo.schedule.size(), static_cast<std::size_t>(last_chunk));
  FrameResidency local(repo.config.t_chunk);
  FrameResidency& res = residency != nullptr ? *residency : local;
  std::vector<ChunkStats> out;
  for (std::size_t k = repo.branches.size(); k < end; ++k) {
    auto brng = branch_rng(repo.config.seed, k);
    std::uint64_t iters = 0;
    repo.branches.push_back(init_branch(repo, k, brng, &iters));
    {
      const ChunkFrames frames = load_chunk(dataset, repo.schedule.chunks[k], res);
      out.push_back(train_branch(repo, k, dataset, frames, hooks));
    }
    if (repo.config.snapshot_grids) {
      repo.grid_snapshots.resize(k);
      repo.grid_snapshots.push_back(repo.grid);
    }
    if (hooks.after_chunk) hooks.after_chunk(k, repo, out.back());
  }
  return out;
}

RenderSettings render_settings(const TrainConfig& config) {
  RenderSettings s;
  s.step = config.step;
  s.composite = config.composite();
  return s;
}

RenderedImage render_frame(const ModelRepo& repo, const Camera& camera, int frame, const RenderSettings& settings) {
  const std::size_t k = repo.schedule.chunk_of_frame(frame);
  if (k >= repo.branches.size()) {
    throw OutOfRangeError("frame " + std::to_string(frame) + " belongs to untrained chunk " + std::to_string(k));
  }
  return render_image<float>(repo.model(k), camera, repo.schedule.local_time(frame), repo.grid_for(k), settings);
}

std::vector<MetricRow> evaluate_frames(const ModelRepo& repo, const SceneDataset& dataset, int view,
                                       std::span<const int> frames) {
  if (view < 0 || view >= dataset.n_views()) throw OutOfRangeError("view " + std::to_string(view) + " out of range");
  const RenderSettings settings = render_settings(repo.config);
  std::vector<MetricRow> rows;
  for (int f : frames) {
    const RenderedImage r = render_frame(repo, dataset.cameras()[view], f, settings);
    const Image gt = dataset.load_frame(view, f);
    rows.push_back({f, view, psnr(r.image, gt), dssim(r.image, gt)});
  }
  return rows;
}

}  // namespace cdngp
