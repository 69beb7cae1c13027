// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cdngp/field.hpp"
#include "cdngp/image.hpp"
#include "cdngp/losses.hpp"
#include "cdngp/objective.hpp"
#include "cdngp/renderer.hpp"
#include "cdngp/scene.hpp"

namespace cdngp {

struct ChunkRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
  bool operator==(const ChunkRange&) const = default;
};

struct ChunkSchedule {
  int n_frames = 0;
  int t_chunk = 1;
  int t_episode = 1;
  std::uint64_t eta_init = 18000;
  std::uint64_t eta_aux = 3000;
  std::vector<ChunkRange> chunks;

  std::size_t size() const { return chunks.size(); }
  bool episode_start(std::size_t k) const { return k % static_cast<std::size_t>(t_episode) == 0; }
  std::uint64_t iterations(std::size_t k) const { return episode_start(k) ? eta_init : eta_aux; }
  /// Throws OutOfRangeError for frames outside the sequence.
  std::size_t chunk_of_frame(int frame) const;
  /// (f - s) / max(1, e - s - 1) within the frame's chunk.
  double local_time(int frame) const;
  bool operator==(const ChunkSchedule&) const = default;
};

/// Chunk k covers frames [k T_chunk, min((k + 1) T_chunk, N)).
ChunkSchedule plan_chunks(int n_frames, int t_chunk, int t_episode, std::uint64_t eta_init = 18000,
                          std::uint64_t eta_aux = 3000);

struct TrainConfig {
  FieldArch arch;
  int t_chunk = 10;
  int t_episode = 30;
  std::uint64_t eta_init = 18000;
  std::uint64_t eta_aux = 3000;
  std::size_t batch_rays = 1024;
  double lr = 1e-3;
  LossWeights loss;
  double step = 2.0 * 1.7320508075688772 / 1024.0;
  int grid_resolution = 128;
  double grid_decay = 0.95;
  double grid_threshold = 0.01;
  double importance_floor = 0.05;
  std::uint64_t seed = 0;
  /// Keep a copy of the occupancy grid after every chunk (evaluation only).
  bool snapshot_grids = false;
  bool early_termination = true;
  std::array<double, 3> background{0, 0, 0};
  /// Off: every branch starts from fresh decoders (ablation control).
  bool warm_start = true;

  void validate() const;
  CompositeOptions composite() const { return {background, early_termination}; }
};

/// Continual model: one base spatial table set, one branch per trained
/// chunk and the shared occupancy grid.
struct ModelRepo {
  TrainConfig config;
  ChunkSchedule schedule;
  SpatialEncoder<float> base;
  std::vector<Branch<float>> branches;
  OccupancyGrid grid;
  std::vector<OccupancyGrid> grid_snapshots;

  /// Base tables at 2^P1, zero branches.
  static ModelRepo create(const TrainConfig& config, int n_frames);

  bool complete() const { return branches.size() == schedule.size(); }
  FieldModel<float> model(std::size_t k) const;
  /// Grid used to render chunk k: its snapshot if one was kept.
  const OccupancyGrid& grid_for(std::size_t k) const;
};

/// Independent deterministic streams per (seed, chunk).
std::mt19937_64 chunk_rng(std::uint64_t seed, std::size_t k);
std::mt19937_64 branch_rng(std::uint64_t seed, std::size_t k);

/// Fresh or warm-started branch k. Auxiliary tables are always fresh.
/// Returns the iteration budget through `iterations`.
Branch<float> init_branch(const ModelRepo& repo, std::size_t k, std::mt19937_64& rng, std::uint64_t* iterations);

/// Every trainable block for branch k. The base tables are trainable only
/// while k = 0.
std::vector<ParamBlock<float>*> trainable_blocks(ModelRepo& repo, std::size_t k);

/// Counts decoded frames and refuses to exceed the limit.
class FrameResidency {
 public:
  class Lease {
   public:
    Lease() = default;
    Lease(FrameResidency* owner, int n) : owner_(owner), n_(n) {}
    Lease(Lease&& o) noexcept : owner_(o.owner_), n_(o.n_) { o.owner_ = nullptr; }
    Lease& operator=(Lease&& o) noexcept;
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease();

   private:
    FrameResidency* owner_ = nullptr;
    int n_ = 0;
  };

  explicit FrameResidency(int limit) : limit_(limit) {}
  Lease acquire(int n);
  int resident() const { return resident_; }
  int peak() const { return peak_; }
  int limit() const { return limit_; }

 private:
  int limit_;
  int resident_ = 0;
  int peak_ = 0;
};

/// Decoded training views of one chunk.
struct ChunkFrames {
  ChunkRange range;
  std::vector<int> views;
  std::vector<std::vector<Image>> images;  // [frame - range.begin][view slot]
  std::vector<FrameResidency::Lease> leases;
};

ChunkFrames load_chunk(const SceneDataset& dataset, const ChunkRange& range, FrameResidency& residency);

/// Per-(view slot, pixel) weight max(gamma, max_f max_c |frame - median|),
/// the median taken over the chunk's frames of that view.
std::vector<double> importance_weights(const ChunkFrames& frames, double gamma);

/// Draws indices with replacement proportional to non-negative weights.
class ImportanceSampler {
 public:
  explicit ImportanceSampler(std::span<const double> weights);
  std::size_t draw(std::mt19937_64& rng) const;
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

struct RaySample {
  int view = 0;
  int frame = 0;
  std::uint32_t pixel = 0;
};

struct ChunkStats {
  std::size_t chunk = 0;
  std::uint64_t iterations = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  double seconds = 0.0;
  std::vector<double> losses;
};

struct TrainHooks {
  std::function<void(std::size_t k, std::uint64_t step, const ObjectiveResult&)> on_step;
  std::function<void(std::size_t k, const ModelRepo&, const ChunkStats&)> after_chunk;
  /// Called with the training batch composition (sampler audit).
  std::function<void(std::size_t k, std::span<const RaySample>)> on_batch;
};

/// Trains branch k (already appended to repo.branches) on its chunk.
ChunkStats train_branch(ModelRepo& repo, std::size_t k, const SceneDataset& dataset, const ChunkFrames& frames,
                        const TrainHooks& hooks = {});

/// Trains chunks [repo.branches.size(), last_chunk) in order; last_chunk < 0
/// means all. Returns per-chunk statistics.
std::vector<ChunkStats> run_continual(ModelRepo& repo, const SceneDataset& dataset, const TrainHooks& hooks = {},
                                      int last_chunk = -1, FrameResidency* residency = nullptr);

RenderedImage render_frame(const ModelRepo& repo, const Camera& camera, int frame, const RenderSettings& settings);

RenderSettings render_settings(const TrainConfig& config);

/// Renders view `view` at each frame and compares with the dataset.
std::vector<MetricRow> evaluate_frames(const ModelRepo& repo, const SceneDataset& dataset, int view,
                                       std::span<const int> frames);

}  // namespace cdngp
