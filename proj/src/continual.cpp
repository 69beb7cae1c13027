// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/continual.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "cdngp/error.hpp"

namespace cdngp {

std::size_t ChunkSchedule::chunk_of_frame(int frame) const {
  if (frame < 0 || frame >= n_frames) {
    throw OutOfRangeError("frame " + std::to_string(frame) + " outside [0, " + std::to_string(n_frames) + ")");
  }
  return static_cast<std::size_t>(frame / t_chunk);
}

double ChunkSchedule::local_time(int frame) const {
  const ChunkRange& c = chunks[chunk_of_frame(frame)];
  return static_cast<double>(frame - c.begin) / std::max(1, c.end - c.begin - 1);
}

ChunkSchedule plan_chunks(int n_frames, int t_chunk, int t_episode, std::uint64_t eta_init, std::uint64_t eta_aux) {
  if (n_frames < 1) throw ConfigError("plan_chunks: at least one frame required");
  if (t_chunk < 1) throw ConfigError("plan_chunks: T_chunk must be at least 1");
  if (t_episode < 1) throw ConfigError("plan_chunks: T_episode must be at least 1");
  ChunkSchedule s;
  s.n_frames = n_frames;
  s.t_episode = t_episode;
  s.eta_init = eta_init;
  s.eta_aux = eta_aux;
  if (t_chunk > n_frames) {
    spdlog::warn("T_chunk {} exceeds the frame count {}; training a single chunk", t_chunk, n_frames);
    t_chunk = n_frames;
  }
  s.t_chunk = t_chunk;
  for (int b = 0; b < n_frames; b += t_chunk) s.chunks.push_back({b, std::min(b + t_chunk, n_frames)});
  return s;
}

void TrainConfig::validate() const {
  arch.validate();
  if (arch.spatial.log2_table < arch.aux_log2) throw ConfigError("P1 must be at least P2");
  if (t_chunk < 1 || t_episode < 1) throw ConfigError("T_chunk and T_episode must be positive");
  if (batch_rays == 0) throw ConfigError("batch_rays must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(step > 0.0)) throw ConfigError("ray-marching step must be positive");
  if (!(importance_floor >= 0.0)) throw ConfigError("importance floor must be non-negative");
  loss.validate();
  OccupancyGrid probe(1, grid_decay, grid_threshold);
  if (grid_resolution < 1 || grid_resolution > 512) throw ConfigError("grid resolution out of range");
}

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kStreamBase = 1;
constexpr std::uint64_t kStreamBranch = 2;
constexpr std::uint64_t kStreamTrain = 3;

}  // namespace

ModelRepo ModelRepo::create(const TrainConfig& config, int n_frames) {
  config.validate();
  ModelRepo repo;
  repo.config = config;
  repo.schedule = plan_chunks(n_frames, config.t_chunk, config.t_episode, config.eta_init, config.eta_aux);
  repo.base = SpatialEncoder<float>("base", config.arch.layout, config.arch.spatial);
  auto rng = seeded(config.seed, kStreamBase, 0);
  repo.base.init_uniform(rng, config.arch.table_init);
  repo.grid = OccupancyGrid(config.grid_resolution, config.grid_decay, config.grid_threshold);
  return repo;
}

FieldModel<float> ModelRepo::model(std::size_t k) const {
  if (k >= branches.size()) throw OutOfRangeError("chunk " + std::to_string(k) + " has no trained branch");
  return FieldModel<float>(config.arch, base, branches[k], branches.empty() ? nullptr : &branches[0]);
}

const OccupancyGrid& ModelRepo::grid_for(std::size_t k) const {
  if (k < grid_snapshots.size()) return grid_snapshots[k];
  return grid;
}

Branch<float> init_branch(const ModelRepo& repo, std::size_t k, std::mt19937_64& rng, std::uint64_t* iterations) {
  if (k != repo.branches.size()) {
    throw ContractViolation("init_branch: branch " + std::to_string(k) + " requested with " +
                            std::to_string(repo.branches.size()) + " completed");
  }
  if (k >= repo.schedule.size()) throw ContractViolation("init_branch: chunk index beyond the schedule");
  const TrainConfig& cfg = repo.config;
  Branch<float> b = make_branch<float>(cfg.arch, k);
  init_branch_params(b, cfg.arch, rng);
  // The base field of a composition model plays a different role, so the
  // first residual branch never inherits its decoders.
  const bool composition_first = cfg.arch.composition != Composition::Fused && k == 1;
  const bool fresh = !cfg.warm_start || repo.schedule.episode_start(k) || composition_first;
  if (!fresh) {
    const Branch<float>& prev = repo.branches[k - 1];
    auto copy_if_same = [](ParamBlock<float>& dst, const ParamBlock<float>& src) {
      if (dst.shape == src.shape) dst.values = src.values;
    };
    copy_if_same(b.sigma_net.params(), prev.sigma_net.params());
    copy_if_same(b.color_net.params(), prev.color_net.params());
    if (b.temporal && prev.temporal) {
      auto dst = b.temporal->blocks();
      auto src = prev.temporal->blocks();
      for (std::size_t i = 0; i < dst.size() && i < src.size(); ++i) copy_if_same(*dst[i], *src[i]);
    }
  }
  if (iterations != nullptr) *iterations = repo.schedule.iterations(k);
  return b;
}

std::vector<ParamBlock<float>*> trainable_blocks(ModelRepo& repo, std::size_t k) {
  if (k >= repo.branches.size()) throw ContractViolation("trainable_blocks: branch not initialized");
  std::vector<ParamBlock<float>*> out;
  if (k == 0) {
    for (auto* b : repo.base.blocks()) out.push_back(b);
  }
  for (auto* b : repo.branches[k].blocks()) out.push_back(b);
  return out;
}

FrameResidency::Lease& FrameResidency::Lease::operator=(Lease&& o) noexcept {
  if (this != &o) {
    if (owner_ != nullptr) owner_->resident_ -= n_;
    owner_ = o.owner_;
    n_ = o.n_;
    o.owner_ = nullptr;
  }
  return *this;
}

FrameResidency::Lease::~Lease() {
  if (owner_ != nullptr) owner_->resident_ -= n_;
}

FrameResidency::Lease FrameResidency::acquire(int n) {
  if (resident_ + n > limit_) {
    throw ContractViolation("frame residency: " + std::to_string(resident_ + n) + " frames would exceed the limit of " +
                            std::to_string(limit_));
  }
  resident_ += n;
  peak_ = std::max(peak_, resident_);
  return Lease(this, n);
}

ChunkFrames load_chunk(const SceneDataset& dataset, const ChunkRange& range, FrameResidency& residency) {
  if (range.size() <= 0) throw ContractViolation("load_chunk: empty chunk");
  ChunkFrames out;
  out.range = range;
  out.views = dataset.training_views();
  for (int f = range.begin; f < range.end; ++f) {
    out.leases.push_back(residency.acquire(1));
    std::vector<Image> views;
    for (int v : out.views) views.push_back(dataset.load_frame(v, f));
    out.images.push_back(std::move(views));
  }
  return out;
}

std::vector<double> importance_weights(const ChunkFrames& frames, double gamma) {
  if (frames.images.empty() || frames.views.empty()) throw ContractViolation("importance_weights: empty chunk");
  const std::size_t n_frames = frames.images.size();
  const std::size_t n_views = frames.views.size();
  const std::size_t n_pix = frames.images[0][0].pixel_count();
  std::vector<double> w(n_views * n_pix);
  std::vector<float> vals(n_frames);
  for (std::size_t s = 0; s < n_views; ++s) {
    for (std::size_t p = 0; p < n_pix; ++p) {
      double m = 0.0;
      for (int c = 0; c < 3; ++c) {
        for (std::size_t f = 0; f < n_frames; ++f) vals[f] = frames.images[f][s].rgb[3 * p + c];
        auto mid = vals.begin() + static_cast<std::ptrdiff_t>(n_frames / 2);
        std::nth_element(vals.begin(), mid, vals.end());
        double median = *mid;
        if (n_frames % 2 == 0) {
          const float lower = *std::max_element(vals.begin(), mid);
          median = 0.5 * (static_cast<double>(lower) + median);
        }
        for (std::size_t f = 0; f < n_frames; ++f) {
          m = std::max(m, std::abs(static_cast<double>(frames.images[f][s].rgb[3 * p + c]) - median));
        }
      }
      w[s * n_pix + p] = std::max(gamma, m);
    }
  }
  return w;
}

ImportanceSampler::ImportanceSampler(std::span<const double> weights) {
  if (weights.empty()) throw ContractViolation("importance sampler: no weights");
  cdf_.resize(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ContractViolation("importance sampler: negative weight");
    acc += weights[i];
    cdf_[i] = acc;
  }
  if (!(acc > 0.0)) throw ContractViolation("importance sampler: all weights are zero");
}

std::size_t ImportanceSampler::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, cdf_.back());
  const double x = u(rng);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
  return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
}

std::mt19937_64 chunk_rng(std::uint64_t seed, std::size_t k) { return seeded(seed, kStreamTrain, k); }
std::mt19937_64 branch_rng(std::uint64_t seed, std::size_t k) { return seeded(seed, kStreamBranch, k); }

}  // namespace cdngp
