// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "cdngp/camera.hpp"
#include "cdngp/field.hpp"
#include "cdngp/image.hpp"
#include "cdngp/numerics.hpp"
#include "cdngp/parallel.hpp"

namespace cdngp {

/// Scene box; positions are mapped to [0, 1]^3 for the encoders.
inline constexpr double kSceneMin = -1.0;
inline constexpr double kSceneMax = 1.0;
inline constexpr double kTerminationTransmittance = 1e-4;

struct Ray {
  std::array<double, 3> o{};
  std::array<double, 3> d{0, 0, 1};
  double t_near = 0.0;
  double t_far = 1e4;
};

/// One ray per pixel index (y * width + x) through the pixel center.
std::vector<Ray> generate_rays(const Camera& camera, std::span<const std::uint32_t> pixels);

/// Clips the ray to the scene box. Returns false if it misses.
bool clip_to_scene(Ray& ray);

std::uint16_t to_bf16(float v);
float from_bf16(std::uint16_t v);
inline float round_bf16(float v) { return from_bf16(to_bf16(v)); }

/// Shared density cache over the scene box, x fastest. Cached values are
/// kept at bfloat16 precision so a stored grid reloads exactly.
class OccupancyGrid {
 public:
  static constexpr int kWarmupSteps = 256;
  static constexpr int kUpdateInterval = 16;

  OccupancyGrid() : OccupancyGrid(128) {}
  explicit OccupancyGrid(int resolution, double decay = 0.95, double threshold = 0.01);

  int resolution() const { return resolution_; }
  double decay() const { return decay_; }
  double threshold() const { return threshold_; }
  std::size_t cell_count() const { return cache_.size(); }
  std::size_t occupied_count() const;

  bool occupied(std::size_t cell) const { return bits_[cell] != 0; }
  /// `p` normalized to [0, 1]^3.
  bool occupied_at(const std::array<double, 3>& p) const;
  std::size_t cell_of(const std::array<double, 3>& p) const;

  std::span<const float> cache() const { return cache_; }
  void set_cache(std::span<const float> values);
  void fill(float value);
  /// cache <- max(cache, value) everywhere.
  void raise_to(float value);

  /// Decays every cell, then cache[cells[i]] <- max(cache, sigma[i]).
  void decay_and_max(std::span<const std::uint32_t> cells, std::span<const float> sigma);

  bool operator==(const OccupancyGrid&) const = default;

 private:
  void refresh_bits();

  int resolution_ = 0;
  double decay_ = 0.95;
  double threshold_ = 0.01;
  std::vector<float> cache_;
  std::vector<std::uint8_t> bits_;
};

/// Density of a batch of normalized positions (3 x n) at chunk-local times.
using DensityFn = std::function<void(const Mat<float>&, std::span<const float>, std::vector<float>&)>;

/// Decays every cell, then takes the max with the density sampled at a
/// jittered point of each visited cell and a random in-chunk time. All
/// cells are visited during warmup; afterwards half the cell count is drawn,
/// half uniformly and half among occupied cells.
void update_occupancy(OccupancyGrid& grid, const DensityFn& density, std::uint64_t step, std::mt19937_64& rng);

struct MarchedSample {
  std::array<double, 3> position{};  // normalized
  double t = 0.0;
  double delta = 0.0;
  double s_begin = 0.0;
  double s_end = 0.0;
};

/// Uniform stepping over the clipped ray. Interval i is
/// [t_near + i step, min(t_near + (i + 1) step, t_far)]; the sample sits at
/// its center, or at a uniform offset when `rng` is given. Samples in
/// unoccupied cells are skipped.
std::vector<MarchedSample> march_ray(const Ray& ray, const OccupancyGrid& grid, double step,
                                     std::mt19937_64* rng = nullptr);

template <typename T>
struct RenderOutput {
  std::array<T, 3> color{};
  T opacity = T(0);
  T transmittance = T(1);
  std::vector<T> weights;
  std::size_t sample_count = 0;  // samples composited before termination
};

struct CompositeOptions {
  std::array<double, 3> background{0, 0, 0};
  bool early_termination = true;
};

/// colors: 3 values per sample. The background enters as (1 - o) bg.
template <typename T>
RenderOutput<T> volume_render(std::span<const T> sigmas, std::span<const T> colors, std::span<const T> deltas,
                              const CompositeOptions& options = {});

/// Reverse pass of volume_render. grad_weights may be empty; outputs are
/// overwritten (size n and 3n).
template <typename T>
void volume_render_backward(std::span<const T> sigmas, std::span<const T> colors, std::span<const T> deltas,
                            const RenderOutput<T>& out, const std::array<T, 3>& grad_color, T grad_opacity,
                            std::span<const T> grad_weights, const CompositeOptions& options,
                            std::span<T> grad_sigmas, std::span<T> grad_colors);

/// Marches every ray and packs the samples, grouped by ray, into `batch`.
template <typename T>
void build_sample_batch(std::span<const Ray> rays, std::span<const double> times, const OccupancyGrid& grid,
                        double step, std::mt19937_64* rng, SampleBatch<T>& batch);

struct RenderSettings {
  double step = 2.0 * 1.7320508075688772 / 1024.0;
  CompositeOptions composite;
  std::size_t rays_per_pass = 4096;
  Exec exec = Exec::Parallel;
};

struct RenderedImage {
  Image image;
  std::vector<float> opacity;
};

/// Evaluates density and colour (3 x S) for every sample of a batch.
template <typename T>
using BatchFieldFn = std::function<void(const SampleBatch<T>&, std::vector<T>&, Mat<T>&)>;

/// Renders `camera` at chunk-local time `t` in [0, 1].
template <typename T>
RenderedImage render_image(const BatchFieldFn<T>& field, const Camera& camera, double t, const OccupancyGrid& grid,
                           const RenderSettings& settings);

template <typename T>
RenderedImage render_image(const FieldModel<T>& model, const Camera& camera, double t, const OccupancyGrid& grid,
                           const RenderSettings& settings);

extern template RenderOutput<float> volume_render<float>(std::span<const float>, std::span<const float>,
                                                         std::span<const float>, const CompositeOptions&);
extern template RenderOutput<double> volume_render<double>(std::span<const double>, std::span<const double>,
                                                           std::span<const double>, const CompositeOptions&);

}  // namespace cdngp
