// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdngp/camera.hpp"
#include "cdngp/image.hpp"
#include "cdngp/renderer.hpp"

namespace cdngp {

/// Gaussian density blob. Its center follows a polynomial in global time
/// t in [0, 1]: center[a](t) = sum_k path[a][k] t^k.
struct Blob {
  std::array<std::vector<double>, 3> path;
  double radius = 0.1;
  double peak = 10.0;
  std::array<double, 3> albedo{1, 1, 1};

  std::array<double, 3> center(double t) const;
  bool operator==(const Blob&) const = default;
};

struct SynthSceneSpec {
  std::vector<Blob> moving;
  std::vector<Blob> statics;
  double bound = 1.0;
  std::uint64_t seed = 0;

  /// Two moving and two static blobs inside the unit box.
  static SynthSceneSpec default_scene();
  void validate() const;
  bool operator==(const SynthSceneSpec&) const = default;
};

struct OracleSample {
  double sigma = 0.0;
  std::array<double, 3> color{};
};

/// x in world units, t global in [0, 1]. View-independent colour: the
/// density-weighted mean albedo.
OracleSample oracle_field(const SynthSceneSpec& spec, const std::array<double, 3>& x, double t);

/// Dense midpoint quadrature with `substeps` samples per clipped ray,
/// composited by volume_render<double>.
Image oracle_render(const SynthSceneSpec& spec, const Camera& camera, double t, int substeps,
                    const CompositeOptions& composite = {});

/// The oracle quadrature of one ray (clipped to the scene box).
RenderOutput<double> oracle_ray(const SynthSceneSpec& spec, const Ray& ray, double t, int substeps,
                                const CompositeOptions& composite = {});

struct ConvergedRender {
  Image image;
  int substeps = 0;
  bool converged = false;
};

/// Doubles the substep count from `substeps` until no pixel moves by
/// 1/255 or `max_substeps` is reached.
ConvergedRender oracle_render_converged(const SynthSceneSpec& spec, const Camera& camera, double t, int substeps,
                                        int max_substeps, const CompositeOptions& composite = {});

/// Analytic field as a renderer callback over normalized positions.
BatchFieldFn<double> oracle_batch_field(const SynthSceneSpec& spec, double t_global);

/// Views on an arc facing the origin, in two rows. View 0 sits at the
/// center of the upper row and is held out.
std::vector<Camera> arc_cameras(int n_views, std::uint32_t width, std::uint32_t height);

struct DatasetOptions {
  int n_views = 8;
  int n_frames = 60;
  std::uint32_t width = 64;
  std::uint32_t height = 64;
  int substeps = 512;
  int max_substeps = 4096;
  double fps = 30.0;
};

inline constexpr int kDatasetVersion = 1;

/// Multi-view frames on disk, decoded on demand.
class SceneDataset {
 public:
  static SceneDataset load(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<Camera>& cameras() const { return cameras_; }
  int n_views() const { return static_cast<int>(cameras_.size()); }
  int n_frames() const { return n_frames_; }
  int held_out() const { return held_out_; }
  double fps() const { return fps_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  std::vector<int> training_views() const;
  /// Global time of a frame, f / (N - 1).
  double frame_time(int frame) const;

  std::filesystem::path frame_path(int view, int frame) const;
  Image load_frame(int view, int frame) const;

 private:
  std::filesystem::path root_;
  std::vector<Camera> cameras_;
  int n_frames_ = 0;
  int held_out_ = 0;
  double fps_ = 30.0;
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
};

std::filesystem::path frame_relative_path(int view, int frame);

/// Renders every (view, frame) with the oracle and writes the manifest.
SceneDataset generate_dataset(const SynthSceneSpec& spec, const DatasetOptions& options,
                              const std::filesystem::path& out_dir);

std::string spec_to_json(const SynthSceneSpec& spec);
/// Rejects unknown keys, naming them.
SynthSceneSpec spec_from_json(const std::string& text);

struct MetricRow {
  int frame = 0;
  int view = 0;
  double psnr = 0.0;
  double dssim = 0.0;
};

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

}  // namespace cdngp
