// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cdngp/numerics.hpp"
#include "cdngp/parallel.hpp"

namespace cdngp {

inline constexpr std::array<std::uint32_t, 4> kHashPrimes = {1u, 2654435761u, 805459861u, 3674653429u};

/// Layout of one multiresolution hash grid.
struct EncoderConfig {
  int dims = 3;
  int levels = 12;
  int features = 2;
  int log2_table = 14;
  std::uint32_t n_min = 16;
  std::uint32_t n_max = 2048;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// N_l = floor(n_min * b^l) with b = (n_max / n_min)^(1 / (L - 1)).
std::vector<std::uint32_t> level_resolutions(const EncoderConfig& config);

/// min((N + 1)^dims, 2^log2_table).
std::uint64_t level_entry_count(std::uint32_t resolution, int dims, int log2_table);

/// Row-major vertex index when the level fits in the table, spatial hash otherwise.
std::uint64_t hash_index(std::span<const std::uint32_t> coords, std::uint32_t resolution, int log2_table);

struct EncodeStats {
  std::uint64_t clamped = 0;
};

/// Multiresolution grid with multilinear interpolation over the 2^dims
/// vertices of the enclosing cell. Inputs are normalized to [0, 1]^dims.
template <typename T>
class HashEncoder {
 public:
  HashEncoder() = default;
  HashEncoder(std::string name, EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  std::size_t output_width() const { return static_cast<std::size_t>(config_.levels * config_.features); }
  std::span<const std::uint32_t> resolutions() const { return resolutions_; }
  /// Row offset of each level; the last element is the total row count.
  std::span<const std::size_t> level_offsets() const { return offsets_; }

  ParamBlock<T>& tables() { return tables_; }
  const ParamBlock<T>& tables() const { return tables_; }

  void init_uniform(std::mt19937_64& rng, double scale = 1e-4);

  /// Single-point reference. Returns true when the point had to be clamped.
  bool encode(std::span<const T> point, std::span<T> out) const;
  void backward(std::span<const T> point, std::span<const T> grad_out, std::span<T> grad_tables) const;

  /// points: dims x n, out: output_width x n.
  void encode_batch(const Mat<T>& points, Mat<T>& out, Exec exec, EncodeStats* stats = nullptr) const;
  /// Scatter-adds into grad_tables. Parallel runs use per-thread buffers
  /// merged in thread order, so results are reproducible per thread count.
  void backward_batch(const Mat<T>& points, const Mat<T>& grad_out, std::span<T> grad_tables, Exec exec) const;

 private:
  template <int D>
  void encode_kernel(const Mat<T>& points, Mat<T>& out, Exec exec, EncodeStats* stats) const;
  template <int D>
  void backward_kernel(const Mat<T>& points, const Mat<T>& grad_out, std::span<T> grad, Exec exec) const;

  EncoderConfig config_;
  std::vector<std::uint32_t> resolutions_;
  std::vector<std::size_t> offsets_;
  std::vector<bool> hashed_;
  ParamBlock<T> tables_;
};

enum class SpatialLayout { Voxel, Plane, Merf };

/// 3-D spatial feature: voxel grid, three axis-aligned planes, or the
/// per-level sum of both. `config.log2_table` is the pure-voxel table size;
/// planes use 2^(P-2), and the hybrid uses 2^(P-3) voxel plus 2^(P-4) planes.
template <typename T>
class SpatialEncoder {
 public:
  SpatialEncoder() = default;
  SpatialEncoder(std::string name, SpatialLayout layout, EncoderConfig config);

  SpatialLayout layout() const { return layout_; }
  const EncoderConfig& config() const { return config_; }
  std::size_t output_width() const { return static_cast<std::size_t>(config_.levels * config_.features); }

  std::vector<HashEncoder<T>>& grids() { return grids_; }
  const std::vector<HashEncoder<T>>& grids() const { return grids_; }
  std::vector<ParamBlock<T>*> blocks();
  std::vector<const ParamBlock<T>*> blocks() const;

  void init_uniform(std::mt19937_64& rng, double scale = 1e-4);

  std::vector<T> encode(std::span<const T> point3) const;
  void encode_batch(const Mat<T>& points, Mat<T>& out, Exec exec, EncodeStats* stats = nullptr) const;
  void backward_batch(const Mat<T>& points, const Mat<T>& grad_out, const GradSink<T>& sink, Exec exec) const;

 private:
  Mat<T> project(const Mat<T>& points, std::size_t grid) const;

  SpatialLayout layout_ = SpatialLayout::Voxel;
  EncoderConfig config_;
  std::vector<HashEncoder<T>> grids_;
  std::vector<std::array<int, 3>> axes_;
};

/// Pure per-level sum of three bilinear plane features.
template <typename T>
std::vector<T> encode_plane(const HashEncoder<T>& xy, const HashEncoder<T>& yz, const HashEncoder<T>& zx,
                            std::span<const T> point3);

/// Per-level voxel feature plus the three plane features.
template <typename T>
std::vector<T> encode_merf(const HashEncoder<T>& voxel, const HashEncoder<T>& xy, const HashEncoder<T>& yz,
                           const HashEncoder<T>& zx, std::span<const T> point3);

/// Time-only hash encoding, its sinusoidal / sinusoid+linear stand-ins, or
/// the joint (x, y, z, t) grid of the 3D+4D baseline.
enum class TemporalMode { Hash, Freq, FreqMlp, Hash4D };

inline constexpr int kTimeFrequencies = 8;
inline constexpr std::size_t kTimeMlpWidth = 64;

template <typename T>
class TemporalEncoder {
 public:
  struct Workspace {
    Mat<T> freq;
    typename Mlp<T>::Workspace mlp;
  };

  TemporalEncoder() = default;
  /// `config` is the 1-D grid for Hash, the 4-D grid for Hash4D, unused otherwise.
  TemporalEncoder(std::string name, TemporalMode mode, EncoderConfig config);

  TemporalMode mode() const { return mode_; }
  /// Hash4D features vary per sample; the other modes are per ray.
  bool per_sample() const { return mode_ == TemporalMode::Hash4D; }
  std::size_t output_width() const;
  std::size_t input_dims() const { return per_sample() ? 4 : 1; }

  HashEncoder<T>& grid() { return grid_; }
  const HashEncoder<T>& grid() const { return grid_; }
  Mlp<T>& mlp() { return mlp_; }
  const Mlp<T>& mlp() const { return mlp_; }
  std::vector<ParamBlock<T>*> blocks();
  std::vector<const ParamBlock<T>*> blocks() const;

  void init(std::mt19937_64& rng, double table_scale = 1e-4);

  /// coords: 1 x n normalized times, or 4 x n (x, y, z, t) for Hash4D.
  void encode_batch(const Mat<T>& coords, Mat<T>& out, Workspace& ws, Exec exec) const;
  void backward_batch(const Mat<T>& coords, const Mat<T>& grad_out, Workspace& ws, const GradSink<T>& sink,
                      Exec exec) const;

 private:
  TemporalMode mode_ = TemporalMode::Hash;
  HashEncoder<T> grid_;
  Mlp<T> mlp_;
};

std::string to_string(SpatialLayout layout);
std::string to_string(TemporalMode mode);
SpatialLayout parse_spatial_layout(const std::string& s);
TemporalMode parse_temporal_mode(const std::string& s);

extern template class HashEncoder<float>;
extern template class HashEncoder<double>;
extern template class SpatialEncoder<float>;
extern template class SpatialEncoder<double>;
extern template class TemporalEncoder<float>;
extern template class TemporalEncoder<double>;

}  // namespace cdngp
