// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdngp/continual.hpp"
#include "cdngp/encoders.hpp"

namespace cdngp {

inline constexpr double kMiB = 1024.0 * 1024.0;
inline constexpr double kMB = 1e6;
inline constexpr std::uint64_t kParamBytes = 4;
inline constexpr std::uint64_t kGridEntryBytes = 2;

/// sum_l min((N_l + 1)^dims, 2^P) * F.
std::uint64_t param_count(const EncoderConfig& config);

/// Table entries of a spatial encoder of the given layout.
std::uint64_t spatial_param_count(SpatialLayout layout, const EncoderConfig& config);

/// Entries of one fully hashed level (all grids saturated), features excluded.
std::uint64_t hashed_level_entries(SpatialLayout layout, int log2_table);

/// Fully hashed per-level ratio aux / base, 2^(P2 - P1).
double hashed_level_ratio(SpatialLayout layout, int p1, int p2);

/// Fully hashed entries of `layout` relative to the pure voxel grid.
double hashed_layout_fraction(SpatialLayout layout, int log2_table);

struct ComponentCounts {
  std::uint64_t base_3d = 0;
  std::uint64_t base_2d = 0;
  std::uint64_t aux_3d = 0;
  std::uint64_t aux_2d = 0;
  std::uint64_t temporal = 0;
  std::uint64_t mlp = 0;
  std::uint64_t occupancy = 0;  // grid cells, all stored grids

  std::uint64_t float_params() const { return base_3d + base_2d + aux_3d + aux_2d + temporal + mlp; }
  bool operator==(const ComponentCounts&) const = default;
};

struct BranchSize {
  std::size_t index = 0;
  std::uint64_t params = 0;  // branch 0 includes the base tables
  std::uint64_t bytes = 0;
};

struct SizeReport {
  ComponentCounts counts;
  std::vector<BranchSize> branches;
  std::uint64_t grid_bytes = 0;
  std::uint64_t total_bytes = 0;
  /// 2^(P2 - P1) for the model's layout.
  double hashed_ratio = 0.0;

  double total_mib() const { return static_cast<double>(total_bytes) / kMiB; }
};

struct BandwidthReport {
  double b_min = 0.0;  // MB per frame
  double b_avg = 0.0;
  std::uint64_t online_params = 0;
  int frames_per_branch = 0;
  int n_frames = 0;
  std::vector<std::uint64_t> branch_bytes;
};

/// Sizes of the trained branches. An empty repo reports zero totals.
SizeReport size_report(const ModelRepo& repo);

/// Sizes of an n_chunks repo built from the configuration alone.
SizeReport planned_size_report(const TrainConfig& config, int n_chunks);

/// Parameters streamed with one auxiliary branch: aux tables, temporal
/// encoder and both decoders.
std::uint64_t online_params(const FieldArch& arch);

/// 4 * online / T_chunk / 1e6.
double min_bandwidth(std::uint64_t online, int t_chunk);

BandwidthReport bandwidth_report(const ModelRepo& repo);

/// Least-squares y = a + b x over integer points, evaluated exactly.
struct AffineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
  bool exact = false;  // every residual is zero in exact arithmetic
};

AffineFit fit_affine(const std::vector<std::pair<std::int64_t, std::int64_t>>& points);

std::string size_report_json(const SizeReport& r);
std::string bandwidth_report_json(const BandwidthReport& r);
std::string size_report_table(const SizeReport& r);
std::string bandwidth_report_table(const BandwidthReport& r);

}  // namespace cdngp
