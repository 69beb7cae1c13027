// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdngp/continual.hpp"

namespace cdngp {

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kBlobMagic[4] = {'C', 'D', 'N', 'G'};

enum class BlobType : std::uint32_t { F32 = 0, BF16 = 1 };

/// "CDNG", u32 version, u32 dtype, u32 ndims, u64 dims[ndims], then the
/// little-endian values.
std::vector<std::uint8_t> encode_blob(const ParamBlock<float>& block);
std::vector<std::uint8_t> encode_grid_blob(const OccupancyGrid& grid);
ParamBlock<float> decode_blob(std::span<const std::uint8_t> bytes, const std::string& what);

/// Byte serialization of the base tables or of one branch (parameter
/// isolation checks compare these).
std::vector<std::uint8_t> serialize_base(const ModelRepo& repo);
std::vector<std::uint8_t> serialize_branch(const Branch<float>& branch);

/// Writes the base tables (with branch 0), branch k and the current grid,
/// then rewrites the manifest. Earlier branch files are left untouched.
void save_branch(const ModelRepo& repo, std::size_t k, const std::filesystem::path& dir);

/// Writes every trained branch.
void save_checkpoint(const ModelRepo& repo, const std::filesystem::path& dir);

struct CheckpointStatus {
  TrainConfig config;
  ChunkSchedule schedule;
  std::vector<std::size_t> present;
  std::vector<std::size_t> missing;       // listed in the manifest but absent on disk
  std::vector<ChunkRange> unrenderable;   // frame ranges without a loadable branch
  std::uint64_t bytes_on_disk = 0;        // blob files only
  bool complete() const { return missing.empty() && present.size() == schedule.size(); }
};

/// Reads the manifest and checks which branch files exist.
CheckpointStatus inspect_checkpoint(const std::filesystem::path& dir);

/// Loads the trained prefix of branches. Missing files listed in the
/// manifest raise FormatError naming the unrenderable frame ranges; hash
/// or version mismatches raise FormatError.
ModelRepo load_checkpoint(const std::filesystem::path& dir);

/// What rendering chunk k needs: the base tables, the grid, branch k and,
/// for composition models, branch 0.
struct ChunkModel {
  TrainConfig config;
  ChunkSchedule schedule;
  SpatialEncoder<float> base;
  std::optional<Branch<float>> base_branch;
  Branch<float> branch;
  OccupancyGrid grid;

  FieldModel<float> model() const;
  RenderedImage render(const Camera& camera, int frame, const RenderSettings& settings) const;
};

ChunkModel load_chunk_model(const std::filesystem::path& dir, std::size_t k);

}  // namespace cdngp
