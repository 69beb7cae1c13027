// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/accounting.hpp"

#include <cmath>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "cdngp/error.hpp"
#include <nlohmann/json.hpp>

namespace cdngp {

std::uint64_t param_count(const EncoderConfig& config) {
  config.validate();
  std::uint64_t n = 0;
  for (std::uint32_t res : level_resolutions(config)) {
    n += level_entry_count(res, config.dims, config.log2_table) * static_cast<std::uint64_t>(config.features);
  }
  return n;
}

std::uint64_t spatial_param_count(SpatialLayout layout, const EncoderConfig& config) {
  const SpatialEncoder<float> probe_shape("count", layout, config);
  std::uint64_t n = 0;
  for (const auto& g : probe_shape.grids()) n += param_count(g.config());
  return n;
}

std::uint64_t hashed_level_entries(SpatialLayout layout, int p) {
  switch (layout) {
    case SpatialLayout::Voxel: return std::uint64_t{1} << p;
    case SpatialLayout::Plane: return 3 * (std::uint64_t{1} << (p - 2));
    case SpatialLayout::Merf: return (std::uint64_t{1} << (p - 3)) + 3 * (std::uint64_t{1} << (p - 4));
  }
  return 0;
}

double hashed_level_ratio(SpatialLayout layout, int p1, int p2) {
  return static_cast<double>(hashed_level_entries(layout, p2)) / static_cast<double>(hashed_level_entries(layout, p1));
}

double hashed_layout_fraction(SpatialLayout layout, int p) {
  return static_cast<double>(hashed_level_entries(layout, p)) /
         static_cast<double>(hashed_level_entries(SpatialLayout::Voxel, p));
}

namespace {

void add_spatial(const SpatialEncoder<float>& enc, std::uint64_t& n3, std::uint64_t& n2) {
  for (const auto& g : enc.grids()) (g.config().dims == 3 ? n3 : n2) += g.tables().size();
}

std::uint64_t decoder_params(const Branch<float>& b) {
  return b.sigma_net.params().size() + b.color_net.params().size();
}

std::uint64_t temporal_params(const Branch<float>& b) {
  std::uint64_t n = 0;
  if (b.temporal) {
    for (const auto* blk : b.temporal->blocks()) n += blk->size();
  }
  return n;
}

SizeReport report_from(const FieldArch& arch, const SpatialEncoder<float>& base, const std::vector<const Branch<float>*>& branches,
                       std::uint64_t grid_cells) {
  SizeReport r;
  r.hashed_ratio = hashed_level_ratio(arch.layout, arch.spatial.log2_table, arch.aux_log2);
  if (branches.empty()) return r;
  ComponentCounts& c = r.counts;
  add_spatial(base, c.base_3d, c.base_2d);
  const std::uint64_t base_params = c.base_3d + c.base_2d;
  for (const Branch<float>* b : branches) {
    if (b->aux) add_spatial(*b->aux, c.aux_3d, c.aux_2d);
    c.temporal += temporal_params(*b);
    c.mlp += decoder_params(*b);
    const std::uint64_t p = b->param_count() + (b->index == 0 ? base_params : 0);
    r.branches.push_back({b->index, p, p * kParamBytes});
  }
  c.occupancy = grid_cells;
  r.grid_bytes = grid_cells * kGridEntryBytes;
  r.total_bytes = c.float_params() * kParamBytes + r.grid_bytes;
  return r;
}

}  // namespace

SizeReport size_report(const ModelRepo& repo) {
  std::vector<const Branch<float>*> bs;
  for (const auto& b : repo.branches) bs.push_back(&b);
  std::uint64_t cells = repo.grid.cell_count();
  for (const auto& g : repo.grid_snapshots) cells += g.cell_count();
  return report_from(repo.config.arch, repo.base, bs, cells);
}

SizeReport planned_size_report(const TrainConfig& config, int n_chunks) {
  if (n_chunks < 0) throw ConfigError("planned_size_report: negative chunk count");
  config.validate();
  const SpatialEncoder<float> base("base", config.arch.layout, config.arch.spatial);
  std::vector<Branch<float>> owned;
  owned.reserve(static_cast<std::size_t>(n_chunks));
  for (int k = 0; k < n_chunks; ++k) owned.push_back(make_branch<float>(config.arch, static_cast<std::size_t>(k)));
  std::vector<const Branch<float>*> bs;
  for (const auto& b : owned) bs.push_back(&b);
  const std::uint64_t cells = std::uint64_t(config.grid_resolution) * config.grid_resolution * config.grid_resolution;
  return report_from(config.arch, base, bs, cells);
}

std::uint64_t online_params(const FieldArch& arch) { return make_branch<float>(arch, 1).param_count(); }

double min_bandwidth(std::uint64_t online, int t_chunk) {
  if (t_chunk < 1) throw ConfigError("min_bandwidth: T_chunk must be positive");
  return static_cast<double>(kParamBytes * online) / t_chunk / kMB;
}

BandwidthReport bandwidth_report(const ModelRepo& repo) {
  BandwidthReport r;
  r.n_frames = repo.schedule.n_frames;
  const SizeReport s = size_report(repo);
  for (const auto& b : s.branches) r.branch_bytes.push_back(b.bytes);
  if (repo.branches.empty()) return r;
  r.b_avg = static_cast<double>(s.total_bytes) / r.n_frames / kMB;
  if (repo.branches.size() == 1) {
    // The base branch is the whole stream.
    r.frames_per_branch = repo.schedule.chunks[0].size();
    r.online_params = s.branches[0].params;
    r.b_min = static_cast<double>(s.total_bytes) / r.frames_per_branch / kMB;
  } else {
    r.frames_per_branch = repo.schedule.t_chunk;
    r.online_params = repo.branches[1].param_count();
    r.b_min = min_bandwidth(r.online_params, r.frames_per_branch);
  }
  return r;
}

AffineFit fit_affine(const std::vector<std::pair<std::int64_t, std::int64_t>>& pts) {
  if (pts.size() < 2) throw ContractViolation("fit_affine: at least two points required");
  using I = __int128;
  const I n = static_cast<I>(pts.size());
  I sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += I(x) * x;
    sxy += I(x) * y;
  }
  const I den = n * sxx - sx * sx;
  if (den == 0) throw ContractViolation("fit_affine: x values are all equal");
  const I b_num = n * sxy - sx * sy;       // slope = b_num / den
  const I a_num = sy * den - b_num * sx;   // intercept = a_num / (n den)
  const I a_den = n * den;
  long double ss_res = 0.0L, ss_tot = 0.0L;
  bool exact = true;
  const long double mean_y = static_cast<long double>(sy) / static_cast<long double>(n);
  for (const auto& [x, y] : pts) {
    const I res = I(y) * a_den - a_num - b_num * n * x;
    if (res != 0) exact = false;
    const long double rr = static_cast<long double>(res) / static_cast<long double>(a_den);
    ss_res += rr * rr;
    ss_tot += (y - mean_y) * (y - mean_y);
  }
  AffineFit f;
  f.slope = static_cast<double>(static_cast<long double>(b_num) / static_cast<long double>(den));
  f.intercept = static_cast<double>(static_cast<long double>(a_num) / static_cast<long double>(a_den));
  f.exact = exact;
  f.r2 = exact ? 1.0 : (ss_tot > 0 ? static_cast<double>(1.0L - ss_res / ss_tot) : 0.0);
  return f;
}

std::string size_report_json(const SizeReport& r) {
  nlohmann::ordered_json j;
  const auto& c = r.counts;
  j["params"] = {{"base_3d", c.base_3d}, {"base_2d", c.base_2d}, {"aux_3d", c.aux_3d}, {"aux_2d", c.aux_2d},
                 {"temporal", c.temporal}, {"mlp", c.mlp}, {"float_total", c.float_params()}};
  j["occupancy_cells"] = c.occupancy;
  j["grid_bytes"] = r.grid_bytes;
  j["total_bytes"] = r.total_bytes;
  j["total_mib"] = r.total_mib();
  j["hashed_level_ratio"] = r.hashed_ratio;
  auto& arr = j["branches"] = nlohmann::ordered_json::array();
  for (const auto& b : r.branches) arr.push_back({{"index", b.index}, {"params", b.params}, {"bytes", b.bytes}});
  return j.dump(2);
}

std::string bandwidth_report_json(const BandwidthReport& r) {
  nlohmann::ordered_json j;
  j["b_min_mb_per_frame"] = r.b_min;
  j["b_avg_mb_per_frame"] = r.b_avg;
  j["online_params"] = r.online_params;
  j["frames_per_branch"] = r.frames_per_branch;
  j["n_frames"] = r.n_frames;
  j["branch_bytes"] = r.branch_bytes;
  return j.dump(2);
}

std::string size_report_table(const SizeReport& r) {
  const auto& c = r.counts;
  std::ostringstream os;
  os << fmt::format("{:<18}{:>14}\n", "component", "params");
  os << fmt::format("{:<18}{:>14}\n", "base 3-D", c.base_3d);
  os << fmt::format("{:<18}{:>14}\n", "base 2-D", c.base_2d);
  os << fmt::format("{:<18}{:>14}\n", "aux 3-D", c.aux_3d);
  os << fmt::format("{:<18}{:>14}\n", "aux 2-D", c.aux_2d);
  os << fmt::format("{:<18}{:>14}\n", "temporal", c.temporal);
  os << fmt::format("{:<18}{:>14}\n", "decoders", c.mlp);
  os << fmt::format("{:<18}{:>14}\n", "occupancy cells", c.occupancy);
  os << fmt::format("total {} bytes ({:.3f} MiB), aux/base hashed-level ratio {}\n", r.total_bytes, r.total_mib(),
                    r.hashed_ratio);
  return os.str();
}

std::string bandwidth_report_table(const BandwidthReport& r) {
  return fmt::format("B_min {:.4f} MB/frame  B_avg {:.4f} MB/frame  (online {} params, {} frames/branch, {} frames)\n",
                     r.b_min, r.b_avg, r.online_params, r.frames_per_branch, r.n_frames);
}

}  // namespace cdngp
