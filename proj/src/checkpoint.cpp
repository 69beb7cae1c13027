// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/checkpoint.hpp"

#include <omp.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <spdlog/fmt/fmt.h>

#include "cdngp/config.hpp"
#include "cdngp/digest.hpp"
#include "cdngp/error.hpp"
#include <nlohmann/json.hpp>

namespace cdngp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "blob encoding assumes a little-endian host");

namespace {

template <typename V>
void put(std::vector<std::uint8_t>& out, V v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(V));
}

template <typename V>
V get(std::span<const std::uint8_t> in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(V) > in.size()) throw FormatError("truncated blob '" + what + "'");
  V v;
  std::memcpy(&v, in.data() + pos, sizeof(V));
  pos += sizeof(V);
  return v;
}

std::vector<std::uint8_t> header(BlobType type, const std::vector<std::size_t>& shape) {
  std::vector<std::uint8_t> out(kBlobMagic, kBlobMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(type));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put<std::uint64_t>(out, d);
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("missing checkpoint file '" + p.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, std::span<const std::uint8_t> bytes) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

std::string hex_of(std::span<const std::uint8_t> bytes) {
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

std::string branch_dir(std::size_t k) { return fmt::format("branch_{:04d}", k); }
std::string snapshot_file(std::size_t k) { return fmt::format("grid/snapshot_{:04d}.cdng", k); }

// Files are described in the manifest as {"path", "sha256"} entries.
ordered_json write_blobs(const fs::path& dir, const std::string& sub,
                         const std::vector<const ParamBlock<float>*>& blocks) {
  ordered_json files = ordered_json::array();
  for (const auto* b : blocks) {
    const auto bytes = encode_blob(*b);
    const std::string rel = sub + "/" + b->name + ".cdng";
    write_file(dir / rel, bytes);
    files.push_back({{"block", b->name}, {"path", rel}, {"sha256", hex_of(bytes)}});
  }
  return files;
}

ordered_json write_grid(const fs::path& dir, const std::string& rel, const OccupancyGrid& g) {
  const auto bytes = encode_grid_blob(g);
  write_file(dir / rel, bytes);
  return {{"path", rel}, {"sha256", hex_of(bytes)}, {"resolution", g.resolution()}};
}

json read_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  std::ifstream in(p);
  if (!in) throw FormatError("missing checkpoint manifest '" + p.string() + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("corrupt checkpoint manifest '" + p.string() + "': " + e.what());
  }
  if (m.value("format", "") != "cdngp-checkpoint") throw FormatError("'" + p.string() + "' is not a checkpoint");
  if (m.value("version", -1) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + m.value("version", json()).dump() + " in '" + p.string() +
                      "'");
  }
  return m;
}

std::vector<std::uint8_t> read_checked(const fs::path& dir, const json& entry) {
  const std::string rel = entry.at("path").get<std::string>();
  auto bytes = read_file(dir / rel);
  if (hex_of(bytes) != entry.at("sha256").get<std::string>()) {
    throw FormatError("hash mismatch for checkpoint file '" + (dir / rel).string() + "'");
  }
  return bytes;
}

void fill_blocks(const fs::path& dir, const json& files, const std::vector<ParamBlock<float>*>& blocks) {
  if (files.size() != blocks.size()) throw FormatError("checkpoint block count does not match the configuration");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const json& e = files[i];
    if (e.at("block").get<std::string>() != blocks[i]->name) {
      throw FormatError("checkpoint block '" + e.at("block").get<std::string>() + "' where '" + blocks[i]->name +
                        "' was expected");
    }
    ParamBlock<float> loaded = decode_blob(read_checked(dir, e), e.at("path").get<std::string>());
    if (loaded.shape != blocks[i]->shape) throw FormatError("shape mismatch for block '" + blocks[i]->name + "'");
    blocks[i]->values = std::move(loaded.values);
  }
}

OccupancyGrid load_grid(const fs::path& dir, const json& entry, const TrainConfig& cfg) {
  const ParamBlock<float> g = decode_blob(read_checked(dir, entry), entry.at("path").get<std::string>());
  OccupancyGrid grid(entry.at("resolution").get<int>(), cfg.grid_decay, cfg.grid_threshold);
  grid.set_cache(g.values);
  return grid;
}

ChunkSchedule schedule_of(const json& m, const TrainConfig& cfg) {
  return plan_chunks(m.at("n_frames").get<int>(), cfg.t_chunk, cfg.t_episode, cfg.eta_init, cfg.eta_aux);
}

TrainConfig config_of(const json& m) { return config_from_json(m.at("config").dump()); }

bool branch_files_present(const fs::path& dir, const json& entry) {
  for (const auto& f : entry.at("files")) {
    if (!fs::exists(dir / f.at("path").get<std::string>())) return false;
  }
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_blob(const ParamBlock<float>& block) {
  auto out = header(BlobType::F32, block.shape);
  const auto* p = reinterpret_cast<const std::uint8_t*>(block.values.data());
  out.insert(out.end(), p, p + block.values.size() * sizeof(float));
  return out;
}

std::vector<std::uint8_t> encode_grid_blob(const OccupancyGrid& grid) {
  const std::size_t r = static_cast<std::size_t>(grid.resolution());
  auto out = header(BlobType::BF16, {r, r, r});
  for (float v : grid.cache()) put<std::uint16_t>(out, to_bf16(v));
  return out;
}

ParamBlock<float> decode_blob(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kBlobMagic, 4) != 0) {
    throw FormatError("bad magic in blob '" + what + "'");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos, what);
  if (version != kCheckpointVersion) throw FormatError("unsupported blob version " + std::to_string(version) + " in '" + what + "'");
  const auto type = get<std::uint32_t>(bytes, pos, what);
  const auto ndims = get<std::uint32_t>(bytes, pos, what);
  if (ndims > 8) throw FormatError("implausible rank in blob '" + what + "'");
  ParamBlock<float> b;
  b.name = what;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    b.shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(bytes, pos, what)));
    n *= b.shape.back();
  }
  const std::size_t width = type == static_cast<std::uint32_t>(BlobType::F32) ? 4 : type == 1 ? 2 : 0;
  if (width == 0) throw FormatError("unknown dtype in blob '" + what + "'");
  if (bytes.size() - pos != n * width) throw FormatError("blob '" + what + "' size does not match its shape");
  b.values.resize(n);
  if (width == 4) {
    std::memcpy(b.values.data(), bytes.data() + pos, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) b.values[i] = from_bf16(get<std::uint16_t>(bytes, pos, what));
  }
  return b;
}

std::vector<std::uint8_t> serialize_base(const ModelRepo& repo) {
  std::vector<std::uint8_t> out;
  for (const auto* b : repo.base.blocks()) {
    const auto e = encode_blob(*b);
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

std::vector<std::uint8_t> serialize_branch(const Branch<float>& branch) {
  std::vector<std::uint8_t> out;
  for (const auto* b : branch.blocks()) {
    const auto e = encode_blob(*b);
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

void save_branch(const ModelRepo& repo, std::size_t k, const fs::path& dir) {
  if (k >= repo.branches.size()) throw ContractViolation("save_branch: branch " + std::to_string(k) + " not trained");
  fs::create_directories(dir);
  ordered_json m;
  if (fs::exists(dir / "manifest.json")) {
    const json old = read_manifest(dir);
    if (old.at("config_hash").get<std::string>() != config_hash(repo.config)) {
      throw FormatError("checkpoint '" + dir.string() + "' was written with a different configuration");
    }
    m = ordered_json::parse(old.dump());
  } else {
    m["format"] = "cdngp-checkpoint";
    m["version"] = kCheckpointVersion;
    m["config"] = ordered_json::parse(config_to_json(repo.config));
    m["config_hash"] = config_hash(repo.config);
    m["n_frames"] = repo.schedule.n_frames;
    m["n_chunks"] = repo.schedule.size();
    m["branches"] = ordered_json::array();
  }
  m["threads"] = omp_get_max_threads();
  m["seed"] = repo.config.seed;
  m["importance_sampling"] = "per-chunk median, channel max, floor train.importance_floor";
  if (k == 0) {
    std::vector<const ParamBlock<float>*> base;
    for (const auto* b : repo.base.blocks()) base.push_back(b);
    m["base"] = write_blobs(dir, "base", base);
  }
  auto& branches = m["branches"];
  while (branches.size() <= k) branches.push_back(nullptr);
  branches[k] = {{"index", k},
                 {"frames", {repo.schedule.chunks[k].begin, repo.schedule.chunks[k].end}},
                 {"files", write_blobs(dir, branch_dir(k), repo.branches[k].blocks())}};
  m["trained"] = repo.branches.size();
  m["grid"] = write_grid(dir, "grid/current.cdng", repo.grid);
  if (k < repo.grid_snapshots.size()) {
    auto& snaps = m["grid_snapshots"];
    if (snaps.is_null()) snaps = ordered_json::array();
    while (snaps.size() <= k) snaps.push_back(nullptr);
    snaps[k] = write_grid(dir, snapshot_file(k), repo.grid_snapshots[k]);
  }
  const std::string text = m.dump(2);
  write_file(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_checkpoint(const ModelRepo& repo, const fs::path& dir) {
  for (std::size_t k = 0; k < repo.branches.size(); ++k) save_branch(repo, k, dir);
}

CheckpointStatus inspect_checkpoint(const fs::path& dir) {
  const json m = read_manifest(dir);
  CheckpointStatus s;
  s.config = config_of(m);
  s.schedule = schedule_of(m, s.config);
  const auto& branches = m.at("branches");
  for (std::size_t k = 0; k < s.schedule.size(); ++k) {
    const bool listed = k < branches.size() && !branches[k].is_null();
    if (listed && branch_files_present(dir, branches[k]) && m.contains("base")) {
      s.present.push_back(k);
    } else {
      if (listed) s.missing.push_back(k);
      const ChunkRange& r = s.schedule.chunks[k];
      if (!s.unrenderable.empty() && s.unrenderable.back().end == r.begin) {
        s.unrenderable.back().end = r.end;
      } else {
        s.unrenderable.push_back(r);
      }
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cdng") s.bytes_on_disk += e.file_size();
  }
  return s;
}

namespace {

std::string describe(const std::vector<ChunkRange>& ranges) {
  std::string s;
  for (const auto& r : ranges) s += fmt::format("{}[{}, {})", s.empty() ? "" : ", ", r.begin, r.end);
  return s;
}

}  // namespace

ModelRepo load_checkpoint(const fs::path& dir) {
  const json m = read_manifest(dir);
  const CheckpointStatus status = inspect_checkpoint(dir);
  if (!status.missing.empty()) {
    std::string ids;
    for (std::size_t k : status.missing) ids += (ids.empty() ? "" : ", ") + std::to_string(k);
    throw FormatError("checkpoint '" + dir.string() + "' is missing branch files for chunk(s) " + ids +
                      "; frames " + describe(status.unrenderable) + " are unrenderable");
  }
  ModelRepo repo = ModelRepo::create(status.config, status.schedule.n_frames);
  const std::size_t trained = m.value("trained", std::size_t{0});
  if (trained > 0) fill_blocks(dir, m.at("base"), repo.base.blocks());
  for (std::size_t k = 0; k < trained; ++k) {
    Branch<float> b = make_branch<float>(repo.config.arch, k);
    fill_blocks(dir, m.at("branches")[k].at("files"), b.blocks());
    repo.branches.push_back(std::move(b));
  }
  if (m.contains("grid")) repo.grid = load_grid(dir, m.at("grid"), repo.config);
  if (m.contains("grid_snapshots")) {
    for (const auto& e : m.at("grid_snapshots")) {
      if (e.is_null()) throw FormatError("checkpoint grid snapshots are not contiguous");
      repo.grid_snapshots.push_back(load_grid(dir, e, repo.config));
    }
  }
  return repo;
}

FieldModel<float> ChunkModel::model() const {
  return FieldModel<float>(config.arch, base, branch, base_branch ? &*base_branch : &branch);
}

RenderedImage ChunkModel::render(const Camera& camera, int frame, const RenderSettings& settings) const {
  const std::size_t k = schedule.chunk_of_frame(frame);
  if (k != branch.index) {
    throw OutOfRangeError("frame " + std::to_string(frame) + " is not in chunk " + std::to_string(branch.index));
  }
  return render_image<float>(model(), camera, schedule.local_time(frame), grid, settings);
}

ChunkModel load_chunk_model(const fs::path& dir, std::size_t k) {
  const json m = read_manifest(dir);
  ChunkModel c;
  c.config = config_of(m);
  c.schedule = schedule_of(m, c.config);
  if (k >= c.schedule.size()) throw OutOfRangeError("chunk " + std::to_string(k) + " outside the schedule");
  const auto& branches = m.at("branches");
  auto load = [&](std::size_t j) {
    if (j >= branches.size() || branches[j].is_null() || !branch_files_present(dir, branches[j])) {
      const ChunkRange& r = c.schedule.chunks[j];
      throw FormatError(fmt::format("branch {} is absent from '{}'; frames [{}, {}) are unrenderable", j, dir.string(),
                                    r.begin, r.end));
    }
    Branch<float> b = make_branch<float>(c.config.arch, j);
    fill_blocks(dir, branches[j].at("files"), b.blocks());
    return b;
  };
  c.base = SpatialEncoder<float>("base", c.config.arch.layout, c.config.arch.spatial);
  if (!m.contains("base")) throw FormatError("checkpoint '" + dir.string() + "' has no base tables");
  fill_blocks(dir, m.at("base"), c.base.blocks());
  c.branch = load(k);
  if (c.config.arch.composition != Composition::Fused && k > 0) c.base_branch = load(0);
  const bool snap = m.contains("grid_snapshots") && k < m.at("grid_snapshots").size() && !m.at("grid_snapshots")[k].is_null();
  c.grid = load_grid(dir, snap ? m.at("grid_snapshots")[k] : m.at("grid"), c.config);
  return c;
}

}  // namespace cdngp
