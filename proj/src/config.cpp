// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/config.hpp"

#include <functional>
#include <set>

#include "cdngp/digest.hpp"
#include "cdngp/error.hpp"
#include <nlohmann/json.hpp>

namespace cdngp {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using Rgb = std::array<double, 3>;

struct Key {
  std::string name;
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;
};

template <typename V>
V as(const json& j, const std::string& key) {
  try {
    return j.get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.dump());
  }
}

#define CDNGP_KEY(NAME, TYPE, FIELD)                                              \
  Key {                                                                           \
    NAME, [](const TrainConfig& c) { return json(c.FIELD); },                     \
        [](TrainConfig& c, const json& j) { c.FIELD = as<TYPE>(j, NAME); }        \
  }

#define CDNGP_ENUM_KEY(NAME, FIELD, PARSE)                                        \
  Key {                                                                           \
    NAME, [](const TrainConfig& c) { return json(to_string(c.FIELD)); },          \
        [](TrainConfig& c, const json& j) { c.FIELD = PARSE(as<std::string>(j, NAME)); } \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      CDNGP_KEY("train.T_chunk", int, t_chunk),
      CDNGP_KEY("train.T_episode", int, t_episode),
      CDNGP_KEY("train.eta_init", std::uint64_t, eta_init),
      CDNGP_KEY("train.eta_aux", std::uint64_t, eta_aux),
      CDNGP_KEY("train.batch_rays", std::size_t, batch_rays),
      CDNGP_KEY("train.lr", double, lr),
      CDNGP_KEY("train.seed", std::uint64_t, seed),
      CDNGP_KEY("train.step", double, step),
      CDNGP_KEY("train.importance_floor", double, importance_floor),
      CDNGP_KEY("train.warm_start", bool, warm_start),
      CDNGP_KEY("train.snapshot_grids", bool, snapshot_grids),
      CDNGP_KEY("render.early_termination", bool, early_termination),
      CDNGP_KEY("render.background", Rgb, background),
      CDNGP_KEY("grid.resolution", int, grid_resolution),
      CDNGP_KEY("grid.decay", double, grid_decay),
      CDNGP_KEY("grid.threshold", double, grid_threshold),
      CDNGP_KEY("loss.lambda_d", double, loss.lambda_d),
      CDNGP_KEY("loss.lambda_o", double, loss.lambda_o),
      CDNGP_KEY("loss.lambda_r", double, loss.lambda_r),
      CDNGP_ENUM_KEY("model.layout", arch.layout, parse_spatial_layout),
      CDNGP_ENUM_KEY("model.fusion", arch.fusion, parse_fusion_mode),
      CDNGP_ENUM_KEY("model.temporal", arch.temporal, parse_temporal_mode),
      CDNGP_ENUM_KEY("model.composition", arch.composition, parse_composition),
      CDNGP_KEY("model.L", int, arch.spatial.levels),
      CDNGP_KEY("model.F", int, arch.spatial.features),
      CDNGP_KEY("model.P1", int, arch.spatial.log2_table),
      CDNGP_KEY("model.P2", int, arch.aux_log2),
      CDNGP_KEY("model.n_min", std::uint32_t, arch.spatial.n_min),
      CDNGP_KEY("model.n_max", std::uint32_t, arch.spatial.n_max),
      CDNGP_KEY("model.time.L", int, arch.temporal_grid.levels),
      CDNGP_KEY("model.time.F", int, arch.temporal_grid.features),
      CDNGP_KEY("model.time.P", int, arch.temporal_grid.log2_table),
      CDNGP_KEY("model.time.n_min", std::uint32_t, arch.temporal_grid.n_min),
      CDNGP_KEY("model.time.n_max", std::uint32_t, arch.temporal_grid.n_max),
      CDNGP_KEY("model.hidden_sigma", std::vector<std::size_t>, arch.hidden_sigma),
      CDNGP_KEY("model.latent", std::size_t, arch.latent),
      CDNGP_KEY("model.hidden_color", std::vector<std::size_t>, arch.hidden_color),
      CDNGP_KEY("model.table_init", double, arch.table_init),
  };
  return k;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

std::string config_to_json(const TrainConfig& config) {
  ordered_json j;
  for (const auto& k : keys()) j[k.name] = k.get(config);
  return j.dump(2);
}

EncoderConfig layout_defaults(SpatialLayout layout, int log2_table) {
  if (layout == SpatialLayout::Plane) return {3, 6, 4, log2_table, 64, 2048};
  return {3, 12, 2, log2_table, 16, 2048};
}

TrainConfig config_from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  std::set<std::string> known;
  for (const auto& k : keys()) known.insert(k.name);
  for (const auto& [name, value] : j.items()) {
    if (known.count(name) == 0) throw ConfigError("unknown config key '" + name + "'");
  }
  TrainConfig c = base;
  const auto given = [&](const char* name) { return j.contains(name); };
  if (given("model.layout")) {
    c.arch.layout = parse_spatial_layout(as<std::string>(j["model.layout"], "model.layout"));
    const EncoderConfig d = layout_defaults(c.arch.layout, c.arch.spatial.log2_table);
    c.arch.spatial.levels = d.levels;
    c.arch.spatial.features = d.features;
    c.arch.spatial.n_min = d.n_min;
    c.arch.spatial.n_max = d.n_max;
  }
  for (const auto& k : keys()) {
    if (j.contains(k.name)) k.set(c, j[k.name]);
  }
  if (given("train.T_chunk") && !given("model.time.n_max")) {
    c.arch.temporal_grid.n_max = static_cast<std::uint32_t>(std::max(2, c.t_chunk));
  }
  c.validate();
  return c;
}

TrainConfig full_config() { return TrainConfig{}; }

TrainConfig toy_config() {
  TrainConfig c;
  c.arch.spatial = {3, 8, 2, 12, 16, 512};
  c.arch.aux_log2 = 8;
  c.arch.hidden_sigma = {32};
  c.arch.latent = 15;
  c.arch.hidden_color = {32};
  c.arch.temporal_grid.n_max = 10;
  c.eta_init = 4000;
  c.eta_aux = 1500;
  c.batch_rays = 256;
  c.lr = 1e-2;
  c.step = 2.0 * 1.7320508075688772 / 64.0;
  c.grid_resolution = 32;
  return c;
}

std::string config_hash(const TrainConfig& config) {
  const std::string s = config_to_json(config);
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

}  // namespace cdngp
