// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cdngp/continual.hpp"

namespace cdngp {

/// Flat JSON object with dotted keys ("train.T_chunk", "model.P1", ...).
std::string config_to_json(const TrainConfig& config);

/// Applies a flat JSON object on top of `base`. Unknown keys raise
/// ConfigError naming the key. The temporal grid's n_max follows
/// train.T_chunk unless model.time.n_max is given, and choosing a layout
/// resets (L, F, n_min) to that layout's defaults unless they are given.
TrainConfig config_from_json(const std::string& text, const TrainConfig& base = {});

/// Every recognised key, in serialization order.
std::vector<std::string> config_keys();

/// (L, F, n_min, n_max) defaults of a spatial layout.
EncoderConfig layout_defaults(SpatialLayout layout, int log2_table);

/// Full-size model: (P1, P2) = (19, 14), 18000 / 3000 iterations.
TrainConfig full_config();

/// Small model used by tests and the acceptance suite on a 64x64 scene.
TrainConfig toy_config();

/// SHA-256 of the canonical JSON.
std::string config_hash(const TrainConfig& config);

}  // namespace cdngp
