// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "../common/tiny_model.hpp"
#include "cdngp/continual.hpp"
#include "cdngp/scene.hpp"

namespace cdngp::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("cdngp_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

/// 3 views x 6 frames at 16x16 of the default scene, generated once per
/// process and removed from disk at exit.
inline const SceneDataset& tiny_dataset() {
  struct Holder {
    std::filesystem::path dir = scratch_dir("tiny_dataset");
    SceneDataset ds = [this] {
      DatasetOptions o;
      o.n_views = 3;
      o.n_frames = 6;
      o.width = 16;
      o.height = 16;
      return generate_dataset(SynthSceneSpec::default_scene(), o, dir);
    }();
    ~Holder() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  };
  static const Holder h;
  return h.ds;
}

/// Float training config with a tiny architecture: 3 chunks of 2 frames.
inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.arch = tiny_arch();
  c.arch.table_init = 1e-2;
  c.arch.spatial.log2_table = 8;
  c.t_chunk = 2;
  c.t_episode = 2;
  c.eta_init = 60;
  c.eta_aux = 30;
  c.batch_rays = 64;
  c.lr = 1e-2;
  c.step = 2.0 * 1.7320508075688772 / 48.0;
  c.grid_resolution = 8;
  c.seed = 5;
  return c;
}

}  // namespace cdngp::testing
