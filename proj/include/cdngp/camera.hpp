// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

namespace cdngp {

/// Pinhole camera, OpenCV convention (+z forward, +y down). Pixel (u, v)
/// is sampled through its center (u + 0.5, v + 0.5).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  /// Camera-to-world, 4x4 row-major.
  std::array<double, 16> c2w{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  int view_id = 0;

  /// Throws ConfigError for bad intrinsics or a non-orthonormal rotation.
  void validate() const;
  std::array<double, 3> center() const { return {c2w[3], c2w[7], c2w[11]}; }
  std::array<double, 3> forward() const { return {c2w[2], c2w[6], c2w[10]}; }
  bool operator==(const Camera&) const = default;
};

/// Camera at `eye` looking at `target`; `up` is the approximate world up.
Camera look_at(std::array<double, 3> eye, std::array<double, 3> target, std::array<double, 3> up, double fx,
               double fy, std::uint32_t width, std::uint32_t height, int view_id = 0);

}  // namespace cdngp
