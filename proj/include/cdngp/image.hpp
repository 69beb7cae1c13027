// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cdngp {

/// Interleaved RGB, row-major, values in [0, 1].
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(std::uint32_t w, std::uint32_t h) : width(w), height(h), rgb(std::size_t{w} * h * 3, 0.0f) {}

  float& at(std::uint32_t x, std::uint32_t y, int c) { return rgb[(std::size_t{y} * width + x) * 3 + c]; }
  float at(std::uint32_t x, std::uint32_t y, int c) const { return rgb[(std::size_t{y} * width + x) * 3 + c]; }
  std::size_t pixel_count() const { return std::size_t{width} * height; }
  bool operator==(const Image&) const = default;
};

/// Rounds to the nearest 8-bit level.
Image quantize8(const Image& img);

void write_png(const std::filesystem::path& path, const Image& img);
/// Throws FormatError naming the file when it is missing or truncated.
Image read_png(const std::filesystem::path& path);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE), capped at 99 dB.
double psnr(const Image& a, const Image& b);
double mse(const Image& a, const Image& b);

/// (1 - SSIM) / 2; 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// valid-region mean, averaged over the RGB channels.
double dssim(const Image& a, const Image& b);

}  // namespace cdngp
