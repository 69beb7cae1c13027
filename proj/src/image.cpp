// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "cdngp/error.hpp"

namespace cdngp {

namespace {

std::uint8_t to_u8(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void check_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
    throw ContractViolation(std::string(what) + ": image shapes differ");
  }
}

}  // namespace

Image quantize8(const Image& img) {
  Image out = img;
  for (float& v : out.rgb) v = static_cast<float>(to_u8(v)) / 255.0f;
  return out;
}

namespace {

// libpng reports errors by longjmp; these helpers keep the setjmp frame free
// of locals with non-trivial destructors.
bool write_rows(png_structp png, png_infop info, std::FILE* fp, const Image& img, std::uint8_t* row) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = std::size_t{img.width} * 3;
  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::size_t i = 0; i < stride; ++i) row[i] = to_u8(img.rgb[std::size_t{y} * stride + i]);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  return true;
}

bool read_header(png_structp png, png_infop info, std::FILE* fp, std::uint32_t* w, std::uint32_t* h,
                 std::size_t* rowbytes) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  *w = png_get_image_width(png, info);
  *h = png_get_image_height(png, info);
  *rowbytes = png_get_rowbytes(png, info);
  return true;
}

bool read_rows(png_structp png, png_infop info, float* dst, std::uint32_t height, std::size_t stride,
               std::uint8_t* row) {
  if (setjmp(png_jmpbuf(png))) return false;
  for (std::uint32_t y = 0; y < height; ++y) {
    png_read_row(png, row, nullptr);
    for (std::size_t i = 0; i < stride; ++i) dst[std::size_t{y} * stride + i] = row[i] / 255.0f;
  }
  png_read_end(png, info);
  return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng initialization failed");
  }
  std::vector<std::uint8_t> row(std::size_t{img.width} * 3);
  const bool ok = write_rows(png, info, fp.get(), img, row.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw FormatError("failed writing '" + path.string() + "'");
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("missing frame file '" + path.string() + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: '" + path.string() + "'");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng initialization failed");
  }
  std::uint32_t w = 0, h = 0;
  std::size_t rowbytes = 0;
  bool ok = read_header(png, info, fp.get(), &w, &h, &rowbytes);
  Image img;
  if (ok && rowbytes != std::size_t{w} * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG layout in '" + path.string() + "'");
  }
  if (ok) {
    img = Image(w, h);
    std::vector<std::uint8_t> row(rowbytes);
    ok = read_rows(png, info, img.rgb.data(), h, rowbytes, row.data());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw FormatError("truncated or corrupt PNG '" + path.string() + "'");
  return img;
}

double mse(const Image& a, const Image& b) {
  check_same_shape(a, b, "mse");
  if (a.rgb.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.rgb.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double dssim(const Image& a, const Image& b) {
  check_same_shape(a, b, "dssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.width < kWin || a.height < kWin) throw ContractViolation("dssim: image smaller than the 11x11 window");
  double g[kWin];
  double gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t W = a.width, H = a.height;
  const std::size_t ow = W - kWin + 1, oh = H - kWin + 1;

  // Separable filtering of x, y, x^2, y^2, xy over the valid region.
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp(ow * H), out(ow * oh);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < kWin; ++k) s += g[k] * src[y * W + x + k];
        tmp[y * ow + x] = s;
      }
    }
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < kWin; ++k) s += g[k] * tmp[(y + k) * ow + x];
        out[y * ow + x] = s;
      }
    }
    return out;
  };

  double ssim_total = 0.0;
  std::vector<double> pa(W * H), pb(W * H), paa(W * H), pbb(W * H), pab(W * H);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < W * H; ++i) {
      pa[i] = a.rgb[3 * i + c];
      pb[i] = b.rgb[3 * i + c];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto ma = filter(pa), mb = filter(pb), saa = filter(paa), sbb = filter(pbb), sab = filter(pab);
    double sum = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double va = saa[i] - ma[i] * ma[i];
      const double vb = sbb[i] - mb[i] * mb[i];
      const double cov = sab[i] - ma[i] * mb[i];
      sum += ((2 * ma[i] * mb[i] + c1) * (2 * cov + c2)) / ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
    }
    ssim_total += sum / static_cast<double>(ma.size());
  }
  return (1.0 - ssim_total / 3.0) / 2.0;
}

}  // namespace cdngp
