// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cdngp/error.hpp"
#include "cdngp/image.hpp"
#include "cdngp/scene.hpp"

namespace cdngp {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdngp_scene_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Image filled(std::uint32_t w, std::uint32_t h, float v) {
  Image img(w, h);
  std::fill(img.rgb.begin(), img.rgb.end(), v);
  return img;
}

TEST(Psnr, Examples) {
  const Image a = filled(4, 4, 0.5f);
  EXPECT_EQ(psnr(a, a), 99.0);
  EXPECT_NEAR(psnr(a, filled(4, 4, 0.6f)), 20.0, 1e-5);
  EXPECT_NEAR(psnr(filled(4, 4, 0.0f), filled(4, 4, 1.0f)), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, filled(4, 5, 0.5f)), ContractViolation);
}

TEST(Psnr, DecreasesWithNoise) {
  Image base(32, 32);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.2f, 0.8f);
  for (auto& v : base.rgb) v = u(rng);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> noise(base.rgb.size());
  for (auto& v : noise) v = g(rng);
  double prev = 1e9;
  for (float amp : {0.01f, 0.02f, 0.04f, 0.08f, 0.16f}) {
    Image n = base;
    for (std::size_t i = 0; i < n.rgb.size(); ++i) n.rgb[i] = std::clamp(n.rgb[i] + amp * noise[i], 0.0f, 1.0f);
    const double p = psnr(base, n);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Dssim, IdenticalAndSymmetric) {
  Image a(16, 16), b(16, 16);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : a.rgb) v = u(rng);
  for (auto& v : b.rgb) v = u(rng);
  EXPECT_NEAR(dssim(a, a), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(dssim(a, b), dssim(b, a));
  EXPECT_THROW(dssim(filled(10, 10, 0.f), filled(10, 10, 0.f)), ContractViolation);
}

TEST(Dssim, CheckerboardAgainstNegative) {
  Image a(16, 16), b(16, 16);
  for (std::uint32_t y = 0; y < 16; ++y) {
    for (std::uint32_t x = 0; x < 16; ++x) {
      const float v = ((x / 2 + y / 2) % 2 == 0) ? 0.75f : 0.25f;
      for (int c = 0; c < 3; ++c) {
        a.at(x, y, c) = v;
        b.at(x, y, c) = 1.0f - v;
      }
    }
  }
  const double d = dssim(a, b);
  EXPECT_GT(d, 0.4);
  EXPECT_NEAR(d, 0.9928476047327337, 1e-6);
}

TEST(Dssim, SmoothPerturbation) {
  Image g(16, 16), n(16, 16);
  for (std::uint32_t y = 0; y < 16; ++y) {
    for (std::uint32_t x = 0; x < 16; ++x) {
      const double base[3] = {(x + y) / 30.0, x / 15.0, y / 15.0};
      for (int c = 0; c < 3; ++c) {
        g.at(x, y, c) = static_cast<float>(base[c]);
        n.at(x, y, c) = static_cast<float>(std::clamp(base[c] + 0.1 * std::sin(3.0 * x + 5.0 * y + c), 0.0, 1.0));
      }
    }
  }
  EXPECT_NEAR(dssim(g, n), 0.11700520822065946, 1e-6);
}

TEST(Png, RoundTripQuantized) {
  const fs::path dir = scratch("png");
  fs::create_directories(dir);
  Image img(5, 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<float>(i) / 44.0f;
  write_png(dir / "a.png", img);
  const Image back = read_png(dir / "a.png");
  EXPECT_EQ(back, quantize8(img));
  for (std::size_t i = 0; i < img.rgb.size(); ++i) EXPECT_LE(std::abs(back.rgb[i] - img.rgb[i]), 0.5f / 255.0f + 1e-6f);
  fs::remove_all(dir);
}

Blob still_blob(std::array<double, 3> c, double r, double peak, std::array<double, 3> albedo) {
  Blob b;
  for (int a = 0; a < 3; ++a) b.path[a] = {c[a]};
  b.radius = r;
  b.peak = peak;
  b.albedo = albedo;
  return b;
}

TEST(Oracle, FieldExamples) {
  SynthSceneSpec one;
  one.statics.push_back(still_blob({0.1, -0.2, 0.3}, 0.1, 7.0, {0.2, 0.4, 0.6}));
  const auto at = oracle_field(one, {0.1, -0.2, 0.3}, 0.5);
  EXPECT_NEAR(at.sigma, 7.0, 1e-12);
  EXPECT_LT(oracle_field(one, {-0.9, 0.9, -0.9}, 0.5).sigma, 1e-12);
  SynthSceneSpec two = one;
  two.statics.push_back(one.statics[0]);
  const auto dbl = oracle_field(two, {0.12, -0.18, 0.33}, 0.5);
  const auto sgl = oracle_field(one, {0.12, -0.18, 0.33}, 0.5);
  EXPECT_NEAR(dbl.sigma, 2.0 * sgl.sigma, 1e-12);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(dbl.color[c], sgl.color[c], 1e-12);
}

TEST(Oracle, EmptySceneIsBackground) {
  const SynthSceneSpec empty;
  const auto cam = arc_cameras(2, 12, 12)[0];
  const Image img = oracle_render(empty, cam, 0.3, 512, {{0.2, 0.4, 0.6}, true});
  for (std::size_t p = 0; p < img.pixel_count(); ++p) EXPECT_FLOAT_EQ(img.rgb[3 * p + 1], 0.4f);
}

TEST(Oracle, OnAxisBlobPeaksAtPrincipalPoint) {
  SynthSceneSpec s;
  // Low peak keeps the pixel values off the saturated plateau.
  s.statics.push_back(still_blob({0.0, 0.0, 0.0}, 0.2, 2.0, {1, 1, 1}));
  const Camera cam = look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, 20.0, 20.0, 21, 21);
  const Image img = oracle_render(s, cam, 0.0, 512);
  std::size_t best = 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (img.rgb[3 * p] > img.rgb[3 * best]) best = p;
  }
  EXPECT_EQ(best, 10u * 21u + 10u);
}

TEST(Oracle, RendersDifferOnlyWhereBlobsMove) {
  SynthSceneSpec s;
  s.statics.push_back(still_blob({-0.5, 0.0, 0.0}, 0.1, 30.0, {1, 0, 0}));
  Blob mover = still_blob({0.5, 0.0, 0.0}, 0.1, 30.0, {0, 1, 0});
  mover.path[1] = {-0.5, 1.0};
  s.moving.push_back(mover);
  const Camera cam = look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, 24.0, 24.0, 24, 24);
  const Image a = oracle_render(s, cam, 0.0, 512);
  const Image b = oracle_render(s, cam, 1.0, 512);
  // The static blob projects to the left half (x < 12), the mover to the right.
  bool right_changed = false;
  for (std::uint32_t y = 0; y < 24; ++y) {
    for (std::uint32_t x = 0; x < 24; ++x) {
      const bool diff = std::abs(a.at(x, y, 1) - b.at(x, y, 1)) > 1e-3f || std::abs(a.at(x, y, 0) - b.at(x, y, 0)) > 1e-3f;
      if (x < 9) {
        EXPECT_FALSE(diff) << x << "," << y;
      }
      if (x > 12 && diff) right_changed = true;
    }
  }
  EXPECT_TRUE(right_changed);
}

TEST(SceneSpec, JsonRoundTripAndUnknownKey) {
  const auto s = SynthSceneSpec::default_scene();
  EXPECT_EQ(spec_from_json(spec_to_json(s)), s);
  auto j = nlohmann::json::parse(spec_to_json(s));
  j["colour"] = 1;
  try {
    spec_from_json(j.dump());
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
}

TEST(SceneSpec, ValidationRejectsBadBlobs) {
  SynthSceneSpec s;
  s.statics.push_back(still_blob({0.0, 0.0, 0.0}, -0.1, 1.0, {1, 1, 1}));
  EXPECT_THROW(s.validate(), ConfigError);
  SynthSceneSpec out;
  out.statics.push_back(still_blob({1.5, 0.0, 0.0}, 0.1, 1.0, {1, 1, 1}));
  EXPECT_THROW(out.validate(), ConfigError);
}

class DatasetTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("ds"));
    DatasetOptions o;
    o.n_views = 3;
    o.n_frames = 3;
    o.width = 16;
    o.height = 16;
    generate_dataset(SynthSceneSpec::default_scene(), o, *dir_);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static fs::path copy_of(const std::string& name) {
    const fs::path p = scratch(name);
    fs::copy(*dir_, p, fs::copy_options::recursive);
    return p;
  }
  static fs::path* dir_;
};

fs::path* DatasetTest::dir_ = nullptr;

TEST_F(DatasetTest, LayoutAndRoundTrip) {
  const auto ds = SceneDataset::load(*dir_);
  EXPECT_EQ(ds.n_views(), 3);
  EXPECT_EQ(ds.n_frames(), 3);
  EXPECT_EQ(ds.cameras(), arc_cameras(3, 16, 16));
  for (int v : ds.training_views()) EXPECT_NE(v, ds.held_out());
  EXPECT_EQ(ds.training_views().size(), 2u);
  EXPECT_DOUBLE_EQ(ds.frame_time(2), 1.0);
  std::size_t pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(*dir_ / "frames")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 9u);
  const auto m = nlohmann::json::parse(slurp(*dir_ / "manifest.json"));
  EXPECT_EQ(m["hashes"].size(), 9u);
  EXPECT_THROW(ds.load_frame(0, 3), OutOfRangeError);
}

TEST_F(DatasetTest, FramesMatchOracle) {
  const auto ds = SceneDataset::load(*dir_);
  const auto ref = oracle_render_converged(SynthSceneSpec::default_scene(), ds.cameras()[1], ds.frame_time(1), 512, 4096);
  EXPECT_EQ(ds.load_frame(1, 1), quantize8(ref.image));
}

TEST_F(DatasetTest, Deterministic) {
  const fs::path again = scratch("ds2");
  DatasetOptions o;
  o.n_views = 3;
  o.n_frames = 3;
  o.width = 16;
  o.height = 16;
  generate_dataset(SynthSceneSpec::default_scene(), o, again);
  EXPECT_EQ(slurp(again / "manifest.json"), slurp(*dir_ / "manifest.json"));
  EXPECT_EQ(slurp(again / frame_relative_path(2, 1)), slurp(*dir_ / frame_relative_path(2, 1)));
  fs::remove_all(again);
}

TEST_F(DatasetTest, TruncatedFrameNamesFile) {
  const fs::path p = copy_of("trunc");
  const fs::path frame = p / frame_relative_path(1, 2);
  const std::string bytes = slurp(frame);
  std::ofstream(frame, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  const auto ds = SceneDataset::load(p);
  try {
    ds.load_frame(1, 2);
    FAIL() << "truncated frame accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(frame.filename().string()), std::string::npos) << e.what();
  }
  fs::remove(frame);
  EXPECT_THROW(SceneDataset::load(p), FormatError);
  fs::remove_all(p);
}

TEST_F(DatasetTest, UnknownVersionRejected) {
  const fs::path p = copy_of("version");
  auto m = nlohmann::json::parse(slurp(p / "manifest.json"));
  m["version"] = 99;
  std::ofstream(p / "manifest.json", std::ios::trunc) << m.dump();
  EXPECT_THROW(SceneDataset::load(p), FormatError);
  fs::remove(p / "manifest.json");
  EXPECT_THROW(SceneDataset::load(p), FormatError);
  fs::remove_all(p);
}

}  // namespace
}  // namespace cdngp
