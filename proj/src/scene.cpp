// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <spdlog/spdlog.h>

#include "cdngp/digest.hpp"
#include "cdngp/error.hpp"
#include <nlohmann/json.hpp>

namespace cdngp {

using nlohmann::json;

std::array<double, 3> Blob::center(double t) const {
  std::array<double, 3> c{};
  for (int a = 0; a < 3; ++a) {
    double v = 0.0;
    for (std::size_t k = path[a].size(); k-- > 0;) v = v * t + path[a][k];
    c[a] = v;
  }
  return c;
}

namespace {

Blob make_blob(std::array<std::vector<double>, 3> path, double radius, double peak, std::array<double, 3> albedo) {
  Blob b;
  b.path = std::move(path);
  b.radius = radius;
  b.peak = peak;
  b.albedo = albedo;
  return b;
}

}  // namespace

SynthSceneSpec SynthSceneSpec::default_scene() {
  SynthSceneSpec s;
  s.moving.push_back(make_blob({{{-0.45, 0.9}, {0.15}, {-0.1, 0.0, 0.3}}}, 0.16, 40.0, {0.9, 0.15, 0.1}));
  s.moving.push_back(make_blob({{{0.3}, {-0.4, 0.8}, {0.25, -0.5}}}, 0.13, 40.0, {0.1, 0.85, 0.2}));
  s.statics.push_back(make_blob({{{0.0}, {-0.3}, {0.35}}}, 0.26, 25.0, {0.15, 0.3, 0.9}));
  s.statics.push_back(make_blob({{{-0.35}, {0.3}, {0.3}}}, 0.2, 30.0, {0.95, 0.85, 0.2}));
  return s;
}

void SynthSceneSpec::validate() const {
  if (!(bound > 0.0) || bound > kSceneMax) throw ConfigError("scene spec: bound must be in (0, 1]");
  auto check = [&](const Blob& b, const std::string& what) {
    if (!(b.radius > 0.0)) throw ConfigError("scene spec: " + what + " radius must be positive");
    if (!(b.peak >= 0.0)) throw ConfigError("scene spec: " + what + " peak density must be non-negative");
    for (double c : b.albedo) {
      if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("scene spec: " + what + " albedo outside [0, 1]");
    }
    for (int a = 0; a < 3; ++a) {
      if (b.path[a].empty()) throw ConfigError("scene spec: " + what + " path has no coefficients");
    }
    for (int i = 0; i <= 64; ++i) {
      const auto c = b.center(i / 64.0);
      for (double v : c) {
        if (std::abs(v) > bound) throw ConfigError("scene spec: " + what + " path leaves the scene bounds");
      }
    }
  };
  for (std::size_t i = 0; i < moving.size(); ++i) check(moving[i], "moving blob " + std::to_string(i));
  for (std::size_t i = 0; i < statics.size(); ++i) check(statics[i], "static blob " + std::to_string(i));
}

namespace {

// Blobs with their centers evaluated at one time. Terms below
// exp(-kCutoff) of the peak are skipped.
constexpr double kCutoff = 36.0;

struct PlacedBlob {
  std::array<double, 3> c;
  double inv_two_r2;
  double peak;
  std::array<double, 3> albedo;
};

std::vector<PlacedBlob> place(const SynthSceneSpec& spec, double t) {
  std::vector<PlacedBlob> out;
  auto add = [&](const Blob& b, double tt) {
    out.push_back({b.center(tt), 1.0 / (2.0 * b.radius * b.radius), b.peak, b.albedo});
  };
  for (const Blob& b : spec.moving) add(b, t);
  for (const Blob& b : spec.statics) add(b, 0.0);
  return out;
}

OracleSample evaluate(const std::vector<PlacedBlob>& blobs, const std::array<double, 3>& x) {
  OracleSample out;
  for (const PlacedBlob& b : blobs) {
    const double d2 = (x[0] - b.c[0]) * (x[0] - b.c[0]) + (x[1] - b.c[1]) * (x[1] - b.c[1]) +
                      (x[2] - b.c[2]) * (x[2] - b.c[2]);
    const double e = d2 * b.inv_two_r2;
    if (e > kCutoff) continue;
    const double s = b.peak * std::exp(-e);
    out.sigma += s;
    for (int k = 0; k < 3; ++k) out.color[k] += s * b.albedo[k];
  }
  if (out.sigma > 0.0) {
    for (double& c : out.color) c /= out.sigma;
  }
  return out;
}

}  // namespace

OracleSample oracle_field(const SynthSceneSpec& spec, const std::array<double, 3>& x, double t) {
  return evaluate(place(spec, t), x);
}

RenderOutput<double> oracle_ray(const SynthSceneSpec& spec, const Ray& ray_in, double t, int substeps,
                                const CompositeOptions& composite) {
  if (substeps < 1) throw ConfigError("oracle_ray: substeps must be positive");
  Ray ray = ray_in;
  if (!clip_to_scene(ray)) return volume_render<double>({}, {}, {}, composite);
  const double dt = (ray.t_far - ray.t_near) / substeps;
  const std::vector<PlacedBlob> blobs = place(spec, t);
  std::vector<double> sigma(substeps), color(3 * substeps), delta(substeps, dt);
  for (int i = 0; i < substeps; ++i) {
    const double s = ray.t_near + (i + 0.5) * dt;
    const OracleSample o = evaluate(blobs, {ray.o[0] + s * ray.d[0], ray.o[1] + s * ray.d[1], ray.o[2] + s * ray.d[2]});
    sigma[i] = o.sigma;
    for (int c = 0; c < 3; ++c) color[3 * i + c] = o.color[c];
  }
  return volume_render<double>(sigma, color, delta, composite);
}

Image oracle_render(const SynthSceneSpec& spec, const Camera& camera, double t, int substeps,
                    const CompositeOptions& composite) {
  if (substeps < 512) throw ConfigError("oracle_render: at least 512 substeps required");
  camera.validate();
  Image img(camera.width, camera.height);
  const auto n = static_cast<std::ptrdiff_t>(img.pixel_count());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    const std::uint32_t px = static_cast<std::uint32_t>(p);
    const Ray ray = generate_rays(camera, std::span<const std::uint32_t>(&px, 1))[0];
    const RenderOutput<double> o = oracle_ray(spec, ray, t, substeps, composite);
    for (int c = 0; c < 3; ++c) img.rgb[3 * p + c] = static_cast<float>(std::clamp(o.color[c], 0.0, 1.0));
  }
  return img;
}

ConvergedRender oracle_render_converged(const SynthSceneSpec& spec, const Camera& camera, double t, int substeps,
                                        int max_substeps, const CompositeOptions& composite) {
  ConvergedRender r;
  r.substeps = substeps;
  r.image = oracle_render(spec, camera, t, substeps, composite);
  while (2 * r.substeps <= max_substeps) {
    Image finer = oracle_render(spec, camera, t, 2 * r.substeps, composite);
    float worst = 0.0f;
    for (std::size_t i = 0; i < finer.rgb.size(); ++i) worst = std::max(worst, std::abs(finer.rgb[i] - r.image.rgb[i]));
    r.substeps *= 2;
    r.image = std::move(finer);
    if (worst < 1.0f / 255.0f) {
      r.converged = true;
      return r;
    }
  }
  return r;
}

BatchFieldFn<double> oracle_batch_field(const SynthSceneSpec& spec, double t_global) {
  return [spec, t_global](const SampleBatch<double>& batch, std::vector<double>& sigma, Mat<double>& color) {
    const auto S = static_cast<Eigen::Index>(batch.n_samples());
    sigma.resize(static_cast<std::size_t>(S));
    color.resize(3, S);
    const std::vector<PlacedBlob> blobs = place(spec, t_global);
    for (Eigen::Index s = 0; s < S; ++s) {
      std::array<double, 3> x;
      for (int a = 0; a < 3; ++a) x[a] = kSceneMin + (kSceneMax - kSceneMin) * batch.positions(a, s);
      const OracleSample o = evaluate(blobs, x);
      sigma[static_cast<std::size_t>(s)] = o.sigma;
      for (int c = 0; c < 3; ++c) color(c, s) = o.color[c];
    }
  };
}

std::vector<Camera> arc_cameras(int n_views, std::uint32_t width, std::uint32_t height) {
  if (n_views < 2) throw ConfigError("dataset: at least 2 views required");
  constexpr double kRadius = 3.2;
  constexpr double kFov = 40.0 * std::numbers::pi / 180.0;
  constexpr double kSpacing = 22.0 * std::numbers::pi / 180.0;
  const double elevation[2] = {18.0 * std::numbers::pi / 180.0, 2.0 * std::numbers::pi / 180.0};
  const double fx = 0.5 * width / std::tan(kFov / 2.0);
  const int n_upper = (n_views + 1) / 2;
  const int n_lower = n_views - n_upper;
  std::vector<Camera> cams;
  for (int v = 0; v < n_views; ++v) {
    double az = 0.0, el = 0.0;
    if (v < n_upper) {
      // 0, -s, +s, -2s, ...
      const int k = (v + 1) / 2;
      az = (v % 2 == 1 ? -1.0 : 1.0) * k * kSpacing;
      el = elevation[0];
    } else {
      const int i = v - n_upper;
      az = (i - (n_lower - 1) / 2.0) * kSpacing;
      el = elevation[1];
    }
    const std::array<double, 3> eye{kRadius * std::cos(el) * std::sin(az), kRadius * std::sin(el),
                                     -kRadius * std::cos(el) * std::cos(az)};
    cams.push_back(look_at(eye, {0, 0, 0}, {0, 1, 0}, fx, fx, width, height, v));
  }
  return cams;
}

std::filesystem::path frame_relative_path(int view, int frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04d.png", frame);
  return std::filesystem::path("frames") / std::to_string(view) / name;
}

namespace {

json blob_to_json(const Blob& b) {
  return json{{"path", json::array({b.path[0], b.path[1], b.path[2]})},
              {"radius", b.radius},
              {"peak", b.peak},
              {"albedo", b.albedo}};
}

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

Blob blob_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"path", "radius", "peak", "albedo"}, where);
  Blob b;
  const auto& p = j.at("path");
  if (!p.is_array() || p.size() != 3) throw ConfigError(where + ": path needs 3 coefficient lists");
  for (int a = 0; a < 3; ++a) b.path[a] = p[a].get<std::vector<double>>();
  b.radius = j.at("radius").get<double>();
  b.peak = j.at("peak").get<double>();
  b.albedo = j.at("albedo").get<std::array<double, 3>>();
  return b;
}

json camera_to_json(const Camera& c) {
  return json{{"id", c.view_id}, {"fx", c.fx},        {"fy", c.fy},         {"cx", c.cx},
              {"cy", c.cy},      {"width", c.width}, {"height", c.height}, {"c2w", c.c2w}};
}

Camera camera_from_json(const json& j) {
  Camera c;
  c.view_id = j.at("id").get<int>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<std::uint32_t>();
  c.height = j.at("height").get<std::uint32_t>();
  c.c2w = j.at("c2w").get<std::array<double, 16>>();
  c.validate();
  return c;
}

json spec_json(const SynthSceneSpec& spec) {
  json j{{"bound", spec.bound}, {"seed", spec.seed}, {"moving", json::array()}, {"statics", json::array()}};
  for (const Blob& b : spec.moving) j["moving"].push_back(blob_to_json(b));
  for (const Blob& b : spec.statics) j["statics"].push_back(blob_to_json(b));
  return j;
}

}  // namespace

std::string spec_to_json(const SynthSceneSpec& spec) { return spec_json(spec).dump(2); }

SynthSceneSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene spec: ") + e.what());
  }
  reject_unknown(j, {"bound", "seed", "moving", "statics"}, "scene spec");
  SynthSceneSpec s;
  try {
    if (j.contains("bound")) s.bound = j["bound"].get<double>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("moving")) {
      for (std::size_t i = 0; i < j["moving"].size(); ++i) s.moving.push_back(blob_from_json(j["moving"][i], "moving[" + std::to_string(i) + "]"));
    }
    if (j.contains("statics")) {
      for (std::size_t i = 0; i < j["statics"].size(); ++i) s.statics.push_back(blob_from_json(j["statics"][i], "statics[" + std::to_string(i) + "]"));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

SceneDataset generate_dataset(const SynthSceneSpec& spec, const DatasetOptions& opt,
                              const std::filesystem::path& out_dir) {
  spec.validate();
  if (opt.n_frames < 1) throw ConfigError("dataset: at least one frame required");
  const std::vector<Camera> cams = arc_cameras(opt.n_views, opt.width, opt.height);
  std::filesystem::create_directories(out_dir);
  json hashes = json::object();
  bool all_converged = true;
  int max_used = 0;
  for (int v = 0; v < opt.n_views; ++v) std::filesystem::create_directories(out_dir / "frames" / std::to_string(v));
  for (int f = 0; f < opt.n_frames; ++f) {
    const double t = opt.n_frames > 1 ? static_cast<double>(f) / (opt.n_frames - 1) : 0.0;
    for (int v = 0; v < opt.n_views; ++v) {
      const ConvergedRender r = oracle_render_converged(spec, cams[v], t, opt.substeps, opt.max_substeps);
      all_converged = all_converged && r.converged;
      max_used = std::max(max_used, r.substeps);
      const auto rel = frame_relative_path(v, f);
      write_png(out_dir / rel, r.image);
      hashes[rel.generic_string()] = sha256_file(out_dir / rel);
    }
  }
  if (!all_converged) spdlog::warn("oracle render did not converge within {} substeps", opt.max_substeps);
  json m;
  m["format"] = "cdngp-dataset";
  m["version"] = kDatasetVersion;
  m["width"] = opt.width;
  m["height"] = opt.height;
  m["n_views"] = opt.n_views;
  m["n_frames"] = opt.n_frames;
  m["held_out"] = 0;
  m["fps"] = opt.fps;
  m["frame_pattern"] = "frames/{view}/{frame:04d}.png";
  m["normalization"] = {{"min", {kSceneMin, kSceneMin, kSceneMin}}, {"max", {kSceneMax, kSceneMax, kSceneMax}}};
  m["background"] = {0.0, 0.0, 0.0};
  m["quantization"] = "8-bit";
  m["oracle"] = {{"substeps", opt.substeps}, {"max_substeps_used", max_used}, {"converged", all_converged}};
  m["cameras"] = json::array();
  for (const Camera& c : cams) m["cameras"].push_back(camera_to_json(c));
  m["scene"] = spec_json(spec);
  m["hashes"] = hashes;
  std::ofstream(out_dir / "manifest.json") << m.dump(2) << "\n";
  return SceneDataset::load(out_dir);
}

SceneDataset SceneDataset::load(const std::filesystem::path& root) {
  const auto mpath = root / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw FormatError("missing dataset manifest '" + mpath.string() + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest '" + mpath.string() + "': " + e.what());
  }
  if (!m.contains("version") || !m["version"].is_number_integer() || m["version"].get<int>() != kDatasetVersion) {
    throw FormatError("manifest '" + mpath.string() + "' has an unsupported version");
  }
  SceneDataset ds;
  ds.root_ = root;
  try {
    ds.width_ = m.at("width").get<std::uint32_t>();
    ds.height_ = m.at("height").get<std::uint32_t>();
    ds.n_frames_ = m.at("n_frames").get<int>();
    ds.held_out_ = m.at("held_out").get<int>();
    ds.fps_ = m.at("fps").get<double>();
    for (const auto& c : m.at("cameras")) ds.cameras_.push_back(camera_from_json(c));
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + mpath.string() + "': " + e.what());
  }
  if (static_cast<int>(ds.cameras_.size()) != m.value("n_views", -1)) {
    throw FormatError("manifest '" + mpath.string() + "': camera count does not match n_views");
  }
  if (ds.held_out_ < 0 || ds.held_out_ >= ds.n_views()) throw FormatError("manifest: held-out view out of range");
  for (int v = 0; v < ds.n_views(); ++v) {
    for (int f = 0; f < ds.n_frames_; ++f) {
      const auto p = ds.frame_path(v, f);
      if (!std::filesystem::exists(p)) throw FormatError("missing frame file '" + p.string() + "'");
    }
  }
  return ds;
}

std::vector<int> SceneDataset::training_views() const {
  std::vector<int> v;
  for (int i = 0; i < n_views(); ++i) {
    if (i != held_out_) v.push_back(i);
  }
  return v;
}

double SceneDataset::frame_time(int frame) const {
  return n_frames_ > 1 ? static_cast<double>(frame) / (n_frames_ - 1) : 0.0;
}

std::filesystem::path SceneDataset::frame_path(int view, int frame) const {
  return root_ / frame_relative_path(view, frame);
}

Image SceneDataset::load_frame(int view, int frame) const {
  if (view < 0 || view >= n_views() || frame < 0 || frame >= n_frames_) {
    throw OutOfRangeError("frame (" + std::to_string(view) + ", " + std::to_string(frame) + ") not in dataset");
  }
  Image img = read_png(frame_path(view, frame));
  if (img.width != width_ || img.height != height_) {
    throw FormatError("frame '" + frame_path(view, frame).string() + "' has the wrong size");
  }
  return img;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "# dssim = (1 - ssim) / 2, 11x11 gaussian window sigma 1.5, mean over rgb channels\n";
  out << "frame,view,psnr,dssim\n";
  char buf[128];
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.8f\n", r.frame, r.view, r.psnr, r.dssim);
    out << buf;
  }
}

}  // namespace cdngp
