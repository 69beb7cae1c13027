// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/renderer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "cdngp/error.hpp"

namespace cdngp {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0.0)) throw ConfigError("zero-length vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
  if (width == 0 || height == 0) throw ConfigError("camera: empty image");
  const Vec3 c0{c2w[0], c2w[4], c2w[8]}, c1{c2w[1], c2w[5], c2w[9]}, c2{c2w[2], c2w[6], c2w[10]};
  const double det = dot(c0, cross(c1, c2));
  if (!(std::abs(det) > 1e-9)) throw ConfigError("camera " + std::to_string(view_id) + ": degenerate rotation");
  const Vec3* cols[3] = {&c0, &c1, &c2};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(dot(*cols[i], *cols[j]) - expect) > 1e-6) {
        throw ConfigError("camera " + std::to_string(view_id) + ": rotation is not orthonormal");
      }
    }
  }
  if (det < 0.0) throw ConfigError("camera " + std::to_string(view_id) + ": rotation is a reflection");
}

Camera look_at(std::array<double, 3> eye, std::array<double, 3> target, std::array<double, 3> up, double fx,
               double fy, std::uint32_t width, std::uint32_t height, int view_id) {
  const Vec3 z = normalized({target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]});
  const Vec3 x = normalized(cross(z, up));
  const Vec3 y = cross(z, x);
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.view_id = view_id;
  cam.c2w = {x[0], y[0], z[0], eye[0], x[1], y[1], z[1], eye[1], x[2], y[2], z[2], eye[2], 0, 0, 0, 1};
  return cam;
}

std::vector<Ray> generate_rays(const Camera& camera, std::span<const std::uint32_t> pixels) {
  camera.validate();
  const std::size_t n_pix = std::size_t{camera.width} * camera.height;
  std::vector<Ray> rays(pixels.size());
  const Vec3 o = camera.center();
  const auto& m = camera.c2w;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels[i] >= n_pix) throw ContractViolation("generate_rays: pixel index out of bounds");
    const double u = pixels[i] % camera.width + 0.5;
    const double v = pixels[i] / camera.width + 0.5;
    const Vec3 dc{(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0};
    const Vec3 dw{m[0] * dc[0] + m[1] * dc[1] + m[2] * dc[2], m[4] * dc[0] + m[5] * dc[1] + m[6] * dc[2],
                  m[8] * dc[0] + m[9] * dc[1] + m[10] * dc[2]};
    rays[i].o = o;
    rays[i].d = normalized(dw);
  }
  return rays;
}

bool clip_to_scene(Ray& ray) {
  double t0 = ray.t_near, t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    if (ray.d[a] == 0.0) {
      if (ray.o[a] < kSceneMin || ray.o[a] > kSceneMax) return false;
      continue;
    }
    double ta = (kSceneMin - ray.o[a]) / ray.d[a];
    double tb = (kSceneMax - ray.o[a]) / ray.d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return false;
  ray.t_near = t0;
  ray.t_far = t1;
  return true;
}

std::uint16_t to_bf16(float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if (std::isnan(v)) return 0x7fc0;
  bits += 0x7fffu + ((bits >> 16) & 1u);
  return static_cast<std::uint16_t>(bits >> 16);
}

float from_bf16(std::uint16_t v) { return std::bit_cast<float>(static_cast<std::uint32_t>(v) << 16); }

OccupancyGrid::OccupancyGrid(int resolution, double decay, double threshold)
    : resolution_(resolution), decay_(decay), threshold_(threshold) {
  if (resolution < 1 || resolution > 1024) throw ConfigError("occupancy grid: resolution out of range");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("occupancy grid: decay must be in (0, 1]");
  if (!(threshold >= 0.0)) throw ConfigError("occupancy grid: negative threshold");
  const std::size_t n = std::size_t(resolution) * resolution * resolution;
  cache_.assign(n, 0.0f);
  bits_.assign(n, 0);
  fill(round_bf16(static_cast<float>(2.0 * threshold)));
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t OccupancyGrid::cell_of(const std::array<double, 3>& p) const {
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (int a = 0; a < 3; ++a) {
    const int c = std::clamp(static_cast<int>(std::floor(p[a] * resolution_)), 0, resolution_ - 1);
    idx += stride * static_cast<std::size_t>(c);
    stride *= static_cast<std::size_t>(resolution_);
  }
  return idx;
}

bool OccupancyGrid::occupied_at(const std::array<double, 3>& p) const { return bits_[cell_of(p)] != 0; }

void OccupancyGrid::refresh_bits() {
  const auto tau = static_cast<float>(threshold_);
  for (std::size_t i = 0; i < cache_.size(); ++i) bits_[i] = cache_[i] > tau ? 1 : 0;
}

void OccupancyGrid::set_cache(std::span<const float> values) {
  if (values.size() != cache_.size()) throw FormatError("occupancy grid: cache size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) cache_[i] = round_bf16(values[i]);
  refresh_bits();
}

void OccupancyGrid::fill(float value) {
  std::fill(cache_.begin(), cache_.end(), round_bf16(value));
  refresh_bits();
}

void OccupancyGrid::raise_to(float value) {
  const float v = round_bf16(value);
  for (float& c : cache_) c = std::max(c, v);
  refresh_bits();
}

void OccupancyGrid::decay_and_max(std::span<const std::uint32_t> cells, std::span<const float> sigma) {
  if (cells.size() != sigma.size()) throw ContractViolation("decay_and_max: size mismatch");
  const auto decay = static_cast<float>(decay_);
  for (float& c : cache_) c = round_bf16(c * decay);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const float s = std::isfinite(sigma[i]) ? round_bf16(sigma[i]) : 0.0f;
    cache_[cells[i]] = std::max(cache_[cells[i]], s);
  }
  refresh_bits();
}

void update_occupancy(OccupancyGrid& grid, const DensityFn& density, std::uint64_t step, std::mt19937_64& rng) {
  const std::size_t n = grid.cell_count();
  const int R = grid.resolution();
  std::vector<std::uint32_t> cells;
  if (step < static_cast<std::uint64_t>(OccupancyGrid::kWarmupSteps)) {
    cells.resize(n);
    for (std::size_t i = 0; i < n; ++i) cells[i] = static_cast<std::uint32_t>(i);
  } else {
    std::vector<std::uint32_t> occupied;
    for (std::size_t i = 0; i < n; ++i) {
      if (grid.occupied(i)) occupied.push_back(static_cast<std::uint32_t>(i));
    }
    const std::size_t quarter = std::max<std::size_t>(1, n / 4);
    std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(n - 1));
    cells.reserve(2 * quarter);
    for (std::size_t i = 0; i < quarter; ++i) cells.push_back(any(rng));
    if (occupied.empty()) {
      for (std::size_t i = 0; i < quarter; ++i) cells.push_back(any(rng));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, occupied.size() - 1);
      for (std::size_t i = 0; i < quarter; ++i) cells.push_back(occupied[pick(rng)]);
    }
  }

  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<float> sigma(cells.size());
  constexpr std::size_t kPass = 1 << 16;
  Mat<float> pos;
  std::vector<float> times;
  std::vector<float> out;
  for (std::size_t begin = 0; begin < cells.size(); begin += kPass) {
    const std::size_t m = std::min(kPass, cells.size() - begin);
    pos.resize(3, static_cast<Eigen::Index>(m));
    times.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::uint32_t c = cells[begin + i];
      for (int a = 0; a < 3; ++a) {
        const std::uint32_t ia = c % static_cast<std::uint32_t>(R);
        c /= static_cast<std::uint32_t>(R);
        pos(a, static_cast<Eigen::Index>(i)) = std::min((static_cast<float>(ia) + unit(rng)) / static_cast<float>(R), 1.0f);
      }
      times[i] = unit(rng);
    }
    density(pos, times, out);
    if (out.size() != m) throw ContractViolation("update_occupancy: density returned the wrong count");
    std::copy(out.begin(), out.end(), sigma.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  grid.decay_and_max(cells, sigma);
}

std::vector<MarchedSample> march_ray(const Ray& ray_in, const OccupancyGrid& grid, double step, std::mt19937_64* rng) {
  if (!(step > 0.0)) throw ContractViolation("march_ray: step must be positive");
  std::vector<MarchedSample> out;
  Ray ray = ray_in;
  if (!clip_to_scene(ray)) return out;
  const double len = ray.t_far - ray.t_near;
  const auto n = static_cast<std::size_t>(std::ceil(len / step));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = 1.0 / (kSceneMax - kSceneMin);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = ray.t_near + static_cast<double>(i) * step;
    const double b = std::min(a + step, ray.t_far);
    if (!(b > a)) break;
    const double u = rng != nullptr ? unit(*rng) : 0.5;
    const double t = a + u * (b - a);
    MarchedSample s;
    for (int k = 0; k < 3; ++k) s.position[k] = std::clamp((ray.o[k] + t * ray.d[k] - kSceneMin) * scale, 0.0, 1.0);
    if (!grid.occupied_at(s.position)) continue;
    s.t = t;
    s.delta = b - a;
    s.s_begin = (a - ray.t_near) / len;
    s.s_end = (b - ray.t_near) / len;
    out.push_back(s);
  }
  return out;
}

template <typename T>
RenderOutput<T> volume_render(std::span<const T> sigmas, std::span<const T> colors, std::span<const T> deltas,
                              const CompositeOptions& options) {
  const std::size_t n = sigmas.size();
  if (deltas.size() != n || colors.size() != 3 * n) throw ContractViolation("volume_render: length mismatch");
  RenderOutput<T> out;
  out.weights.assign(n, T(0));
  T trans = T(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sigmas[i] >= T(0)) || !(deltas[i] >= T(0))) {
      throw ContractViolation("volume_render: negative density or interval at sample " + std::to_string(i));
    }
    if (options.early_termination && trans < T(kTerminationTransmittance)) break;
    const T tau = sigmas[i] * deltas[i];
    const T alpha = -std::expm1(-tau);
    const T w = trans * alpha;
    out.weights[i] = w;
    out.opacity += w;
    for (int c = 0; c < 3; ++c) out.color[c] += w * colors[3 * i + c];
    trans *= std::exp(-tau);
    out.sample_count = i + 1;
  }
  out.transmittance = trans;
  for (int c = 0; c < 3; ++c) out.color[c] += (T(1) - out.opacity) * static_cast<T>(options.background[c]);
  return out;
}

template <typename T>
void volume_render_backward(std::span<const T> sigmas, std::span<const T> colors, std::span<const T> deltas,
                            const RenderOutput<T>& out, const std::array<T, 3>& grad_color, T grad_opacity,
                            std::span<const T> grad_weights, const CompositeOptions& options,
                            std::span<T> grad_sigmas, std::span<T> grad_colors) {
  const std::size_t n = sigmas.size();
  if (grad_sigmas.size() != n || grad_colors.size() != 3 * n || (!grad_weights.empty() && grad_weights.size() != n)) {
    throw ContractViolation("volume_render_backward: length mismatch");
  }
  std::fill(grad_sigmas.begin(), grad_sigmas.end(), T(0));
  std::fill(grad_colors.begin(), grad_colors.end(), T(0));
  const std::size_t m = out.sample_count;
  // g_i = dL/dw_i. The background contributes -bg through o.
  std::vector<T> g(m);
  for (std::size_t i = 0; i < m; ++i) {
    T gi = grad_opacity;
    for (int c = 0; c < 3; ++c) gi += grad_color[c] * (colors[3 * i + c] - static_cast<T>(options.background[c]));
    if (!grad_weights.empty()) gi += grad_weights[i];
    g[i] = gi;
    for (int c = 0; c < 3; ++c) grad_colors[3 * i + c] = out.weights[i] * grad_color[c];
  }
  // dL/dsigma_i = delta_i (T_{i+1} g_i - sum_{j>i} w_j g_j).
  std::vector<T> trans_next(m);
  T trans = T(1);
  for (std::size_t i = 0; i < m; ++i) {
    trans *= std::exp(-sigmas[i] * deltas[i]);
    trans_next[i] = trans;
  }
  T suffix = T(0);
  for (std::size_t i = m; i-- > 0;) {
    grad_sigmas[i] = deltas[i] * (trans_next[i] * g[i] - suffix);
    suffix += out.weights[i] * g[i];
  }
}

template <typename T>
void build_sample_batch(std::span<const Ray> rays, std::span<const double> times, const OccupancyGrid& grid,
                        double step, std::mt19937_64* rng, SampleBatch<T>& batch) {
  if (times.size() != rays.size()) throw ContractViolation("build_sample_batch: one time per ray required");
  std::vector<std::vector<MarchedSample>> marched(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) marched[r] = march_ray(rays[r], grid, step, rng);
  std::size_t total = 0;
  for (const auto& m : marched) total += m.size();
  const auto R = static_cast<Eigen::Index>(rays.size());
  batch.positions.resize(3, static_cast<Eigen::Index>(total));
  batch.directions.resize(3, R);
  batch.times.resize(rays.size());
  batch.ray_offsets.resize(rays.size() + 1);
  batch.deltas.resize(total);
  batch.s_begin.resize(total);
  batch.s_end.resize(total);
  std::size_t s = 0;
  batch.ray_offsets[0] = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (int k = 0; k < 3; ++k) batch.directions(k, static_cast<Eigen::Index>(r)) = static_cast<T>(rays[r].d[k]);
    batch.times[r] = static_cast<T>(times[r]);
    for (const MarchedSample& m : marched[r]) {
      for (int k = 0; k < 3; ++k) batch.positions(k, static_cast<Eigen::Index>(s)) = static_cast<T>(m.position[k]);
      batch.deltas[s] = static_cast<T>(m.delta);
      batch.s_begin[s] = static_cast<T>(m.s_begin);
      batch.s_end[s] = static_cast<T>(m.s_end);
      ++s;
    }
    batch.ray_offsets[r + 1] = static_cast<std::uint32_t>(s);
  }
}

template <typename T>
RenderedImage render_image(const BatchFieldFn<T>& field, const Camera& camera, double t, const OccupancyGrid& grid,
                           const RenderSettings& settings) {
  if (!(t >= 0.0 && t <= 1.0)) throw OutOfRangeError("render_image: time " + std::to_string(t) + " outside [0, 1]");
  camera.validate();
  const std::size_t n_pix = std::size_t{camera.width} * camera.height;
  RenderedImage result{Image(camera.width, camera.height), std::vector<float>(n_pix, 0.0f)};
  const std::size_t pass = std::max<std::size_t>(1, settings.rays_per_pass);
  std::vector<std::uint32_t> pixels;
  SampleBatch<T> batch;
  std::vector<T> sigma;
  Mat<T> color;
  for (std::size_t begin = 0; begin < n_pix; begin += pass) {
    const std::size_t m = std::min(pass, n_pix - begin);
    pixels.resize(m);
    for (std::size_t i = 0; i < m; ++i) pixels[i] = static_cast<std::uint32_t>(begin + i);
    const std::vector<Ray> rays = generate_rays(camera, pixels);
    const std::vector<double> times(m, t);
    build_sample_batch<T>(rays, times, grid, settings.step, nullptr, batch);
    if (batch.n_samples() > 0) {
      field(batch, sigma, color);
    } else {
      sigma.clear();
      color.resize(3, 0);
    }
    const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (settings.exec == Exec::Parallel)
    for (std::ptrdiff_t r = 0; r < mm; ++r) {
      const std::size_t b = batch.ray_offsets[r];
      const std::size_t e = batch.ray_offsets[r + 1];
      const RenderOutput<T> o = volume_render<T>(
          std::span<const T>(sigma.data() + b, e - b), std::span<const T>(color.data() + 3 * b, 3 * (e - b)),
          std::span<const T>(batch.deltas.data() + b, e - b), settings.composite);
      const std::size_t px = begin + static_cast<std::size_t>(r);
      for (int c = 0; c < 3; ++c) result.image.rgb[3 * px + c] = std::clamp(static_cast<float>(o.color[c]), 0.0f, 1.0f);
      result.opacity[px] = static_cast<float>(o.opacity);
    }
  }
  return result;
}

template <typename T>
RenderedImage render_image(const FieldModel<T>& model, const Camera& camera, double t, const OccupancyGrid& grid,
                           const RenderSettings& settings) {
  FieldCache<T> cache;
  const BatchFieldFn<T> fn = [&](const SampleBatch<T>& batch, std::vector<T>& sigma, Mat<T>& color) {
    model.forward(batch, cache, settings.exec, true);
    sigma = cache.sigma;
    color = cache.color;
  };
  return render_image<T>(fn, camera, t, grid, settings);
}

#define CDNGP_RENDER_INSTANTIATE(T)                                                                              \
  template RenderOutput<T> volume_render<T>(std::span<const T>, std::span<const T>, std::span<const T>,         \
                                            const CompositeOptions&);                                           \
  template void volume_render_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>,           \
                                          const RenderOutput<T>&, const std::array<T, 3>&, T, std::span<const T>, \
                                          const CompositeOptions&, std::span<T>, std::span<T>);                 \
  template void build_sample_batch<T>(std::span<const Ray>, std::span<const double>, const OccupancyGrid&,      \
                                      double, std::mt19937_64*, SampleBatch<T>&);                               \
  template RenderedImage render_image<T>(const BatchFieldFn<T>&, const Camera&, double, const OccupancyGrid&,   \
                                         const RenderSettings&);                                                \
  template RenderedImage render_image<T>(const FieldModel<T>&, const Camera&, double, const OccupancyGrid&,     \
                                         const RenderSettings&);

CDNGP_RENDER_INSTANTIATE(float)
CDNGP_RENDER_INSTANTIATE(double)

}  // namespace cdngp
