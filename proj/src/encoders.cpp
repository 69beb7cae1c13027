// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdngp/error.hpp"

namespace cdngp {

void EncoderConfig::validate() const {
  if (dims < 1 || dims > 4) throw ConfigError("encoder: dims must be 1..4");
  if (levels < 1) throw ConfigError("encoder: levels must be >= 1");
  if (features < 1) throw ConfigError("encoder: features must be >= 1");
  if (log2_table < 1 || log2_table > 24) throw ConfigError("encoder: log2_table must lie in [1, 24]");
  if (n_min < 1 || n_min > n_max) throw ConfigError("encoder: need 1 <= n_min <= n_max");
  if (levels == 1 && n_min != n_max) throw ConfigError("encoder: a single level needs n_min == n_max");
}

std::vector<std::uint32_t> level_resolutions(const EncoderConfig& config) {
  config.validate();
  const int L = config.levels;
  std::vector<std::uint32_t> res(static_cast<std::size_t>(L));
  if (L == 1) {
    res[0] = config.n_min;
    return res;
  }
  const double log_b = (std::log(static_cast<double>(config.n_max)) - std::log(static_cast<double>(config.n_min))) /
                       static_cast<double>(L - 1);
  for (int l = 0; l < L; ++l) {
    const double n = static_cast<double>(config.n_min) * std::exp(static_cast<double>(l) * log_b);
    res[static_cast<std::size_t>(l)] = static_cast<std::uint32_t>(std::floor(n * (1.0 + 1e-12)));
  }
  res.front() = config.n_min;
  res.back() = config.n_max;
  return res;
}

std::uint64_t level_entry_count(std::uint32_t resolution, int dims, int log2_table) {
  const std::uint64_t cap = std::uint64_t{1} << log2_table;
  std::uint64_t n = 1;
  for (int d = 0; d < dims; ++d) {
    n *= static_cast<std::uint64_t>(resolution) + 1;
    if (n >= cap) return cap;
  }
  return n;
}

namespace {

bool level_is_hashed(std::uint32_t resolution, int dims, int log2_table) {
  const std::uint64_t cap = std::uint64_t{1} << log2_table;
  std::uint64_t n = 1;
  for (int d = 0; d < dims; ++d) {
    n *= static_cast<std::uint64_t>(resolution) + 1;
    if (n > cap) return true;
  }
  return false;
}

}  // namespace

std::uint64_t hash_index(std::span<const std::uint32_t> coords, std::uint32_t resolution, int log2_table) {
  const int dims = static_cast<int>(coords.size());
  if (dims < 1 || dims > 4) throw ContractViolation("hash_index: dims must be 1..4");
  for (std::uint32_t c : coords) {
    if (c > resolution) throw ContractViolation("hash_index: coordinate exceeds level resolution");
  }
  if (!level_is_hashed(resolution, dims, log2_table)) {
    std::uint64_t idx = 0;
    std::uint64_t stride = 1;
    for (int d = 0; d < dims; ++d) {
      idx += coords[static_cast<std::size_t>(d)] * stride;
      stride *= static_cast<std::uint64_t>(resolution) + 1;
    }
    return idx;
  }
  std::uint32_t h = 0;
  for (int d = 0; d < dims; ++d) h ^= coords[static_cast<std::size_t>(d)] * kHashPrimes[static_cast<std::size_t>(d)];
  return h & static_cast<std::uint32_t>((std::uint64_t{1} << log2_table) - 1);
}

namespace {

template <typename T>
T clamp_unit(T v, bool& clamped) {
  if (v < T(0)) {
    clamped = true;
    return T(0);
  }
  if (v > T(1)) {
    clamped = true;
    return T(1);
  }
  if (!(v == v)) {
    clamped = true;
    return T(0);
  }
  return v;
}

}  // namespace

template <typename T>
HashEncoder<T>::HashEncoder(std::string name, EncoderConfig config) : config_(config) {
  config_.validate();
  resolutions_ = level_resolutions(config_);
  offsets_.assign(1, 0);
  for (std::uint32_t n : resolutions_) {
    offsets_.push_back(offsets_.back() + level_entry_count(n, config_.dims, config_.log2_table));
    hashed_.push_back(level_is_hashed(n, config_.dims, config_.log2_table));
  }
  tables_.name = std::move(name);
  tables_.shape = {offsets_.back(), static_cast<std::size_t>(config_.features)};
  tables_.values.assign(offsets_.back() * static_cast<std::size_t>(config_.features), T(0));
}

template <typename T>
void HashEncoder<T>::init_uniform(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (T& v : tables_.values) v = static_cast<T>(dist(rng));
}

template <typename T>
bool HashEncoder<T>::encode(std::span<const T> point, std::span<T> out) const {
  const int D = config_.dims;
  const int F = config_.features;
  if (point.size() != static_cast<std::size_t>(D) || out.size() != output_width()) {
    throw ConfigError("encode: point or output width mismatch for '" + tables_.name + "'");
  }
  bool clamped = false;
  std::array<T, 4> p{};
  for (int d = 0; d < D; ++d) p[d] = clamp_unit(point[static_cast<std::size_t>(d)], clamped);
  std::fill(out.begin(), out.end(), T(0));
  for (int l = 0; l < config_.levels; ++l) {
    const std::uint32_t n = resolutions_[static_cast<std::size_t>(l)];
    std::array<std::uint32_t, 4> base{};
    std::array<T, 4> frac{};
    for (int d = 0; d < D; ++d) {
      const T pos = p[d] * static_cast<T>(n);
      base[d] = std::min(static_cast<std::uint32_t>(pos), n - 1);
      frac[d] = pos - static_cast<T>(base[d]);
    }
    for (int corner = 0; corner < (1 << D); ++corner) {
      std::array<std::uint32_t, 4> c{};
      T w = T(1);
      for (int d = 0; d < D; ++d) {
        const bool hi = (corner >> d) & 1;
        c[d] = base[d] + (hi ? 1u : 0u);
        w *= hi ? frac[d] : T(1) - frac[d];
      }
      const std::uint64_t idx =
          hash_index(std::span<const std::uint32_t>(c.data(), static_cast<std::size_t>(D)), n, config_.log2_table);
      const T* row = tables_.values.data() + (offsets_[static_cast<std::size_t>(l)] + idx) * F;
      for (int f = 0; f < F; ++f) out[static_cast<std::size_t>(l * F + f)] += w * row[f];
    }
  }
  return clamped;
}

template <typename T>
void HashEncoder<T>::backward(std::span<const T> point, std::span<const T> grad_out, std::span<T> grad_tables) const {
  const int D = config_.dims;
  const int F = config_.features;
  if (grad_out.size() != output_width() || grad_tables.size() != tables_.values.size()) {
    throw ConfigError("encoder backward: width mismatch for '" + tables_.name + "'");
  }
  bool clamped = false;
  std::array<T, 4> p{};
  for (int d = 0; d < D; ++d) p[d] = clamp_unit(point[static_cast<std::size_t>(d)], clamped);
  for (int l = 0; l < config_.levels; ++l) {
    const std::uint32_t n = resolutions_[static_cast<std::size_t>(l)];
    std::array<std::uint32_t, 4> base{};
    std::array<T, 4> frac{};
    for (int d = 0; d < D; ++d) {
      const T pos = p[d] * static_cast<T>(n);
      base[d] = std::min(static_cast<std::uint32_t>(pos), n - 1);
      frac[d] = pos - static_cast<T>(base[d]);
    }
    for (int corner = 0; corner < (1 << D); ++corner) {
      std::array<std::uint32_t, 4> c{};
      T w = T(1);
      for (int d = 0; d < D; ++d) {
        const bool hi = (corner >> d) & 1;
        c[d] = base[d] + (hi ? 1u : 0u);
        w *= hi ? frac[d] : T(1) - frac[d];
      }
      const std::uint64_t idx =
          hash_index(std::span<const std::uint32_t>(c.data(), static_cast<std::size_t>(D)), n, config_.log2_table);
      T* row = grad_tables.data() + (offsets_[static_cast<std::size_t>(l)] + idx) * F;
      for (int f = 0; f < F; ++f) row[f] += w * grad_out[static_cast<std::size_t>(l * F + f)];
    }
  }
}

namespace {

// Per-level constants hoisted out of the batch kernels.
struct LevelInfo {
  std::uint32_t n;
  std::uint32_t stride;  // N + 1, for dense indexing
  std::uint32_t mask;
  bool hashed;
  std::size_t offset;
};

template <int D>
inline std::uint32_t vertex_index(const std::uint32_t* c, const LevelInfo& lv) {
  if (lv.hashed) {
    std::uint32_t h = c[0];
    if constexpr (D > 1) h ^= c[1] * kHashPrimes[1];
    if constexpr (D > 2) h ^= c[2] * kHashPrimes[2];
    if constexpr (D > 3) h ^= c[3] * kHashPrimes[3];
    return h & lv.mask;
  }
  std::uint32_t idx = c[D - 1];
  for (int d = D - 2; d >= 0; --d) idx = idx * lv.stride + c[d];
  return idx;
}

// Visits the 2^D corners of the cell containing `p` (already in [0, 1]).
template <int D, typename T, typename Fn>
inline void for_each_corner(const T* p, const LevelInfo& lv, Fn&& fn) {
  std::uint32_t base[D];
  T frac[D];
  for (int d = 0; d < D; ++d) {
    const T pos = p[d] * static_cast<T>(lv.n);
    base[d] = std::min(static_cast<std::uint32_t>(pos), lv.n - 1);
    frac[d] = pos - static_cast<T>(base[d]);
  }
  for (int corner = 0; corner < (1 << D); ++corner) {
    std::uint32_t c[D];
    T w = T(1);
    for (int d = 0; d < D; ++d) {
      const bool hi = (corner >> d) & 1;
      c[d] = base[d] + (hi ? 1u : 0u);
      w *= hi ? frac[d] : T(1) - frac[d];
    }
    fn(lv.offset + vertex_index<D>(c, lv), w);
  }
}

std::vector<LevelInfo> level_infos(const EncoderConfig& cfg, std::span<const std::uint32_t> res,
                                   std::span<const std::size_t> offsets) {
  std::vector<LevelInfo> out;
  for (std::size_t l = 0; l < res.size(); ++l) {
    out.push_back({res[l], res[l] + 1, static_cast<std::uint32_t>((std::uint64_t{1} << cfg.log2_table) - 1),
                   level_is_hashed(res[l], cfg.dims, cfg.log2_table), offsets[l]});
  }
  return out;
}

}  // namespace

template <typename T>
template <int D>
void HashEncoder<T>::encode_kernel(const Mat<T>& points, Mat<T>& out, Exec exec, EncodeStats* stats) const {
  const auto n = points.cols();
  const int F = config_.features;
  const std::vector<LevelInfo> levels = level_infos(config_, resolutions_, offsets_);
  const T* table = tables_.values.data();
  out.resize(static_cast<Eigen::Index>(output_width()), n);
  std::uint64_t clamped = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamped) if (exec == Exec::Parallel)
  for (Eigen::Index i = 0; i < n; ++i) {
    T p[D];
    bool c = false;
    for (int d = 0; d < D; ++d) p[d] = clamp_unit(points(d, i), c);
    clamped += c ? 1 : 0;
    T* o = out.col(i).data();
    for (std::size_t l = 0; l < levels.size(); ++l) {
      T* ol = o + l * static_cast<std::size_t>(F);
      for (int f = 0; f < F; ++f) ol[f] = T(0);
      for_each_corner<D>(p, levels[l], [&](std::size_t row, T w) {
        const T* r = table + row * static_cast<std::size_t>(F);
        for (int f = 0; f < F; ++f) ol[f] += w * r[f];
      });
    }
  }
  if (stats != nullptr) stats->clamped += clamped;
}

template <typename T>
template <int D>
void HashEncoder<T>::backward_kernel(const Mat<T>& points, const Mat<T>& grad_out, std::span<T> grad,
                                     Exec exec) const {
  const auto n = points.cols();
  const int F = config_.features;
  const std::vector<LevelInfo> levels = level_infos(config_, resolutions_, offsets_);

  auto scatter = [&](Eigen::Index i, T* g) {
    T p[D];
    bool c = false;
    for (int d = 0; d < D; ++d) p[d] = clamp_unit(points(d, i), c);
    const T* go = grad_out.col(i).data();
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const T* gl = go + l * static_cast<std::size_t>(F);
      bool any = false;
      for (int f = 0; f < F; ++f) any |= gl[f] != T(0);
      if (!any) continue;
      for_each_corner<D>(p, levels[l], [&](std::size_t row, T w) {
        T* r = g + row * static_cast<std::size_t>(F);
        for (int f = 0; f < F; ++f) r[f] += w * gl[f];
      });
    }
  };

  const int nt = max_threads(exec);
  if (nt <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) scatter(i, grad.data());
    return;
  }
  std::vector<std::vector<T>> buffers(static_cast<std::size_t>(nt));
#pragma omp parallel num_threads(nt)
  {
    auto& buf = buffers[static_cast<std::size_t>(thread_index())];
    buf.assign(grad.size(), T(0));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) scatter(i, buf.data());
  }
  const auto total = static_cast<std::ptrdiff_t>(grad.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < total; ++j) {
    T acc = grad[static_cast<std::size_t>(j)];
    for (const auto& buf : buffers) {
      if (!buf.empty()) acc += buf[static_cast<std::size_t>(j)];
    }
    grad[static_cast<std::size_t>(j)] = acc;
  }
}

template <typename T>
void HashEncoder<T>::encode_batch(const Mat<T>& points, Mat<T>& out, Exec exec, EncodeStats* stats) const {
  if (points.rows() != config_.dims) throw ConfigError("encode_batch: point dimension mismatch for '" + tables_.name + "'");
  switch (config_.dims) {
    case 1: return encode_kernel<1>(points, out, exec, stats);
    case 2: return encode_kernel<2>(points, out, exec, stats);
    case 3: return encode_kernel<3>(points, out, exec, stats);
    default: return encode_kernel<4>(points, out, exec, stats);
  }
}

template <typename T>
void HashEncoder<T>::backward_batch(const Mat<T>& points, const Mat<T>& grad_out, std::span<T> grad_tables,
                                    Exec exec) const {
  if (grad_tables.size() != tables_.values.size() || grad_out.rows() != static_cast<Eigen::Index>(output_width()) ||
      grad_out.cols() != points.cols()) {
    throw ConfigError("backward_batch: shape mismatch for '" + tables_.name + "'");
  }
  switch (config_.dims) {
    case 1: return backward_kernel<1>(points, grad_out, grad_tables, exec);
    case 2: return backward_kernel<2>(points, grad_out, grad_tables, exec);
    case 3: return backward_kernel<3>(points, grad_out, grad_tables, exec);
    default: return backward_kernel<4>(points, grad_out, grad_tables, exec);
  }
}

// ---------------------------------------------------------------------------

template <typename T>
SpatialEncoder<T>::SpatialEncoder(std::string name, SpatialLayout layout, EncoderConfig config)
    : layout_(layout), config_(config) {
  config_.dims = 3;
  config_.validate();
  auto sub = [&](int dims, int shrink) {
    EncoderConfig c = config_;
    c.dims = dims;
    c.log2_table = config_.log2_table - shrink;
    return c;
  };
  switch (layout_) {
    case SpatialLayout::Voxel:
      grids_.emplace_back(name + ".voxel", sub(3, 0));
      axes_.push_back({0, 1, 2});
      break;
    case SpatialLayout::Merf:
      grids_.emplace_back(name + ".voxel", sub(3, 3));
      axes_.push_back({0, 1, 2});
      [[fallthrough]];
    case SpatialLayout::Plane: {
      const int shrink = layout_ == SpatialLayout::Plane ? 2 : 4;
      grids_.emplace_back(name + ".xy", sub(2, shrink));
      axes_.push_back({0, 1, -1});
      grids_.emplace_back(name + ".yz", sub(2, shrink));
      axes_.push_back({1, 2, -1});
      grids_.emplace_back(name + ".zx", sub(2, shrink));
      axes_.push_back({2, 0, -1});
      break;
    }
  }
}

template <typename T>
std::vector<ParamBlock<T>*> SpatialEncoder<T>::blocks() {
  std::vector<ParamBlock<T>*> out;
  for (auto& g : grids_) out.push_back(&g.tables());
  return out;
}

template <typename T>
std::vector<const ParamBlock<T>*> SpatialEncoder<T>::blocks() const {
  std::vector<const ParamBlock<T>*> out;
  for (const auto& g : grids_) out.push_back(&g.tables());
  return out;
}

template <typename T>
void SpatialEncoder<T>::init_uniform(std::mt19937_64& rng, double scale) {
  for (auto& g : grids_) g.init_uniform(rng, scale);
}

template <typename T>
Mat<T> SpatialEncoder<T>::project(const Mat<T>& points, std::size_t grid) const {
  const auto& ax = axes_[grid];
  const int dims = grids_[grid].config().dims;
  Mat<T> out(dims, points.cols());
  for (int d = 0; d < dims; ++d) out.row(d) = points.row(ax[static_cast<std::size_t>(d)]);
  return out;
}

template <typename T>
std::vector<T> SpatialEncoder<T>::encode(std::span<const T> point3) const {
  if (point3.size() != 3) throw ConfigError("spatial encode: expected a 3-D point");
  std::vector<T> out(output_width(), T(0));
  std::vector<T> tmp(output_width());
  for (std::size_t g = 0; g < grids_.size(); ++g) {
    const auto& ax = axes_[g];
    std::array<T, 3> q{};
    const int dims = grids_[g].config().dims;
    for (int d = 0; d < dims; ++d) q[static_cast<std::size_t>(d)] = point3[static_cast<std::size_t>(ax[static_cast<std::size_t>(d)])];
    grids_[g].encode(std::span<const T>(q.data(), static_cast<std::size_t>(dims)), tmp);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tmp[i];
  }
  return out;
}

template <typename T>
void SpatialEncoder<T>::encode_batch(const Mat<T>& points, Mat<T>& out, Exec exec, EncodeStats* stats) const {
  if (points.rows() != 3) throw ConfigError("spatial encode_batch: expected 3 x n points");
  if (layout_ == SpatialLayout::Voxel) {
    grids_[0].encode_batch(points, out, exec, stats);
    return;
  }
  Mat<T> tmp;
  for (std::size_t g = 0; g < grids_.size(); ++g) {
    const bool voxel = grids_[g].config().dims == 3;
    Mat<T>& target = g == 0 ? out : tmp;
    if (voxel) {
      grids_[g].encode_batch(points, target, exec, stats);
    } else {
      grids_[g].encode_batch(project(points, g), target, exec, g == 0 ? stats : nullptr);
    }
    if (g > 0) out += tmp;
  }
}

template <typename T>
void SpatialEncoder<T>::backward_batch(const Mat<T>& points, const Mat<T>& grad_out, const GradSink<T>& sink,
                                       Exec exec) const {
  for (std::size_t g = 0; g < grids_.size(); ++g) {
    std::span<T> grad = sink.find(grids_[g].tables());
    if (grad.empty()) continue;
    if (grids_[g].config().dims == 3) {
      grids_[g].backward_batch(points, grad_out, grad, exec);
    } else {
      grids_[g].backward_batch(project(points, g), grad_out, grad, exec);
    }
  }
}

template <typename T>
std::vector<T> encode_plane(const HashEncoder<T>& xy, const HashEncoder<T>& yz, const HashEncoder<T>& zx,
                            std::span<const T> p) {
  std::vector<T> out(xy.output_width(), T(0));
  std::vector<T> tmp(xy.output_width());
  const std::array<std::array<T, 2>, 3> proj = {{{p[0], p[1]}, {p[1], p[2]}, {p[2], p[0]}}};
  const std::array<const HashEncoder<T>*, 3> grids = {&xy, &yz, &zx};
  for (std::size_t g = 0; g < 3; ++g) {
    grids[g]->encode(proj[g], tmp);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tmp[i];
  }
  return out;
}

template <typename T>
std::vector<T> encode_merf(const HashEncoder<T>& voxel, const HashEncoder<T>& xy, const HashEncoder<T>& yz,
                           const HashEncoder<T>& zx, std::span<const T> point3) {
  std::vector<T> out = encode_plane(xy, yz, zx, point3);
  std::vector<T> v(voxel.output_width());
  voxel.encode(point3, v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
TemporalEncoder<T>::TemporalEncoder(std::string name, TemporalMode mode, EncoderConfig config) : mode_(mode) {
  switch (mode_) {
    case TemporalMode::Hash:
      config.dims = 1;
      grid_ = HashEncoder<T>(name + ".grid", config);
      break;
    case TemporalMode::Hash4D:
      config.dims = 4;
      grid_ = HashEncoder<T>(name + ".grid4d", config);
      break;
    case TemporalMode::FreqMlp:
      mlp_ = Mlp<T>(name + ".mlp", MlpShape{2 * kTimeFrequencies, {}, kTimeMlpWidth});
      break;
    case TemporalMode::Freq:
      break;
  }
}

template <typename T>
std::size_t TemporalEncoder<T>::output_width() const {
  switch (mode_) {
    case TemporalMode::Hash:
    case TemporalMode::Hash4D: return grid_.output_width();
    case TemporalMode::Freq: return 2 * kTimeFrequencies;
    case TemporalMode::FreqMlp: return kTimeMlpWidth;
  }
  return 0;
}

template <typename T>
std::vector<ParamBlock<T>*> TemporalEncoder<T>::blocks() {
  if (mode_ == TemporalMode::Hash || mode_ == TemporalMode::Hash4D) return {&grid_.tables()};
  if (mode_ == TemporalMode::FreqMlp) return {&mlp_.params()};
  return {};
}

template <typename T>
std::vector<const ParamBlock<T>*> TemporalEncoder<T>::blocks() const {
  if (mode_ == TemporalMode::Hash || mode_ == TemporalMode::Hash4D) return {&grid_.tables()};
  if (mode_ == TemporalMode::FreqMlp) return {&mlp_.params()};
  return {};
}

template <typename T>
void TemporalEncoder<T>::init(std::mt19937_64& rng, double table_scale) {
  if (mode_ == TemporalMode::Hash || mode_ == TemporalMode::Hash4D) grid_.init_uniform(rng, table_scale);
  if (mode_ == TemporalMode::FreqMlp) mlp_.init_uniform(rng);
}

namespace {

template <typename T>
void sinusoids(const Mat<T>& coords, Mat<T>& out) {
  out.resize(2 * kTimeFrequencies, coords.cols());
  for (Eigen::Index i = 0; i < coords.cols(); ++i) {
    const double t = static_cast<double>(coords(coords.rows() - 1, i));
    for (int k = 0; k < kTimeFrequencies; ++k) {
      const double arg = std::ldexp(std::numbers::pi, k) * t;
      out(2 * k, i) = static_cast<T>(std::sin(arg));
      out(2 * k + 1, i) = static_cast<T>(std::cos(arg));
    }
  }
}

}  // namespace

template <typename T>
void TemporalEncoder<T>::encode_batch(const Mat<T>& coords, Mat<T>& out, Workspace& ws, Exec exec) const {
  if (coords.rows() != static_cast<Eigen::Index>(input_dims())) {
    throw ConfigError("temporal encode_batch: expected " + std::to_string(input_dims()) + " x n coordinates");
  }
  switch (mode_) {
    case TemporalMode::Hash:
    case TemporalMode::Hash4D: grid_.encode_batch(coords, out, exec); break;
    case TemporalMode::Freq: sinusoids(coords, out); break;
    case TemporalMode::FreqMlp:
      sinusoids(coords, ws.freq);
      out = mlp_.forward_batch(ws.freq, ws.mlp);
      break;
  }
}

template <typename T>
void TemporalEncoder<T>::backward_batch(const Mat<T>& coords, const Mat<T>& grad_out, Workspace& ws,
                                        const GradSink<T>& sink, Exec exec) const {
  switch (mode_) {
    case TemporalMode::Hash:
    case TemporalMode::Hash4D: {
      std::span<T> g = sink.find(grid_.tables());
      if (!g.empty()) grid_.backward_batch(coords, grad_out, g, exec);
      break;
    }
    case TemporalMode::Freq: break;
    case TemporalMode::FreqMlp: {
      std::span<T> g = sink.find(mlp_.params());
      if (!g.empty()) mlp_.backward_batch(grad_out, ws.mlp, g.data(), nullptr);
      break;
    }
  }
}

std::string to_string(SpatialLayout layout) {
  switch (layout) {
    case SpatialLayout::Voxel: return "voxel";
    case SpatialLayout::Plane: return "plane";
    case SpatialLayout::Merf: return "merf";
  }
  return "?";
}

std::string to_string(TemporalMode mode) {
  switch (mode) {
    case TemporalMode::Hash: return "hash";
    case TemporalMode::Freq: return "freq";
    case TemporalMode::FreqMlp: return "freq_mlp";
    case TemporalMode::Hash4D: return "hash4d";
  }
  return "?";
}

SpatialLayout parse_spatial_layout(const std::string& s) {
  if (s == "voxel") return SpatialLayout::Voxel;
  if (s == "plane") return SpatialLayout::Plane;
  if (s == "merf") return SpatialLayout::Merf;
  throw ConfigError("unknown spatial layout '" + s + "'");
}

TemporalMode parse_temporal_mode(const std::string& s) {
  if (s == "hash") return TemporalMode::Hash;
  if (s == "freq") return TemporalMode::Freq;
  if (s == "freq_mlp") return TemporalMode::FreqMlp;
  if (s == "hash4d") return TemporalMode::Hash4D;
  throw ConfigError("unknown temporal mode '" + s + "'");
}

template class HashEncoder<float>;
template class HashEncoder<double>;
template class SpatialEncoder<float>;
template class SpatialEncoder<double>;
template class TemporalEncoder<float>;
template class TemporalEncoder<double>;

template std::vector<float> encode_plane(const HashEncoder<float>&, const HashEncoder<float>&,
                                         const HashEncoder<float>&, std::span<const float>);
template std::vector<double> encode_plane(const HashEncoder<double>&, const HashEncoder<double>&,
                                          const HashEncoder<double>&, std::span<const double>);
template std::vector<float> encode_merf(const HashEncoder<float>&, const HashEncoder<float>&,
                                        const HashEncoder<float>&, const HashEncoder<float>&,
                                        std::span<const float>);
template std::vector<double> encode_merf(const HashEncoder<double>&, const HashEncoder<double>&,
                                         const HashEncoder<double>&, const HashEncoder<double>&,
                                         std::span<const double>);

}  // namespace cdngp
