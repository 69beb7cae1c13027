// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/field.hpp"

#include <algorithm>
#include <cmath>

#include "cdngp/error.hpp"

namespace cdngp {

std::string to_string(FusionMode mode) { return mode == FusionMode::Sum ? "sum" : "concat"; }

std::string to_string(Composition mode) {
  switch (mode) {
    case Composition::Fused: return "fused";
    case Composition::Full: return "full";
    case Composition::StaticDynamic: return "static_dynamic";
  }
  return "?";
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "sum") return FusionMode::Sum;
  if (s == "concat") return FusionMode::Concat;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

Composition parse_composition(const std::string& s) {
  if (s == "fused") return Composition::Fused;
  if (s == "full") return Composition::Full;
  if (s == "static_dynamic") return Composition::StaticDynamic;
  throw ConfigError("unknown composition '" + s + "'");
}

template <typename T>
std::vector<T> fuse_features(std::span<const T> base, std::span<const T> aux, FusionMode mode) {
  if (mode == FusionMode::Sum) {
    if (base.size() != aux.size()) {
      throw ConfigError("fuse_features: sum of widths " + std::to_string(base.size()) + " and " +
                        std::to_string(aux.size()));
    }
    std::vector<T> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + aux[i];
    return out;
  }
  std::vector<T> out(base.begin(), base.end());
  out.insert(out.end(), aux.begin(), aux.end());
  return out;
}

template <typename T>
bool encode_direction(std::span<const T> d, std::span<T, kDirectionWidth> out) {
  if (d.size() != 3) throw ConfigError("encode_direction: expected 3 components");
  double x = d[0], y = d[1], z = d[2];
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("encode_direction: zero or non-finite direction");
  const bool unit = std::abs(norm - 1.0) <= 1e-4;
  x /= norm;
  y /= norm;
  z /= norm;
  const double x2 = x * x, y2 = y * y, z2 = z * z;
  const double v[kDirectionWidth] = {
      0.28209479177387814,
      -0.48860251190291987 * y,
      0.48860251190291987 * z,
      -0.48860251190291987 * x,
      1.0925484305920792 * x * y,
      -1.0925484305920792 * y * z,
      0.94617469575755997 * z2 - 0.31539156525251999,
      -1.0925484305920792 * x * z,
      0.54627421529603959 * (x2 - y2),
      0.59004358992664352 * y * (-3.0 * x2 + y2),
      2.8906114426405538 * x * y * z,
      0.45704579946446572 * y * (1.0 - 5.0 * z2),
      0.3731763325901154 * z * (5.0 * z2 - 3.0),
      0.45704579946446572 * x * (1.0 - 5.0 * z2),
      1.4453057213202769 * z * (x2 - y2),
      0.59004358992664352 * x * (-x2 + 3.0 * y2),
  };
  for (std::size_t i = 0; i < kDirectionWidth; ++i) out[i] = static_cast<T>(v[i]);
  return unit;
}

void FieldArch::validate() const {
  spatial.validate();
  if (spatial.dims != 3) throw ConfigError("field: spatial grid must be 3-D");
  if (aux_log2 < 4 || aux_log2 > 30) throw ConfigError("field: aux_log2 out of range");
  const int min_log2 = layout == SpatialLayout::Merf ? 4 : layout == SpatialLayout::Plane ? 2 : 0;
  if (spatial.log2_table - min_log2 < 1 || aux_log2 - min_log2 < 1) {
    throw ConfigError("field: table too small for layout " + to_string(layout));
  }
  if (temporal == TemporalMode::Hash) temporal_grid.validate();
  if (latent == 0) throw ConfigError("field: latent width must be positive");
  if (composition != Composition::Fused && fusion == FusionMode::Concat) {
    throw ConfigError("field: concat fusion requires fused composition");
  }
  if (composition != Composition::Fused && temporal == TemporalMode::Hash4D) {
    throw ConfigError("field: the 4-D temporal grid requires fused composition");
  }
}

EncoderConfig FieldArch::spatial_config(int log2_table) const {
  EncoderConfig c = spatial;
  c.log2_table = log2_table;
  return c;
}

EncoderConfig FieldArch::grid4d_config(int log2_table) const {
  EncoderConfig c = spatial;
  c.dims = 4;
  c.log2_table = log2_table;
  return c;
}

bool FieldArch::branch_has_temporal(std::size_t k) const {
  return !(k == 0 && composition == Composition::StaticDynamic);
}

std::size_t FieldArch::temporal_width(std::size_t k) const {
  if (!branch_has_temporal(k)) return 0;
  switch (temporal) {
    case TemporalMode::Hash: return static_cast<std::size_t>(temporal_grid.levels * temporal_grid.features);
    case TemporalMode::Hash4D: return spatial_width();
    case TemporalMode::Freq: return 2 * kTimeFrequencies;
    case TemporalMode::FreqMlp: return kTimeMlpWidth;
  }
  return 0;
}

std::size_t FieldArch::sigma_input_width(std::size_t k) const {
  const std::size_t spatial_in = fusion == FusionMode::Concat ? 2 * spatial_width() : spatial_width();
  return spatial_in + temporal_width(k);
}

template <typename T>
std::vector<ParamBlock<T>*> Branch<T>::blocks() {
  std::vector<ParamBlock<T>*> out;
  if (aux) {
    for (auto* b : aux->blocks()) out.push_back(b);
  }
  if (temporal) {
    for (auto* b : temporal->blocks()) out.push_back(b);
  }
  out.push_back(&sigma_net.params());
  out.push_back(&color_net.params());
  return out;
}

template <typename T>
std::vector<const ParamBlock<T>*> Branch<T>::blocks() const {
  std::vector<const ParamBlock<T>*> out;
  if (aux) {
    for (const auto* b : aux->blocks()) out.push_back(b);
  }
  if (temporal) {
    for (const auto* b : temporal->blocks()) out.push_back(b);
  }
  out.push_back(&sigma_net.params());
  out.push_back(&color_net.params());
  return out;
}

template <typename T>
std::size_t Branch<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* b : blocks()) n += b->size();
  return n;
}

template <typename T>
Branch<T> make_branch(const FieldArch& arch, std::size_t k) {
  arch.validate();
  Branch<T> br;
  br.index = k;
  const std::string prefix = "branch" + std::to_string(k);
  const bool fused = arch.composition == Composition::Fused;
  if (k > 0) {
    // Composition branches own a full-size stand-alone field.
    const int log2 = fused ? arch.aux_log2 : arch.spatial.log2_table;
    br.aux.emplace(prefix + ".aux", arch.layout, arch.spatial_config(log2));
  }
  if (arch.branch_has_temporal(k)) {
    EncoderConfig tc = arch.temporal_grid;
    if (arch.temporal == TemporalMode::Hash4D) tc = arch.grid4d_config(k == 0 ? arch.spatial.log2_table : arch.aux_log2);
    br.temporal.emplace(prefix + ".time", arch.temporal, tc);
  }
  br.sigma_net = Mlp<T>(prefix + ".sigma_net", MlpShape{arch.sigma_input_width(k), arch.hidden_sigma, 1 + arch.latent});
  br.color_net = Mlp<T>(prefix + ".color_net", MlpShape{arch.latent + kDirectionWidth, arch.hidden_color, 3});
  return br;
}

template <typename T>
void init_branch_params(Branch<T>& branch, const FieldArch& arch, std::mt19937_64& rng) {
  if (branch.aux) branch.aux->init_uniform(rng, arch.table_init);
  if (branch.temporal) branch.temporal->init(rng, arch.table_init);
  branch.sigma_net.init_uniform(rng);
  branch.color_net.init_uniform(rng);
}

FieldSample compose_fields(const FieldSample& a, const FieldSample& b) {
  FieldSample out;
  out.sigma = a.sigma + b.sigma;
  for (int c = 0; c < 3; ++c) out.color[c] = std::clamp(a.color[c] + b.color[c], 0.0, 1.0);
  return out;
}

template <typename T>
FieldModel<T>::FieldModel(const FieldArch& arch, const SpatialEncoder<T>& base_tables, const Branch<T>& branch,
                          const Branch<T>* base_branch)
    : arch_(arch) {
  const std::size_t k = branch.index;
  if (arch.composition == Composition::Fused) {
    current_.base = &base_tables;
    current_.aux = branch.aux ? &*branch.aux : nullptr;
    current_.concat = arch.fusion == FusionMode::Concat;
    current_.l1 = current_.aux;
  } else if (k == 0) {
    current_.base = &base_tables;
  } else {
    if (!branch.aux) throw ContractViolation("composition branch without its own tables");
    if (base_branch == nullptr) throw ContractViolation("composition branch needs the base branch");
    current_.base = &*branch.aux;
    current_.l1 = current_.base;
    Network b;
    b.base = &base_tables;
    b.temporal = base_branch->temporal ? &*base_branch->temporal : nullptr;
    b.sigma_net = &base_branch->sigma_net;
    b.color_net = &base_branch->color_net;
    base_ = b;
  }
  current_.temporal = branch.temporal ? &*branch.temporal : nullptr;
  current_.sigma_net = &branch.sigma_net;
  current_.color_net = &branch.color_net;
}

template <typename T>
bool FieldModel<T>::has_l1_target() const {
  return current_.l1 != nullptr;
}

namespace {

template <typename T>
const T kLogMaxDensity = static_cast<T>(std::log(kMaxDensity));

template <typename T>
void sample_ray_index(const SampleBatch<T>& batch, std::vector<std::uint32_t>& out) {
  out.resize(batch.n_samples());
  for (std::size_t r = 0; r < batch.n_rays(); ++r) {
    for (std::uint32_t s = batch.ray_offsets[r]; s < batch.ray_offsets[r + 1]; ++s) out[s] = static_cast<std::uint32_t>(r);
  }
}

}  // namespace

template <typename T>
void FieldModel<T>::forward_network(const Network& net, const SampleBatch<T>& batch, const Mat<T>& sh,
                                    NetworkCache<T>& c, Exec exec, bool need_color) const {
  const auto S = static_cast<Eigen::Index>(batch.n_samples());
  const auto W = static_cast<Eigen::Index>(arch_.spatial_width());
  net.base->encode_batch(batch.positions, c.base_feat, exec);
  if (net.aux != nullptr) {
    net.aux->encode_batch(batch.positions, c.aux_feat, exec);
  } else {
    c.aux_feat.resize(0, 0);
  }
  const Eigen::Index spatial_in = net.concat ? 2 * W : W;
  Eigen::Index temporal_in = 0;
  std::vector<std::uint32_t> ray_of;
  if (net.temporal != nullptr) {
    temporal_in = static_cast<Eigen::Index>(net.temporal->output_width());
    if (net.temporal->per_sample()) {
      sample_ray_index(batch, ray_of);
      c.temporal_coords.resize(4, S);
      c.temporal_coords.topRows(3) = batch.positions;
      for (Eigen::Index s = 0; s < S; ++s) c.temporal_coords(3, s) = batch.times[ray_of[s]];
    } else {
      c.temporal_coords.resize(1, static_cast<Eigen::Index>(batch.n_rays()));
      for (std::size_t r = 0; r < batch.n_rays(); ++r) c.temporal_coords(0, static_cast<Eigen::Index>(r)) = batch.times[r];
    }
    net.temporal->encode_batch(c.temporal_coords, c.temporal_feat, c.temporal_ws, exec);
  }
  c.sigma_in.resize(spatial_in + temporal_in, S);
  if (net.concat) {
    c.sigma_in.topRows(W) = c.base_feat;
    if (net.aux != nullptr) {
      c.sigma_in.middleRows(W, W) = c.aux_feat;
    } else {
      c.sigma_in.middleRows(W, W).setZero();
    }
  } else if (net.aux != nullptr) {
    c.sigma_in.topRows(W) = c.base_feat + c.aux_feat;
  } else {
    c.sigma_in.topRows(W) = c.base_feat;
  }
  if (net.temporal != nullptr) {
    if (net.temporal->per_sample()) {
      c.sigma_in.bottomRows(temporal_in) = c.temporal_feat;
    } else {
      for (std::size_t r = 0; r < batch.n_rays(); ++r) {
        for (auto s = batch.ray_offsets[r]; s < batch.ray_offsets[r + 1]; ++s) {
          c.sigma_in.col(s).bottomRows(temporal_in) = c.temporal_feat.col(static_cast<Eigen::Index>(r));
        }
      }
    }
  }
  const Mat<T>& o1 = net.sigma_net->forward_batch(c.sigma_in, c.sigma_ws);
  c.sigma.resize(static_cast<std::size_t>(S));
  for (Eigen::Index s = 0; s < S; ++s) c.sigma[s] = std::exp(std::min(o1(0, s), kLogMaxDensity<T>));
  if (!need_color) return;
  const auto H = static_cast<Eigen::Index>(arch_.latent);
  c.color_in.resize(H + static_cast<Eigen::Index>(kDirectionWidth), S);
  c.color_in.topRows(H) = o1.bottomRows(H);
  for (std::size_t r = 0; r < batch.n_rays(); ++r) {
    for (auto s = batch.ray_offsets[r]; s < batch.ray_offsets[r + 1]; ++s) {
      c.color_in.col(s).bottomRows(kDirectionWidth) = sh.col(static_cast<Eigen::Index>(r));
    }
  }
  const Mat<T>& o2 = net.color_net->forward_batch(c.color_in, c.color_ws);
  c.color = (T(1) / (T(1) + (-o2.array()).exp())).matrix();
}

template <typename T>
void FieldModel<T>::forward(const SampleBatch<T>& batch, FieldCache<T>& cache, Exec exec, bool need_color) const {
  const auto R = static_cast<Eigen::Index>(batch.n_rays());
  if (batch.ray_offsets.empty() || batch.ray_offsets.back() != batch.n_samples() ||
      static_cast<std::size_t>(batch.positions.cols()) != batch.n_samples() || batch.times.size() != batch.n_rays()) {
    throw ContractViolation("sample batch: inconsistent sizes");
  }
  if (need_color) {
    if (batch.directions.cols() != R) throw ContractViolation("sample batch: one direction per ray required");
    cache.sh.resize(static_cast<Eigen::Index>(kDirectionWidth), R);
    for (Eigen::Index r = 0; r < R; ++r) {
      const T d[3] = {batch.directions(0, r), batch.directions(1, r), batch.directions(2, r)};
      encode_direction<T>(std::span<const T>(d, 3),
                          std::span<T, kDirectionWidth>(cache.sh.col(r).data(), kDirectionWidth));
    }
  }
  forward_network(current_, batch, cache.sh, cache.current, exec, need_color);
  if (!base_) {
    cache.sigma = cache.current.sigma;
    if (need_color) cache.color = cache.current.color;
    return;
  }
  forward_network(*base_, batch, cache.sh, cache.base, exec, need_color);
  cache.sigma.resize(batch.n_samples());
  for (std::size_t s = 0; s < batch.n_samples(); ++s) cache.sigma[s] = cache.current.sigma[s] + cache.base.sigma[s];
  if (need_color) {
    cache.color_raw = cache.current.color + cache.base.color;
    cache.color = cache.color_raw.cwiseMax(T(0)).cwiseMin(T(1));
  }
}

template <typename T>
void FieldModel<T>::backward_network(const Network& net, const SampleBatch<T>& batch, NetworkCache<T>& c,
                                     std::span<const T> grad_sigma, const Mat<T>& grad_color, T l1_scale,
                                     const GradSink<T>& sink, Exec exec) const {
  const auto S = static_cast<Eigen::Index>(batch.n_samples());
  const auto W = static_cast<Eigen::Index>(arch_.spatial_width());
  const auto H = static_cast<Eigen::Index>(arch_.latent);

  Mat<T> d_o2 = (grad_color.array() * c.color.array() * (T(1) - c.color.array())).matrix();
  Mat<T> d_x2;
  std::span<T> g_color = sink.find(net.color_net->params());
  net.color_net->backward_batch(std::move(d_o2), c.color_ws, g_color.empty() ? nullptr : g_color.data(), &d_x2);

  const Mat<T>& o1 = c.sigma_ws.act.back();
  Mat<T> d_o1(1 + H, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    d_o1(0, s) = o1(0, s) < kLogMaxDensity<T> ? grad_sigma[s] * c.sigma[s] : T(0);
  }
  d_o1.bottomRows(H) = d_x2.topRows(H);

  std::span<T> g_sigma = sink.find(net.sigma_net->params());
  const bool base_trainable = [&] {
    for (const auto* b : net.base->blocks()) {
      if (sink.trainable(*b)) return true;
    }
    return false;
  }();
  const bool aux_trainable = net.aux != nullptr;
  const bool time_trainable = net.temporal != nullptr && !net.temporal->blocks().empty();
  const bool need_input = base_trainable || aux_trainable || time_trainable;
  Mat<T> d_x1;
  net.sigma_net->backward_batch(std::move(d_o1), c.sigma_ws, g_sigma.empty() ? nullptr : g_sigma.data(),
                                need_input ? &d_x1 : nullptr);
  if (!need_input) return;

  const Mat<T>* l1_feat = nullptr;
  if (net.l1 != nullptr) l1_feat = net.l1 == net.aux ? &c.aux_feat : &c.base_feat;
  auto add_l1 = [&](Mat<T>& g, const Mat<T>& feat) {
    if (l1_scale == T(0)) return;
    g.array() += l1_scale * feat.array().sign();
  };

  if (base_trainable) {
    Mat<T> g = d_x1.topRows(W);
    if (l1_feat == &c.base_feat) add_l1(g, c.base_feat);
    net.base->backward_batch(batch.positions, g, sink, exec);
  }
  if (net.aux != nullptr) {
    Mat<T> g = net.concat ? Mat<T>(d_x1.middleRows(W, W)) : Mat<T>(d_x1.topRows(W));
    if (l1_feat == &c.aux_feat) add_l1(g, c.aux_feat);
    net.aux->backward_batch(batch.positions, g, sink, exec);
  }
  if (time_trainable) {
    const Eigen::Index spatial_in = net.concat ? 2 * W : W;
    const auto Wt = static_cast<Eigen::Index>(net.temporal->output_width());
    Mat<T> g;
    if (net.temporal->per_sample()) {
      g = d_x1.bottomRows(d_x1.rows() - spatial_in);
    } else {
      g.setZero(Wt, static_cast<Eigen::Index>(batch.n_rays()));
      for (std::size_t r = 0; r < batch.n_rays(); ++r) {
        for (auto s = batch.ray_offsets[r]; s < batch.ray_offsets[r + 1]; ++s) {
          g.col(static_cast<Eigen::Index>(r)) += d_x1.col(s).bottomRows(Wt);
        }
      }
    }
    net.temporal->backward_batch(c.temporal_coords, g, c.temporal_ws, sink, exec);
  }
}

template <typename T>
void FieldModel<T>::backward(const SampleBatch<T>& batch, FieldCache<T>& cache, std::span<const T> grad_sigma,
                             const Mat<T>& grad_color, T l1_scale, const GradSink<T>& sink, Exec exec) const {
  if (grad_sigma.size() != batch.n_samples() || static_cast<std::size_t>(grad_color.cols()) != batch.n_samples()) {
    throw ContractViolation("field backward: gradient sizes do not match the batch");
  }
  if (!base_) {
    backward_network(current_, batch, cache.current, grad_sigma, grad_color, l1_scale, sink, exec);
    return;
  }
  // Composed colour is clamped; outside [0, 1] the gradient is zero. The
  // frozen base network receives no update.
  Mat<T> g = grad_color;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const T raw = cache.color_raw.data()[i];
    if (raw < T(0) || raw > T(1)) g.data()[i] = T(0);
  }
  backward_network(current_, batch, cache.current, grad_sigma, g, l1_scale, sink, exec);
}

template <typename T>
T FieldModel<T>::spatial_l1_sum(const FieldCache<T>& cache) const {
  if (current_.l1 == nullptr) return T(0);
  const Mat<T>& f = current_.l1 == current_.aux ? cache.current.aux_feat : cache.current.base_feat;
  return f.cwiseAbs().sum();
}

template <typename T>
void FieldModel<T>::density(const Mat<T>& positions, std::span<const T> times, std::vector<T>& sigma, Exec exec) const {
  const auto n = static_cast<std::size_t>(positions.cols());
  if (times.size() != n) throw ContractViolation("density: one time per point required");
  SampleBatch<T> batch;
  batch.positions = positions;
  batch.times.assign(times.begin(), times.end());
  batch.ray_offsets.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) batch.ray_offsets[i] = static_cast<std::uint32_t>(i);
  batch.deltas.assign(n, T(0));
  FieldCache<T> cache;
  forward(batch, cache, exec, false);
  sigma = std::move(cache.sigma);
}

namespace {

template <typename T>
SampleBatch<T> single_batch(std::span<const T, 3> x, T t, std::span<const T, 3> d) {
  SampleBatch<T> b;
  b.positions.resize(3, 1);
  b.directions.resize(3, 1);
  for (int i = 0; i < 3; ++i) {
    b.positions(i, 0) = x[i];
    b.directions(i, 0) = d[i];
  }
  b.times = {t};
  b.ray_offsets = {0, 1};
  b.deltas = {T(0)};
  return b;
}

template <typename T>
FieldSample to_sample(const NetworkCache<T>& c, std::size_t latent) {
  FieldSample out;
  out.sigma = static_cast<double>(c.sigma[0]);
  for (int i = 0; i < 3; ++i) out.color[i] = static_cast<double>(c.color(i, 0));
  const Mat<T>& o1 = c.sigma_ws.act.back();
  out.latent.resize(latent);
  for (std::size_t i = 0; i < latent; ++i) out.latent[i] = static_cast<double>(o1(static_cast<Eigen::Index>(1 + i), 0));
  return out;
}

}  // namespace

template <typename T>
FieldSample FieldModel<T>::query(std::span<const T, 3> x, T t, std::span<const T, 3> d) const {
  const SampleBatch<T> b = single_batch(x, t, d);
  FieldCache<T> cache;
  forward(b, cache, Exec::Serial, true);
  FieldSample out = to_sample(cache.current, arch_.latent);
  if (base_) {
    FieldSample composed = compose_fields(to_sample(cache.base, arch_.latent), out);
    composed.latent = std::move(out.latent);
    return composed;
  }
  return out;
}

template <typename T>
FieldSample FieldModel<T>::query_base(std::span<const T, 3> x, T t, std::span<const T, 3> d) const {
  if (!base_) throw ContractViolation("query_base: model has no separate base field");
  const SampleBatch<T> b = single_batch(x, t, d);
  FieldCache<T> cache;
  cache.sh.resize(static_cast<Eigen::Index>(kDirectionWidth), 1);
  encode_direction<T>(std::span<const T>(d.data(), 3), std::span<T, kDirectionWidth>(cache.sh.data(), kDirectionWidth));
  forward_network(*base_, b, cache.sh, cache.base, Exec::Serial, true);
  return to_sample(cache.base, arch_.latent);
}

#define CDNGP_FIELD_INSTANTIATE(T)                                                                     \
  template std::vector<T> fuse_features<T>(std::span<const T>, std::span<const T>, FusionMode);        \
  template bool encode_direction<T>(std::span<const T>, std::span<T, kDirectionWidth>);                \
  template struct Branch<T>;                                                                           \
  template Branch<T> make_branch<T>(const FieldArch&, std::size_t);                                    \
  template void init_branch_params<T>(Branch<T>&, const FieldArch&, std::mt19937_64&);                 \
  template class FieldModel<T>;

CDNGP_FIELD_INSTANTIATE(float)
CDNGP_FIELD_INSTANTIATE(double)

}  // namespace cdngp
