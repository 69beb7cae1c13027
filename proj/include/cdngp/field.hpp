// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cdngp/encoders.hpp"
#include "cdngp/numerics.hpp"
#include "cdngp/parallel.hpp"

namespace cdngp {

enum class FusionMode { Sum, Concat };

/// Fused: one network on (base + aux) features. Full / StaticDynamic: the
/// frozen base field and the current branch field are summed in (sigma, c)
/// space; StaticDynamic evaluates the base field without time.
enum class Composition { Fused, Full, StaticDynamic };

inline constexpr double kMaxDensity = 1e4;
inline constexpr std::size_t kDirectionWidth = 16;

std::string to_string(FusionMode mode);
std::string to_string(Composition mode);
FusionMode parse_fusion_mode(const std::string& s);
Composition parse_composition(const std::string& s);

template <typename T>
std::vector<T> fuse_features(std::span<const T> base, std::span<const T> aux, FusionMode mode);

/// Real spherical harmonics, bands 0..3 (16 values). Returns false when `d`
/// was not unit length and had to be normalized.
template <typename T>
bool encode_direction(std::span<const T> d, std::span<T, kDirectionWidth> out);

/// Architecture shared by every branch of a model.
struct FieldArch {
  SpatialLayout layout = SpatialLayout::Voxel;
  FusionMode fusion = FusionMode::Sum;
  TemporalMode temporal = TemporalMode::Hash;
  Composition composition = Composition::Fused;
  /// Spatial grid layout; log2_table holds the base (first branch) size.
  EncoderConfig spatial{3, 12, 2, 19, 16, 2048};
  int aux_log2 = 14;
  EncoderConfig temporal_grid{1, 2, 20, 7, 2, 10};
  std::vector<std::size_t> hidden_sigma{128};
  std::size_t latent = 48;
  std::vector<std::size_t> hidden_color{64};
  double table_init = 1e-4;

  void validate() const;
  std::size_t spatial_width() const { return static_cast<std::size_t>(spatial.levels * spatial.features); }
  EncoderConfig spatial_config(int log2_table) const;
  /// Config of the 4-D grid when temporal == Hash4D.
  EncoderConfig grid4d_config(int log2_table) const;
  /// Whether branch `k` carries a temporal encoder.
  bool branch_has_temporal(std::size_t k) const;
  std::size_t sigma_input_width(std::size_t k) const;
  std::size_t temporal_width(std::size_t k) const;
};

/// Per-chunk parameters: auxiliary spatial tables (absent for the base
/// branch in fused mode), temporal encoder and the two decoders.
template <typename T>
struct Branch {
  std::size_t index = 0;
  std::optional<SpatialEncoder<T>> aux;
  std::optional<TemporalEncoder<T>> temporal;
  Mlp<T> sigma_net;
  Mlp<T> color_net;

  std::vector<ParamBlock<T>*> blocks();
  std::vector<const ParamBlock<T>*> blocks() const;
  std::size_t param_count() const;
};

/// Builds the (zero-valued) parameter structure of branch k.
template <typename T>
Branch<T> make_branch(const FieldArch& arch, std::size_t k);

/// Random initialization of every block of a branch.
template <typename T>
void init_branch_params(Branch<T>& branch, const FieldArch& arch, std::mt19937_64& rng);

/// Samples grouped by ray. Positions are normalized to the scene box.
template <typename T>
struct SampleBatch {
  Mat<T> positions;                      // 3 x S
  Mat<T> directions;                     // 3 x R, unit
  std::vector<T> times;                  // R, chunk-local in [0, 1]
  std::vector<std::uint32_t> ray_offsets{0};  // R + 1
  std::vector<T> deltas;                 // S
  std::vector<T> s_begin;                // S, normalized ray distance
  std::vector<T> s_end;                  // S

  std::size_t n_rays() const { return ray_offsets.size() - 1; }
  std::size_t n_samples() const { return deltas.size(); }
};

template <typename T>
struct NetworkCache {
  Mat<T> base_feat;
  Mat<T> aux_feat;
  Mat<T> temporal_coords;
  Mat<T> temporal_feat;
  typename TemporalEncoder<T>::Workspace temporal_ws;
  Mat<T> sigma_in;
  typename Mlp<T>::Workspace sigma_ws;
  Mat<T> color_in;
  typename Mlp<T>::Workspace color_ws;
  std::vector<T> sigma;
  Mat<T> color;  // 3 x S, after sigmoid
};

template <typename T>
struct FieldCache {
  NetworkCache<T> current;
  NetworkCache<T> base;  // composition modes only
  Mat<T> sh;             // 16 x R
  std::vector<T> sigma;  // S
  Mat<T> color;          // 3 x S
  Mat<T> color_raw;      // 3 x S, unclamped sum (composition modes)
};

struct FieldSample {
  double sigma = 0.0;
  std::array<double, 3> color{};
  std::vector<double> latent;
};

/// (sigma_a + sigma_b, clamp(c_a + c_b, 0, 1)).
FieldSample compose_fields(const FieldSample& a, const FieldSample& b);

/// Non-owning evaluator for branch k of a model: fused features decoded by
/// one network, or the sum of a base and a branch field.
template <typename T>
class FieldModel {
 public:
  FieldModel(const FieldArch& arch, const SpatialEncoder<T>& base_tables, const Branch<T>& branch,
             const Branch<T>* base_branch = nullptr);

  /// Fills cache.sigma / cache.color (and the latent features for backward).
  void forward(const SampleBatch<T>& batch, FieldCache<T>& cache, Exec exec, bool need_color = true) const;

  /// Accumulates gradients of the trainable blocks in `sink`. `l1_scale`
  /// multiplies sign(aux feature) and is added to the auxiliary feature
  /// gradient (the spatial L1 regularizer).
  void backward(const SampleBatch<T>& batch, FieldCache<T>& cache, std::span<const T> grad_sigma,
                const Mat<T>& grad_color, T l1_scale, const GradSink<T>& sink, Exec exec) const;

  /// Sum over samples of ||aux feature||_1 for the last forward pass; zero
  /// when the branch has no auxiliary tables.
  T spatial_l1_sum(const FieldCache<T>& cache) const;
  bool has_l1_target() const;

  /// Density only, for occupancy updates. One time per point.
  void density(const Mat<T>& positions, std::span<const T> times, std::vector<T>& sigma, Exec exec) const;

  /// Single query (x normalized to [0,1]^3, chunk-local t, unit direction).
  FieldSample query(std::span<const T, 3> x, T t, std::span<const T, 3> d) const;

  /// The base network of a composition model on its own.
  FieldSample query_base(std::span<const T, 3> x, T t, std::span<const T, 3> d) const;

 private:
  struct Network {
    const SpatialEncoder<T>* base = nullptr;
    const SpatialEncoder<T>* aux = nullptr;
    bool concat = false;
    const TemporalEncoder<T>* temporal = nullptr;
    const Mlp<T>* sigma_net = nullptr;
    const Mlp<T>* color_net = nullptr;
    const SpatialEncoder<T>* l1 = nullptr;
  };

  void forward_network(const Network& net, const SampleBatch<T>& batch, const Mat<T>& sh, NetworkCache<T>& c,
                       Exec exec, bool need_color) const;
  void backward_network(const Network& net, const SampleBatch<T>& batch, NetworkCache<T>& c,
                        std::span<const T> grad_sigma, const Mat<T>& grad_color, T l1_scale,
                        const GradSink<T>& sink, Exec exec) const;

  const FieldArch& arch_;
  Network current_;
  std::optional<Network> base_;
};

extern template class FieldModel<float>;
extern template class FieldModel<double>;

}  // namespace cdngp
