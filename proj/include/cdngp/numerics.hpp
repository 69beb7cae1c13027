// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cdngp {

/// Column-major batch matrix: one column per sample.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Flat storage with Eigen's maximum alignment, so mapped views vectorize
/// identically regardless of where the allocation lands.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
using RowMajorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline constexpr double kLeakySlope = 0.01;

/// A named, shaped, flat block of trainable parameters. Unit of
/// optimization, gradient checking and checkpoint serialization.
template <typename T>
struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  AlignedVector<T> values;

  std::size_t size() const { return values.size(); }
};

/// Maps parameter blocks to gradient buffers. Blocks without an entry are
/// frozen and their gradients are skipped entirely.
template <typename T>
class GradSink {
 public:
  void attach(const ParamBlock<T>& block, std::span<T> grad) {
    entries_.push_back({&block, grad});
  }

  std::span<T> find(const ParamBlock<T>& block) const {
    for (const auto& e : entries_) {
      if (e.block == &block) return e.grad;
    }
    return {};
  }

  bool trainable(const ParamBlock<T>& block) const { return !find(block).empty(); }

 private:
  struct Entry {
    const ParamBlock<T>* block;
    std::span<T> grad;
  };
  std::vector<Entry> entries_;
};

template <typename To, typename From>
ParamBlock<To> cast_block(const ParamBlock<From>& src) {
  ParamBlock<To> out{src.name, src.shape, {}};
  out.values.assign(src.values.begin(), src.values.end());
  return out;
}

/// Row-major dense matrix used for single-sample reference computations.
template <typename T>
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static DenseMatrix identity(std::size_t n);
};

template <typename T>
std::vector<T> linear_forward(std::span<const T> input, const DenseMatrix<T>& weights,
                              std::span<const T> bias);

template <typename T>
std::vector<T> leaky_relu(std::span<const T> x, T slope);

/// Layer widths of a fully connected network with LeakyReLU hidden layers
/// and a linear output layer.
struct MlpShape {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t output = 0;

  std::size_t layer_count() const { return hidden.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const { return weight_offset(layer) + fan_in(layer) * fan_out(layer); }
  std::size_t param_count() const { return weight_offset(layer_count()); }

  bool operator==(const MlpShape&) const = default;
};

template <typename T>
class Mlp {
 public:
  struct Workspace {
    const Mat<T>* input = nullptr;
    std::vector<Mat<T>> pre;
    std::vector<Mat<T>> act;  // act[l] is the output of layer l
  };

  struct SampleResult {
    std::vector<T> output;
    std::vector<T> grad_params;
    std::vector<T> grad_input;
  };

  Mlp() = default;
  Mlp(std::string name, MlpShape shape);

  const MlpShape& shape() const { return shape_; }
  ParamBlock<T>& params() { return params_; }
  const ParamBlock<T>& params() const { return params_; }

  /// W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
  void init_uniform(std::mt19937_64& rng);

  DenseMatrix<T> weights(std::size_t layer) const;
  std::span<const T> bias(std::size_t layer) const;

  std::vector<T> forward(std::span<const T> input) const;

  /// Exact reverse-mode pass for one sample.
  SampleResult forward_backward(std::span<const T> input, std::span<const T> grad_output) const;

  /// Batched forward; `x` must outlive the matching backward_batch call.
  const Mat<T>& forward_batch(const Mat<T>& x, Workspace& ws) const;

  /// Accumulates parameter gradients into `grad_params` (may be null for a
  /// frozen network) and writes the input gradient when `grad_input` is set.
  void backward_batch(Mat<T> grad_output, Workspace& ws, T* grad_params, Mat<T>* grad_input) const;

 private:
  MlpShape shape_;
  ParamBlock<T> params_;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.96);
  T epsilon = T(1e-15);

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, T(0)), v(n, T(0)) {}
};

/// Bias-corrected Adam update. Throws NumericalError naming the first NaN
/// gradient index.
template <typename T>
void adam_step(AdamState<T>& state, std::span<T> params, std::span<const T> grads, T lr);

/// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0);

template <typename T>
struct GradCheckBlock {
  std::string name;
  std::span<T> values;
  std::span<const T> analytic;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_block;
  std::size_t worst_index = 0;
};

/// Central-difference check of analytic gradients. Samples at most
/// `max_per_block` coordinates of each block; the error of a coordinate is
/// |analytic - fd| / max(1, |analytic|).
template <typename T>
GradCheckReport finite_diff_check(const std::function<T()>& loss, std::span<GradCheckBlock<T>> blocks,
                                  T h, std::uint64_t seed, std::size_t max_per_block = 512);

extern template struct DenseMatrix<float>;
extern template struct DenseMatrix<double>;
extern template class Mlp<float>;
extern template class Mlp<double>;

}  // namespace cdngp
