// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cdngp/error.hpp"

namespace cdngp {

template <typename T>
DenseMatrix<T> DenseMatrix<T>::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
  return m;
}

template <typename T>
std::vector<T> linear_forward(std::span<const T> input, const DenseMatrix<T>& weights,
                              std::span<const T> bias) {
  if (input.size() != weights.cols || bias.size() != weights.rows) {
    throw ConfigError("linear_forward: input " + std::to_string(input.size()) + ", bias " +
                      std::to_string(bias.size()) + " vs weights " + std::to_string(weights.rows) +
                      "x" + std::to_string(weights.cols));
  }
  std::vector<T> out(weights.rows);
  for (std::size_t i = 0; i < weights.rows; ++i) {
    T acc = bias[i];
    for (std::size_t j = 0; j < weights.cols; ++j) acc += weights(i, j) * input[j];
    out[i] = acc;
  }
  return out;
}

template <typename T>
std::vector<T> leaky_relu(std::span<const T> x, T slope) {
  std::vector<T> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [slope](T v) { return v >= T(0) ? v : slope * v; });
  return y;
}

std::size_t MlpShape::fan_in(std::size_t layer) const { return layer == 0 ? input : hidden[layer - 1]; }

std::size_t MlpShape::fan_out(std::size_t layer) const {
  return layer + 1 == layer_count() ? output : hidden[layer];
}

std::size_t MlpShape::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += fan_out(l) * (fan_in(l) + 1);
  return off;
}

template <typename T>
Mlp<T>::Mlp(std::string name, MlpShape shape) : shape_(std::move(shape)) {
  if (shape_.input == 0 || shape_.output == 0) throw ConfigError("mlp '" + name + "': zero-width layer");
  for (std::size_t w : shape_.hidden) {
    if (w == 0) throw ConfigError("mlp '" + name + "': zero-width hidden layer");
  }
  params_.name = std::move(name);
  params_.shape = {shape_.param_count()};
  params_.values.assign(shape_.param_count(), T(0));
}

template <typename T>
void Mlp<T>::init_uniform(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape_.fan_in(l)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    T* w = params_.values.data() + shape_.weight_offset(l);
    for (std::size_t i = 0; i < shape_.fan_in(l) * shape_.fan_out(l); ++i) w[i] = static_cast<T>(dist(rng));
    std::fill_n(params_.values.data() + shape_.bias_offset(l), shape_.fan_out(l), T(0));
  }
}

template <typename T>
DenseMatrix<T> Mlp<T>::weights(std::size_t layer) const {
  DenseMatrix<T> m(shape_.fan_out(layer), shape_.fan_in(layer));
  const T* w = params_.values.data() + shape_.weight_offset(layer);
  std::copy_n(w, m.data.size(), m.data.begin());
  return m;
}

template <typename T>
std::span<const T> Mlp<T>::bias(std::size_t layer) const {
  return {params_.values.data() + shape_.bias_offset(layer), shape_.fan_out(layer)};
}

template <typename T>
std::vector<T> Mlp<T>::forward(std::span<const T> input) const {
  std::vector<T> x(input.begin(), input.end());
  for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
    x = linear_forward<T>(x, weights(l), bias(l));
    if (l + 1 < shape_.layer_count()) x = leaky_relu<T>(x, T(kLeakySlope));
  }
  return x;
}

template <typename T>
typename Mlp<T>::SampleResult Mlp<T>::forward_backward(std::span<const T> input,
                                                        std::span<const T> grad_output) const {
  const std::size_t n_layers = shape_.layer_count();
  if (grad_output.size() != shape_.output) throw ConfigError("mlp '" + params_.name + "': grad_output width");
  std::vector<std::vector<T>> acts{std::vector<T>(input.begin(), input.end())};
  std::vector<std::vector<T>> pres;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pres.push_back(linear_forward<T>(acts.back(), weights(l), bias(l)));
    for (T v : pres.back()) {
      if (!std::isfinite(v)) {
        throw NumericalError("mlp '" + params_.name + "' layer " + std::to_string(l) + ": non-finite value");
      }
    }
    acts.push_back(l + 1 < n_layers ? leaky_relu<T>(pres.back(), T(kLeakySlope)) : pres.back());
  }

  SampleResult result;
  result.output = acts.back();
  result.grad_params.assign(shape_.param_count(), T(0));
  std::vector<T> d(grad_output.begin(), grad_output.end());
  for (std::size_t l = n_layers; l-- > 0;) {
    if (l + 1 < n_layers) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= pres[l][i] >= T(0) ? T(1) : T(kLeakySlope);
    }
    const std::size_t fi = shape_.fan_in(l);
    const std::size_t fo = shape_.fan_out(l);
    T* gw = result.grad_params.data() + shape_.weight_offset(l);
    T* gb = result.grad_params.data() + shape_.bias_offset(l);
    const T* w = params_.values.data() + shape_.weight_offset(l);
    std::vector<T> dx(fi, T(0));
    for (std::size_t i = 0; i < fo; ++i) {
      gb[i] += d[i];
      for (std::size_t j = 0; j < fi; ++j) {
        gw[i * fi + j] += d[i] * acts[l][j];
        dx[j] += w[i * fi + j] * d[i];
      }
    }
    d = std::move(dx);
  }
  result.grad_input = std::move(d);
  return result;
}

template <typename T>
const Mat<T>& Mlp<T>::forward_batch(const Mat<T>& x, Workspace& ws) const {
  const std::size_t n_layers = shape_.layer_count();
  if (static_cast<std::size_t>(x.rows()) != shape_.input) {
    throw ConfigError("mlp '" + params_.name + "': batch input has " + std::to_string(x.rows()) +
                      " rows, expected " + std::to_string(shape_.input));
  }
  ws.input = &x;
  ws.pre.resize(n_layers);
  ws.act.resize(n_layers);
  const T slope = T(kLeakySlope);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto fi = static_cast<Eigen::Index>(shape_.fan_in(l));
    const auto fo = static_cast<Eigen::Index>(shape_.fan_out(l));
    ConstRowMajorMap<T> w(params_.values.data() + shape_.weight_offset(l), fo, fi);
    Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> b(params_.values.data() + shape_.bias_offset(l), fo);
    const Mat<T>& in = l == 0 ? x : ws.act[l - 1];
    ws.pre[l].noalias() = w * in;
    ws.pre[l].colwise() += b;
    if (!ws.pre[l].allFinite()) {
      throw NumericalError("mlp '" + params_.name + "' layer " + std::to_string(l) + ": non-finite value");
    }
    if (l + 1 < n_layers) {
      ws.act[l] = ws.pre[l].cwiseMax(slope * ws.pre[l]);
    } else {
      ws.act[l] = ws.pre[l];
    }
  }
  return ws.act.back();
}

template <typename T>
void Mlp<T>::backward_batch(Mat<T> d, Workspace& ws, T* grad_params, Mat<T>* grad_input) const {
  const std::size_t n_layers = shape_.layer_count();
  const T slope = T(kLeakySlope);
  for (std::size_t l = n_layers; l-- > 0;) {
    if (l + 1 < n_layers) {
      d.array() = (ws.pre[l].array() >= T(0)).select(d.array(), slope * d.array());
    }
    const auto fi = static_cast<Eigen::Index>(shape_.fan_in(l));
    const auto fo = static_cast<Eigen::Index>(shape_.fan_out(l));
    const Mat<T>& in = l == 0 ? *ws.input : ws.act[l - 1];
    if (grad_params != nullptr) {
      RowMajorMap<T> gw(grad_params + shape_.weight_offset(l), fo, fi);
      Eigen::Map<Eigen::Vector<T, Eigen::Dynamic>> gb(grad_params + shape_.bias_offset(l), fo);
      gw.noalias() += d * in.transpose();
      gb.noalias() += d.rowwise().sum();
    }
    if (l > 0 || grad_input != nullptr) {
      ConstRowMajorMap<T> w(params_.values.data() + shape_.weight_offset(l), fo, fi);
      Mat<T> dx = w.transpose() * d;
      if (l == 0) {
        *grad_input = std::move(dx);
      } else {
        d = std::move(dx);
      }
    }
  }
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<T> params, std::span<const T> grads, T lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ConfigError("adam_step: parameter, gradient and state lengths differ");
  }
  if (!(lr > T(0))) throw ConfigError("adam_step: learning rate must be positive");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::isnan(grads[i])) throw NumericalError("adam_step: NaN gradient at parameter index " + std::to_string(i));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = T(1.0 / (1.0 - std::pow(static_cast<double>(state.beta1), t)));
  const T c2 = T(1.0 / (1.0 - std::pow(static_cast<double>(state.beta2), t)));
  const T b1 = state.beta1;
  const T b2 = state.beta2;
  const T eps = state.epsilon;
  T* m = state.m.data();
  T* v = state.v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T m_hat = m[i] * c1;
    const T v_hat = v[i] * c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0) {
  if (total_steps == 0) throw ConfigError("cosine_lr: total_steps must be positive");
  if (step > total_steps) throw ContractViolation("cosine_lr: step beyond total_steps");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
GradCheckReport finite_diff_check(const std::function<T()>& loss, std::span<GradCheckBlock<T>> blocks, T h,
                                  std::uint64_t seed, std::size_t max_per_block) {
  if (!(h >= T(1e-6) && h <= T(1e-3))) throw ConfigError("finite_diff_check: h must lie in [1e-6, 1e-3]");
  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (auto& block : blocks) {
    if (block.values.size() != block.analytic.size()) {
      throw ConfigError("finite_diff_check: block '" + block.name + "' gradient length mismatch");
    }
    std::vector<std::size_t> coords(block.values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_per_block) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_per_block);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const T saved = block.values[idx];
      block.values[idx] = saved + h;
      const T plus = loss();
      block.values[idx] = saved - h;
      const T minus = loss();
      block.values[idx] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericalError("finite_diff_check: non-finite loss perturbing '" + block.name + "'[" +
                             std::to_string(idx) + "]");
      }
      const double fd = (static_cast<double>(plus) - static_cast<double>(minus)) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(block.analytic[idx]);
      const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
      ++report.coordinates;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_block = block.name;
        report.worst_index = idx;
      }
    }
  }
  return report;
}

template struct DenseMatrix<float>;
template struct DenseMatrix<double>;
template class Mlp<float>;
template class Mlp<double>;

template std::vector<float> linear_forward(std::span<const float>, const DenseMatrix<float>&, std::span<const float>);
template std::vector<double> linear_forward(std::span<const double>, const DenseMatrix<double>&,
                                            std::span<const double>);
template std::vector<float> leaky_relu(std::span<const float>, float);
template std::vector<double> leaky_relu(std::span<const double>, double);
template void adam_step(AdamState<float>&, std::span<float>, std::span<const float>, float);
template void adam_step(AdamState<double>&, std::span<double>, std::span<const double>, double);
template GradCheckReport finite_diff_check(const std::function<float()>&, std::span<GradCheckBlock<float>>, float,
                                           std::uint64_t, std::size_t);
template GradCheckReport finite_diff_check(const std::function<double()>&, std::span<GradCheckBlock<double>>,
                                           double, std::uint64_t, std::size_t);

}  // namespace cdngp
