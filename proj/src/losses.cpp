// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdngp/error.hpp"

namespace cdngp {

void LossWeights::validate() const {
  if (!(lambda_d >= 0.0) || !(lambda_o >= 0.0) || !(lambda_r >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

template <typename T>
T photometric_loss(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size() || pred.size() % 3 != 0) {
    throw ContractViolation("photometric_loss: expected equal rgb batches");
  }
  if (pred.empty()) return T(0);
  T sum = T(0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<T>(pred.size() / 3);
}

namespace {

template <typename T>
void check_bins(std::span<const T> w, std::span<const T> b, std::span<const T> e) {
  if (b.size() != w.size() || e.size() != w.size()) throw ContractViolation("distortion_loss: length mismatch");
}

}  // namespace

template <typename T>
T distortion_loss(std::span<const T> w, std::span<const T> s_begin, std::span<const T> s_end) {
  check_bins(w, s_begin, s_end);
  // For sorted midpoints, sum_{i,j} w_i w_j |m_i - m_j| = 2 sum_i w_i (m_i W_<i - M_<i).
  T cross = T(0), self = T(0), wsum = T(0), msum = T(0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T m = (s_begin[i] + s_end[i]) / T(2);
    cross += w[i] * (m * wsum - msum);
    wsum += w[i];
    msum += w[i] * m;
    self += w[i] * w[i] * (s_end[i] - s_begin[i]);
  }
  return T(2) * cross + self / T(3);
}

template <typename T>
void distortion_loss_grad(std::span<const T> w, std::span<const T> s_begin, std::span<const T> s_end,
                          std::span<T> grad) {
  check_bins(w, s_begin, s_end);
  if (grad.size() != w.size()) throw ContractViolation("distortion_loss_grad: length mismatch");
  const std::size_t n = w.size();
  T w_total = T(0), m_total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    w_total += w[i];
    m_total += w[i] * (s_begin[i] + s_end[i]) / T(2);
  }
  // d/dw_i = 2 sum_j w_j |m_i - m_j| + 2/3 w_i (e_i - b_i).
  T w_before = T(0), m_before = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T m = (s_begin[i] + s_end[i]) / T(2);
    const T w_after = w_total - w_before - w[i];
    const T m_after = m_total - m_before - w[i] * m;
    const T abs_sum = (m * w_before - m_before) + (m_after - m * w_after);
    grad[i] = T(2) * abs_sum + T(2) / T(3) * w[i] * (s_end[i] - s_begin[i]);
    w_before += w[i];
    m_before += w[i] * m;
  }
}

template <typename T>
T distortion_loss_bruteforce(std::span<const T> w, std::span<const T> s_begin, std::span<const T> s_end) {
  check_bins(w, s_begin, s_end);
  T cross = T(0), self = T(0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T mi = (s_begin[i] + s_end[i]) / T(2);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T mj = (s_begin[j] + s_end[j]) / T(2);
      cross += w[i] * w[j] * std::abs(mi - mj);
    }
    self += w[i] * w[i] * (s_end[i] - s_begin[i]);
  }
  return cross + self / T(3);
}

template <typename T>
T distortion_loss_edges(std::span<const T> w, std::span<const T> edges) {
  if (edges.size() != w.size() + 1) throw ContractViolation("distortion_loss: need n + 1 edges");
  return distortion_loss<T>(w, edges.first(w.size()), edges.subspan(1));
}

template <typename T>
T opacity_entropy(T o) {
  const T c = std::clamp(o, T(kOpacityFloor), T(1));
  return -c * std::log(c);
}

template <typename T>
T opacity_entropy_grad(T o) {
  if (o < T(kOpacityFloor) || o > T(1)) return T(0);
  return -(std::log(o) + T(1));
}

template <typename T>
T spatial_l1(std::span<const T> features, std::size_t width) {
  if (width == 0 || features.size() % width != 0) throw ContractViolation("spatial_l1: ragged features");
  if (features.empty()) return T(0);
  T sum = T(0);
  for (T f : features) sum += std::abs(f);
  return sum / static_cast<T>(features.size() / width);
}

double total_loss(const LossTerms& t, const LossWeights& w) {
  w.validate();
  return t.photometric + w.lambda_d * t.distortion + w.lambda_o * t.entropy + w.lambda_r * t.spatial;
}

#define CDNGP_LOSS_INSTANTIATE(T)                                                                             \
  template T photometric_loss<T>(std::span<const T>, std::span<const T>);                                     \
  template T distortion_loss<T>(std::span<const T>, std::span<const T>, std::span<const T>);                  \
  template void distortion_loss_grad<T>(std::span<const T>, std::span<const T>, std::span<const T>,           \
                                        std::span<T>);                                                        \
  template T distortion_loss_bruteforce<T>(std::span<const T>, std::span<const T>, std::span<const T>);       \
  template T distortion_loss_edges<T>(std::span<const T>, std::span<const T>);                                \
  template T opacity_entropy<T>(T);                                                                           \
  template T opacity_entropy_grad<T>(T);                                                                      \
  template T spatial_l1<T>(std::span<const T>, std::size_t);

CDNGP_LOSS_INSTANTIATE(float)
CDNGP_LOSS_INSTANTIATE(double)

}  // namespace cdngp
