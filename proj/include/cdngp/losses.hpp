// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

namespace cdngp {

struct LossWeights {
  double lambda_d = 0.005;
  double lambda_o = 0.005;
  double lambda_r = 0.001;

  void validate() const;
};

inline constexpr double kOpacityFloor = 1e-6;

/// Mean over rays of the squared colour error; inputs hold 3 values per ray.
template <typename T>
T photometric_loss(std::span<const T> pred, std::span<const T> target);

/// sum_ij w_i w_j |m_i - m_j| + 1/3 sum_i w_i^2 (e_i - b_i), m the bin
/// midpoints. Bins must be sorted along the ray. O(n) prefix-sum form.
template <typename T>
T distortion_loss(std::span<const T> w, std::span<const T> s_begin, std::span<const T> s_end);

/// Gradient of distortion_loss with respect to w (overwrites `grad`).
template <typename T>
void distortion_loss_grad(std::span<const T> w, std::span<const T> s_begin, std::span<const T> s_end,
                          std::span<T> grad);

/// Direct O(n^2) double sum; reference for the fast form.
template <typename T>
T distortion_loss_bruteforce(std::span<const T> w, std::span<const T> s_begin, std::span<const T> s_end);

/// Contiguous bins given as n + 1 edges.
template <typename T>
T distortion_loss_edges(std::span<const T> w, std::span<const T> edges);

/// -o ln o with o clamped to [1e-6, 1].
template <typename T>
T opacity_entropy(T o);

/// Derivative of opacity_entropy; zero where the clamp is active.
template <typename T>
T opacity_entropy_grad(T o);

/// Mean over points of the L1 norm of `features` (width values per point).
template <typename T>
T spatial_l1(std::span<const T> features, std::size_t width);

struct LossTerms {
  double photometric = 0.0;
  double distortion = 0.0;
  double entropy = 0.0;
  double spatial = 0.0;
};

double total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace cdngp
