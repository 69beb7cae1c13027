// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "cdngp/field.hpp"
#include "cdngp/losses.hpp"
#include "cdngp/renderer.hpp"

namespace cdngp {

struct ObjectiveResult {
  LossTerms terms;
  double total = 0.0;
  std::size_t rays = 0;
  std::size_t samples = 0;
};

/// Training loss of one ray batch: field forward, compositing, the four loss
/// terms and, when `sink` is given, the full reverse pass into it.
/// `target` holds 3 values per ray. Distortion and entropy are per-ray means.
template <typename T>
ObjectiveResult evaluate_objective(const FieldModel<T>& model, const SampleBatch<T>& batch,
                                   std::span<const T> target, const LossWeights& weights,
                                   const CompositeOptions& composite, const GradSink<T>* sink, Exec exec,
                                   FieldCache<T>& cache);

extern template ObjectiveResult evaluate_objective<float>(const FieldModel<float>&, const SampleBatch<float>&,
                                                          std::span<const float>, const LossWeights&,
                                                          const CompositeOptions&, const GradSink<float>*, Exec,
                                                          FieldCache<float>&);
extern template ObjectiveResult evaluate_objective<double>(const FieldModel<double>&, const SampleBatch<double>&,
                                                           std::span<const double>, const LossWeights&,
                                                           const CompositeOptions&, const GradSink<double>*, Exec,
                                                           FieldCache<double>&);

}  // namespace cdngp
