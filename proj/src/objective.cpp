// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/objective.hpp"

#include <cmath>

#include "cdngp/error.hpp"

namespace cdngp {

template <typename T>
ObjectiveResult evaluate_objective(const FieldModel<T>& model, const SampleBatch<T>& batch,
                                   std::span<const T> target, const LossWeights& weights,
                                   const CompositeOptions& composite, const GradSink<T>* sink, Exec exec,
                                   FieldCache<T>& cache) {
  weights.validate();
  const std::size_t R = batch.n_rays();
  const std::size_t S = batch.n_samples();
  if (target.size() != 3 * R) throw ContractViolation("objective: target must hold 3 values per ray");
  ObjectiveResult result;
  result.rays = R;
  result.samples = S;
  if (R == 0) return result;

  model.forward(batch, cache, exec, true);

  std::vector<RenderOutput<T>> outs(R);
  std::vector<double> photo(R), dist(R), ent(R);
  const auto nr = static_cast<std::ptrdiff_t>(R);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (std::ptrdiff_t r = 0; r < nr; ++r) {
    const std::size_t b = batch.ray_offsets[r], e = batch.ray_offsets[r + 1];
    outs[r] = volume_render<T>(std::span<const T>(cache.sigma.data() + b, e - b),
                               std::span<const T>(cache.color.data() + 3 * b, 3 * (e - b)),
                               std::span<const T>(batch.deltas.data() + b, e - b), composite);
    double p = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(outs[r].color[c]) - static_cast<double>(target[3 * r + c]);
      p += d * d;
    }
    photo[r] = p;
    dist[r] = static_cast<double>(distortion_loss<T>(outs[r].weights, std::span<const T>(batch.s_begin.data() + b, e - b),
                                                     std::span<const T>(batch.s_end.data() + b, e - b)));
    ent[r] = static_cast<double>(opacity_entropy<T>(outs[r].opacity));
  }
  for (std::size_t r = 0; r < R; ++r) {
    result.terms.photometric += photo[r];
    result.terms.distortion += dist[r];
    result.terms.entropy += ent[r];
  }
  result.terms.photometric /= static_cast<double>(R);
  result.terms.distortion /= static_cast<double>(R);
  result.terms.entropy /= static_cast<double>(R);
  if (model.has_l1_target() && S > 0) {
    result.terms.spatial = static_cast<double>(model.spatial_l1_sum(cache)) / static_cast<double>(S);
  }
  result.total = total_loss(result.terms, weights);
  if (!std::isfinite(result.total)) {
    throw NumericalError("objective: non-finite loss (photometric " + std::to_string(result.terms.photometric) +
                         ", distortion " + std::to_string(result.terms.distortion) + ", entropy " +
                         std::to_string(result.terms.entropy) + ", spatial " +
                         std::to_string(result.terms.spatial) + ")");
  }
  if (sink == nullptr || S == 0) return result;

  std::vector<T> grad_sigma(S);
  Mat<T> grad_color(3, static_cast<Eigen::Index>(S));
  const T inv_r = T(1) / static_cast<T>(R);
  const T ld = static_cast<T>(weights.lambda_d) * inv_r;
  const T lo = static_cast<T>(weights.lambda_o) * inv_r;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (std::ptrdiff_t r = 0; r < nr; ++r) {
    const std::size_t b = batch.ray_offsets[r], e = batch.ray_offsets[r + 1];
    const std::size_t n = e - b;
    std::array<T, 3> gc;
    for (int c = 0; c < 3; ++c) gc[c] = T(2) * inv_r * (outs[r].color[c] - target[3 * r + c]);
    std::vector<T> gw(n);
    distortion_loss_grad<T>(outs[r].weights, std::span<const T>(batch.s_begin.data() + b, n),
                            std::span<const T>(batch.s_end.data() + b, n), gw);
    for (T& v : gw) v *= ld;
    const T go = lo * opacity_entropy_grad<T>(outs[r].opacity);
    volume_render_backward<T>(std::span<const T>(cache.sigma.data() + b, n),
                              std::span<const T>(cache.color.data() + 3 * b, 3 * n),
                              std::span<const T>(batch.deltas.data() + b, n), outs[r], gc, go, gw, composite,
                              std::span<T>(grad_sigma.data() + b, n),
                              std::span<T>(grad_color.data() + 3 * b, 3 * n));
  }
  const T l1_scale = model.has_l1_target() ? static_cast<T>(weights.lambda_r) / static_cast<T>(S) : T(0);
  model.backward(batch, cache, grad_sigma, grad_color, l1_scale, *sink, exec);
  return result;
}

template ObjectiveResult evaluate_objective<float>(const FieldModel<float>&, const SampleBatch<float>&,
                                                   std::span<const float>, const LossWeights&,
                                                   const CompositeOptions&, const GradSink<float>*, Exec,
                                                   FieldCache<float>&);
template ObjectiveResult evaluate_objective<double>(const FieldModel<double>&, const SampleBatch<double>&,
                                                    std::span<const double>, const LossWeights&,
                                                    const CompositeOptions&, const GradSink<double>*, Exec,
                                                    FieldCache<double>&);

}  // namespace cdngp
