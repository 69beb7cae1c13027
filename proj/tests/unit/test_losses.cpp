// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "../common/tiny_model.hpp"
#include "cdngp/error.hpp"
#include "cdngp/losses.hpp"

namespace cdngp {
namespace {

TEST(Photometric, Examples) {
  const std::vector<double> a{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  EXPECT_EQ(photometric_loss<double>(a, a), 0.0);
  const std::vector<double> zeros(6, 0.0), ones(6, 1.0);
  EXPECT_DOUBLE_EQ(photometric_loss<double>(zeros, ones), 3.0);
  const std::vector<double> p{0.1, 0, 0}, t{0, 0, 0};
  EXPECT_NEAR(photometric_loss<double>(p, t), 0.01, 1e-15);
}

TEST(Distortion, Examples) {
  const std::vector<double> z{0, 0}, b{0, 0.5}, e{0.5, 1};
  EXPECT_EQ(distortion_loss<double>(z, b, e), 0.0);
  const std::vector<double> w1{1}, b1{0}, e1{0.3};
  EXPECT_NEAR(distortion_loss<double>(w1, b1, e1), 0.1, 1e-15);
  const std::vector<double> w2{0.5, 0.5}, edges{0, 0.5, 1};
  EXPECT_NEAR(distortion_loss_edges<double>(w2, edges), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(distortion_loss<double>(w2, b, e), 1.0 / 3.0, 1e-12);
}

TEST(Distortion, SingleBinScaling) {
  const std::vector<double> w{0.7}, b{0.2};
  for (double width : {0.4, 0.2, 0.1}) {
    const std::vector<double> e{0.2 + width};
    EXPECT_NEAR(distortion_loss<double>(w, b, e), 0.49 * width / 3.0, 1e-15);
  }
}

struct RandomRay {
  std::vector<double> w, b, e;
};

RandomRay random_ray(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0, 1);
  RandomRay r;
  std::vector<double> cuts(2 * n);
  for (auto& c : cuts) c = u(rng);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i < n; ++i) {
    r.b.push_back(cuts[2 * i]);
    r.e.push_back(cuts[2 * i + 1]);
    r.w.push_back(u(rng) / static_cast<double>(n));
  }
  return r;
}

TEST(Distortion, FastFormMatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto r = random_ray(rng, 1 + static_cast<std::size_t>(i % 64));
    const double fast = distortion_loss<double>(r.w, r.b, r.e);
    const double slow = distortion_loss_bruteforce<double>(r.w, r.b, r.e);
    EXPECT_NEAR(fast, slow, 1e-6 * std::max(1e-12, std::abs(slow)));
  }
}

TEST(Distortion, CrossTermPermutationSymmetric) {
  std::mt19937_64 rng(12);
  const auto r = random_ray(rng, 12);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  RandomRay p;
  for (std::size_t i : perm) {
    p.w.push_back(r.w[i]);
    p.b.push_back(r.b[i]);
    p.e.push_back(r.e[i]);
  }
  EXPECT_NEAR(distortion_loss_bruteforce<double>(p.w, p.b, p.e), distortion_loss_bruteforce<double>(r.w, r.b, r.e),
              1e-12);
}

TEST(Distortion, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto r = random_ray(rng, 9);
  std::vector<double> g(9);
  distortion_loss_grad<double>(r.w, r.b, r.e, g);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 9; ++i) {
    const double keep = r.w[i];
    r.w[i] = keep + h;
    const double up = distortion_loss_bruteforce<double>(r.w, r.b, r.e);
    r.w[i] = keep - h;
    const double down = distortion_loss_bruteforce<double>(r.w, r.b, r.e);
    r.w[i] = keep;
    EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-7);
  }
}

TEST(Entropy, Examples) {
  EXPECT_EQ(opacity_entropy(1.0), 0.0);
  EXPECT_NEAR(opacity_entropy(0.5), 0.34657359, 1e-8);
  EXPECT_LE(opacity_entropy(0.0), 1.3816e-5);
  EXPECT_NEAR(opacity_entropy(0.0), 1e-6 * std::log(1e6), 1e-15);
  EXPECT_EQ(opacity_entropy_grad(0.0), 0.0);
}

TEST(Entropy, NonNegativeWithMaxAtInverseE) {
  double best = -1.0, arg = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double o = i / 100000.0;
    const double v = opacity_entropy(o);
    EXPECT_GE(v, 0.0);
    if (v > best) {
      best = v;
      arg = o;
    }
  }
  EXPECT_NEAR(arg, 1.0 / std::numbers::e, 1e-4);
  EXPECT_NEAR(best, 1.0 / std::numbers::e, 1e-8);
  const double h = 1e-7;
  for (double o : {0.1, 0.5, 0.9}) {
    EXPECT_NEAR(opacity_entropy_grad(o), (opacity_entropy(o + h) - opacity_entropy(o - h)) / (2 * h), 1e-6);
  }
}

TEST(SpatialL1, Examples) {
  const std::vector<double> zero(4, 0.0);
  EXPECT_EQ(spatial_l1<double>(zero, 2), 0.0);
  const std::vector<double> f{0.5, -0.5};
  EXPECT_DOUBLE_EQ(spatial_l1<double>(f, 2), 1.0);
  const std::vector<double> g{0.1, -0.3, 0.2, 0.4}, g2{0.2, -0.6, 0.4, 0.8};
  EXPECT_NEAR(spatial_l1<double>(g2, 2), 2.0 * spatial_l1<double>(g, 2), 1e-15);
}

TEST(TotalLoss, Weights) {
  const LossTerms ones{1, 1, 1, 1};
  EXPECT_NEAR(total_loss(ones, LossWeights{}), 1.011, 1e-15);
  EXPECT_DOUBLE_EQ(total_loss(LossTerms{0.3, 5, 7, 9}, LossWeights{0, 0, 0}), 0.3);
  EXPECT_THROW(LossWeights({-1, 0, 0}).validate(), ConfigError);
}

TEST(Objective, TermsMatchDirectComputation) {
  auto t = testing::make_tiny(21, 1, testing::tiny_arch(), 4, 6);
  const CompositeOptions composite{{0, 0, 0}, false};
  FieldCache<double> cache;
  const LossWeights w;
  const auto res = evaluate_objective<double>(t.model(), t.batch, t.target, w, composite, nullptr, Exec::Serial, cache);
  double photo = 0.0, dist = 0.0, ent = 0.0;
  for (std::size_t r = 0; r < t.batch.n_rays(); ++r) {
    const auto a = t.batch.ray_offsets[r], b = t.batch.ray_offsets[r + 1];
    std::vector<double> sig(cache.sigma.begin() + a, cache.sigma.begin() + b), col, del, sb, se;
    for (auto s = a; s < b; ++s) {
      for (int c = 0; c < 3; ++c) col.push_back(cache.color(c, s));
      del.push_back(t.batch.deltas[s]);
      sb.push_back(t.batch.s_begin[s]);
      se.push_back(t.batch.s_end[s]);
    }
    const auto o = volume_render<double>(sig, col, del, composite);
    for (int c = 0; c < 3; ++c) photo += std::pow(o.color[c] - t.target[3 * r + c], 2);
    dist += distortion_loss_bruteforce<double>(o.weights, sb, se);
    ent += opacity_entropy(o.opacity);
  }
  const double n = static_cast<double>(t.batch.n_rays());
  EXPECT_NEAR(res.terms.photometric, photo / n, 1e-12);
  EXPECT_NEAR(res.terms.distortion, dist / n, 1e-12);
  EXPECT_NEAR(res.terms.entropy, ent / n, 1e-12);
  EXPECT_GT(res.terms.spatial, 0.0);
  EXPECT_NEAR(res.total, total_loss(res.terms, w), 1e-12);
}

TEST(Objective, NoSpatialTermOnBaseBranch) {
  auto t = testing::make_tiny(22, 0, testing::tiny_arch());
  FieldCache<double> cache;
  const auto res = evaluate_objective<double>(t.model(), t.batch, t.target, LossWeights{}, CompositeOptions{}, nullptr,
                                              Exec::Serial, cache);
  EXPECT_EQ(res.terms.spatial, 0.0);
}

}  // namespace
}  // namespace cdngp
