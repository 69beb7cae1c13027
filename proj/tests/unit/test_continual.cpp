// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "../common/tiny_run.hpp"
#include "cdngp/checkpoint.hpp"
#include "cdngp/continual.hpp"
#include "cdngp/error.hpp"

namespace cdngp {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;
using testing::tiny_dataset;
using testing::tiny_train_config;

TEST(PlanChunks, Examples) {
  const auto a = plan_chunks(300, 10, 30);
  EXPECT_EQ(a.size(), 30u);
  EXPECT_EQ(a.chunks[29], (ChunkRange{290, 300}));
  EXPECT_EQ(plan_chunks(300, 300, 30).size(), 1u);
  const auto c = plan_chunks(1200, 5, 30);
  ASSERT_EQ(c.size(), 240u);
  std::vector<std::size_t> starts;
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c.episode_start(k)) starts.push_back(k);
  }
  EXPECT_EQ(starts, (std::vector<std::size_t>{0, 30, 60, 90, 120, 150, 180, 210}));
  EXPECT_EQ(c.iterations(30), 18000u);
  EXPECT_EQ(c.iterations(31), 3000u);
}

TEST(PlanChunks, PartitionAndShortTail) {
  for (int n : {1, 7, 60, 61}) {
    for (int tc : {1, 3, 10}) {
      const auto s = plan_chunks(n, tc, 4);
      int next = 0;
      for (const auto& r : s.chunks) {
        EXPECT_EQ(r.begin, next);
        EXPECT_GT(r.size(), 0);
        EXPECT_LE(r.size(), std::min(tc, n));
        next = r.end;
      }
      EXPECT_EQ(next, n);
      for (int f = 0; f < n; ++f) {
        const auto& r = s.chunks[s.chunk_of_frame(f)];
        EXPECT_GE(f, r.begin);
        EXPECT_LT(f, r.end);
        EXPECT_GE(s.local_time(f), 0.0);
        EXPECT_LE(s.local_time(f), 1.0);
      }
    }
  }
  EXPECT_EQ(plan_chunks(5, 50, 1).size(), 1u);
  EXPECT_THROW(plan_chunks(5, 0, 1), ConfigError);
  EXPECT_THROW(plan_chunks(5, 2, 2).chunk_of_frame(5), OutOfRangeError);
}

TEST(InitBranch, EpisodeRules) {
  TrainConfig cfg = tiny_train_config();
  auto repo = ModelRepo::create(cfg, 6);
  std::uint64_t eta = 0;
  auto b0_rng = branch_rng(cfg.seed, 0);
  repo.branches.push_back(init_branch(repo, 0, b0_rng, &eta));
  EXPECT_EQ(eta, cfg.eta_init);
  EXPECT_FALSE(repo.branches[0].aux.has_value());
  const auto base_blocks = trainable_blocks(repo, 0);
  EXPECT_EQ(base_blocks.size(), repo.base.blocks().size() + repo.branches[0].blocks().size());

  auto b1_rng = branch_rng(cfg.seed, 1);
  repo.branches.push_back(init_branch(repo, 1, b1_rng, &eta));
  const auto& b0 = repo.branches[0];
  const auto& b1 = repo.branches[1];
  EXPECT_EQ(eta, cfg.eta_aux);
  ASSERT_TRUE(b1.aux.has_value());
  EXPECT_EQ(b1.aux->grids()[0].config().log2_table, cfg.arch.aux_log2);
  EXPECT_EQ(b1.sigma_net.params().values, b0.sigma_net.params().values);
  EXPECT_EQ(b1.color_net.params().values, b0.color_net.params().values);
  EXPECT_EQ(b1.temporal->blocks()[0]->values, b0.temporal->blocks()[0]->values);
  EXPECT_EQ(trainable_blocks(repo, 1).size(), b1.blocks().size());

  // k = 2 starts a new episode with T_episode = 2.
  auto b2_rng = branch_rng(cfg.seed, 2);
  repo.branches.push_back(init_branch(repo, 2, b2_rng, &eta));
  EXPECT_EQ(eta, cfg.eta_init);
  EXPECT_NE(repo.branches[2].sigma_net.params().values, b1.sigma_net.params().values);

  auto again = branch_rng(cfg.seed, 5);
  EXPECT_THROW(init_branch(repo, 5, again, nullptr), ContractViolation);
}

TEST(InitBranch, WarmStartDisabledIsFresh) {
  TrainConfig cfg = tiny_train_config();
  cfg.warm_start = false;
  auto repo = ModelRepo::create(cfg, 6);
  auto r0 = branch_rng(cfg.seed, 0);
  repo.branches.push_back(init_branch(repo, 0, r0, nullptr));
  auto r1 = branch_rng(cfg.seed, 1);
  const auto b1 = init_branch(repo, 1, r1, nullptr);
  EXPECT_NE(b1.sigma_net.params().values, repo.branches[0].sigma_net.params().values);
}

ChunkFrames synthetic_frames(const std::vector<std::vector<float>>& per_frame_values) {
  ChunkFrames f;
  f.views = {1};
  f.range = {0, static_cast<int>(per_frame_values.size())};
  for (const auto& vals : per_frame_values) {
    Image img(static_cast<std::uint32_t>(vals.size()), 1);
    for (std::size_t p = 0; p < vals.size(); ++p) {
      for (int c = 0; c < 3; ++c) img.rgb[3 * p + c] = vals[p];
    }
    f.images.push_back({img});
  }
  return f;
}

TEST(Importance, StaticChunkIsUniformAtFloor) {
  const auto frames = synthetic_frames({{0.2f, 0.5f, 0.9f}, {0.2f, 0.5f, 0.9f}, {0.2f, 0.5f, 0.9f}});
  for (double w : importance_weights(frames, 0.05)) EXPECT_DOUBLE_EQ(w, 0.05);
}

TEST(Importance, OneMovingPixelTakesAllDraws) {
  const auto frames = synthetic_frames({{0.2f, 0.5f, 0.9f, 0.1f}, {0.2f, 0.5f, 0.1f, 0.1f}, {0.2f, 0.5f, 0.9f, 0.1f}});
  const auto w = importance_weights(frames, 0.0);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[2], 0.8, 1e-6);
  ImportanceSampler s(w);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(s.draw(rng), 2u);
}

TEST(Importance, FrequenciesWithinThreeSigma) {
  const std::vector<double> w{0.05, 0.2, 0.5, 0.25};
  ImportanceSampler s(w);
  std::mt19937_64 rng(17);
  const int n = 100000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) ++counts[s.draw(rng)];
  const double total = 1.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = w[i] / total;
    const double sigma = std::sqrt(n * p * (1 - p));
    EXPECT_LE(std::abs(counts[i] - n * p), 3 * sigma) << "pixel " << i;
  }
  EXPECT_THROW(ImportanceSampler(std::vector<double>{0.0, 0.0}), ContractViolation);
}

TEST(Residency, LimitAndRelease) {
  FrameResidency r(2);
  {
    auto a = r.acquire(1);
    auto b = r.acquire(1);
    EXPECT_EQ(r.resident(), 2);
    EXPECT_THROW(r.acquire(1), ContractViolation);
  }
  EXPECT_EQ(r.resident(), 0);
  EXPECT_EQ(r.peak(), 2);
  auto c = r.acquire(2);
  EXPECT_EQ(r.resident(), 2);
}

TEST(LoadChunk, RespectsResidencyAndSkipsHeldOut) {
  const auto& ds = tiny_dataset();
  FrameResidency r(2);
  {
    const auto frames = load_chunk(ds, {2, 4}, r);
    EXPECT_EQ(frames.images.size(), 2u);
    EXPECT_EQ(frames.views, ds.training_views());
    EXPECT_EQ(frames.images[1][0], ds.load_frame(frames.views[0], 3));
    EXPECT_THROW(load_chunk(ds, {4, 5}, r), ContractViolation);
  }
  EXPECT_EQ(r.resident(), 0);
}

/// One shared trained tiny run used by the checks below.
class TinyRun : public ::testing::Test {
 protected:
  struct State {
    ModelRepo repo;
    std::vector<ChunkStats> stats;
    std::map<std::size_t, std::vector<std::uint8_t>> bytes_after;  // branch k bytes right after chunk k
    std::vector<std::uint8_t> base_after_0;
    std::vector<std::vector<std::vector<std::uint8_t>>> all_bytes_after;  // [k][j] bytes of branch j after chunk k
    std::vector<Image> chunk0_render_after;  // render of frame 0 after each chunk
    std::vector<std::size_t> sampled_views_held_out;
    bool frames_inside_chunk = true;
    int peak = 0;
  };

  static void SetUpTestSuite() {
    state_ = new State;
    TrainConfig cfg = tiny_train_config();
    cfg.snapshot_grids = true;
    state_->repo = ModelRepo::create(cfg, tiny_dataset().n_frames());
    const auto& ds = tiny_dataset();
    TrainHooks hooks;
    hooks.on_batch = [&](std::size_t k, std::span<const RaySample> rays) {
      const auto& r = state_->repo.schedule.chunks[k];
      for (const auto& s : rays) {
        if (s.view == ds.held_out()) state_->sampled_views_held_out.push_back(k);
        if (s.frame < r.begin || s.frame >= r.end) state_->frames_inside_chunk = false;
      }
    };
    hooks.after_chunk = [&](std::size_t k, const ModelRepo& repo, const ChunkStats&) {
      if (k == 0) state_->base_after_0 = serialize_base(repo);
      std::vector<std::vector<std::uint8_t>> bs;
      for (const auto& b : repo.branches) bs.push_back(serialize_branch(b));
      state_->all_bytes_after.push_back(bs);
      state_->chunk0_render_after.push_back(
          render_frame(repo, ds.cameras()[0], 0, render_settings(repo.config)).image);
      EXPECT_EQ(serialize_base(repo), state_->base_after_0);
    };
    FrameResidency residency(cfg.t_chunk);
    state_->stats = run_continual(state_->repo, ds, hooks, -1, &residency);
    state_->peak = residency.peak();
  }
  static void TearDownTestSuite() { delete state_; }
  static State* state_;
};

TinyRun::State* TinyRun::state_ = nullptr;

TEST_F(TinyRun, OneBranchPerChunk) {
  EXPECT_EQ(state_->repo.branches.size(), 3u);
  EXPECT_TRUE(state_->repo.complete());
  ASSERT_EQ(state_->stats.size(), 3u);
  EXPECT_EQ(state_->stats[0].iterations, 60u);
  EXPECT_EQ(state_->stats[1].iterations, 30u);
  EXPECT_EQ(state_->stats[2].iterations, 60u);
}

TEST_F(TinyRun, ResidencyNeverExceedsChunk) {
  EXPECT_LE(state_->peak, tiny_train_config().t_chunk);
  EXPECT_GT(state_->peak, 0);
}

TEST_F(TinyRun, SamplerAudit) {
  EXPECT_TRUE(state_->sampled_views_held_out.empty());
  EXPECT_TRUE(state_->frames_inside_chunk);
}

TEST_F(TinyRun, LossDecreases) {
  const auto& l = state_->stats[0].losses;
  ASSERT_EQ(l.size(), 60u);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += l[static_cast<std::size_t>(i)];
    tail += l[l.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, head);
}

TEST_F(TinyRun, ParameterIsolation) {
  const auto& a = state_->all_bytes_after;
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t j = 0; j <= k; ++j) EXPECT_EQ(a[k][j], a.back()[j]) << "branch " << j << " after chunk " << k;
  }
}

TEST_F(TinyRun, ReplayWithSnapshotsIsBitwiseStable) {
  const auto& r = state_->chunk0_render_after;
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0], r[1]);
  EXPECT_EQ(r[0], r[2]);
}

TEST_F(TinyRun, RenderOutsideTrainedRangeFails) {
  ModelRepo partial = state_->repo;
  partial.branches.resize(1);
  const auto& ds = tiny_dataset();
  EXPECT_NO_THROW(render_frame(partial, ds.cameras()[0], 1, render_settings(partial.config)));
  EXPECT_THROW(render_frame(partial, ds.cameras()[0], 2, render_settings(partial.config)), OutOfRangeError);
  EXPECT_THROW(render_frame(partial, ds.cameras()[0], 6, render_settings(partial.config)), OutOfRangeError);
}

TEST_F(TinyRun, DeterministicForFixedSeed) {
  TrainConfig cfg = tiny_train_config();
  cfg.snapshot_grids = true;
  auto repo = ModelRepo::create(cfg, tiny_dataset().n_frames());
  run_continual(repo, tiny_dataset(), {}, 2);
  ASSERT_EQ(repo.branches.size(), 2u);
  EXPECT_EQ(serialize_base(repo), serialize_base(state_->repo));
  EXPECT_EQ(serialize_branch(repo.branches[1]), serialize_branch(state_->repo.branches[1]));
  EXPECT_EQ(repo.grid_snapshots[1], state_->repo.grid_snapshots[1]);
}

TEST_F(TinyRun, ZeroIterationsLeavesBranchUnchanged) {
  TrainConfig cfg = tiny_train_config();
  cfg.eta_init = 0;
  auto repo = ModelRepo::create(cfg, tiny_dataset().n_frames());
  auto rng = branch_rng(cfg.seed, 0);
  repo.branches.push_back(init_branch(repo, 0, rng, nullptr));
  const auto before = serialize_branch(repo.branches[0]);
  const auto base_before = serialize_base(repo);
  FrameResidency res(2);
  const auto frames = load_chunk(tiny_dataset(), repo.schedule.chunks[0], res);
  train_branch(repo, 0, tiny_dataset(), frames);
  EXPECT_EQ(serialize_branch(repo.branches[0]), before);
  EXPECT_EQ(serialize_base(repo), base_before);
}

TEST_F(TinyRun, SingleChunkWhenChunkCoversSequence) {
  TrainConfig cfg = tiny_train_config();
  cfg.t_chunk = 6;
  cfg.eta_init = 5;
  auto repo = ModelRepo::create(cfg, tiny_dataset().n_frames());
  run_continual(repo, tiny_dataset());
  EXPECT_EQ(repo.branches.size(), 1u);
}

TEST_F(TinyRun, CheckpointRoundTrip) {
  const fs::path dir = scratch_dir("ckpt_roundtrip");
  save_checkpoint(state_->repo, dir);
  const auto loaded = load_checkpoint(dir);
  EXPECT_EQ(serialize_base(loaded), serialize_base(state_->repo));
  ASSERT_EQ(loaded.branches.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(serialize_branch(loaded.branches[k]), serialize_branch(state_->repo.branches[k]));
  }
  EXPECT_EQ(loaded.grid, state_->repo.grid);
  EXPECT_EQ(loaded.grid_snapshots, state_->repo.grid_snapshots);
  EXPECT_EQ(loaded.schedule, state_->repo.schedule);
  const auto status = inspect_checkpoint(dir);
  EXPECT_TRUE(status.complete());
  fs::remove_all(dir);
}

TEST_F(TinyRun, MissingBranchReportsUnrenderableFrames) {
  const fs::path dir = scratch_dir("ckpt_missing");
  save_checkpoint(state_->repo, dir);
  fs::remove_all(dir / "branch_0001");
  const auto status = inspect_checkpoint(dir);
  EXPECT_FALSE(status.complete());
  EXPECT_EQ(status.missing, (std::vector<std::size_t>{1}));
  ASSERT_EQ(status.unrenderable.size(), 1u);
  EXPECT_EQ(status.unrenderable[0], (ChunkRange{2, 4}));
  try {
    load_checkpoint(dir);
    FAIL() << "incomplete checkpoint loaded";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 4)"), std::string::npos) << msg;
  }
  fs::remove_all(dir);
}

TEST_F(TinyRun, BaseAndOneBranchRenderThatChunk) {
  const fs::path dir = scratch_dir("ckpt_chunk");
  save_checkpoint(state_->repo, dir);
  fs::remove_all(dir / "branch_0000");
  fs::remove_all(dir / "branch_0001");
  const auto cm = load_chunk_model(dir, 2);
  const auto& ds = tiny_dataset();
  const auto settings = render_settings(state_->repo.config);
  const auto a = cm.render(ds.cameras()[0], 5, settings);
  const auto b = render_frame(state_->repo, ds.cameras()[0], 5, settings);
  EXPECT_EQ(a.image, b.image);
  EXPECT_THROW(load_chunk_model(dir, 1), FormatError);
  EXPECT_THROW(cm.render(ds.cameras()[0], 1, settings), OutOfRangeError);
  fs::remove_all(dir);
}

TEST_F(TinyRun, TamperedFileRejected) {
  const fs::path dir = scratch_dir("ckpt_tamper");
  save_checkpoint(state_->repo, dir);
  fs::path victim;
  for (const auto& e : fs::directory_iterator(dir / "branch_0002")) victim = e.path();
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  fs::remove_all(dir);
}

TEST_F(TinyRun, IncrementalSaveAndResume) {
  const fs::path dir = scratch_dir("ckpt_resume");
  TrainConfig cfg = tiny_train_config();
  cfg.snapshot_grids = true;
  auto repo = ModelRepo::create(cfg, tiny_dataset().n_frames());
  TrainHooks hooks;
  hooks.after_chunk = [&](std::size_t k, const ModelRepo& r, const ChunkStats&) { save_branch(r, k, dir); };
  run_continual(repo, tiny_dataset(), hooks, 2);
  const auto status = inspect_checkpoint(dir);
  EXPECT_EQ(status.present, (std::vector<std::size_t>{0, 1}));
  auto resumed = load_checkpoint(dir);
  EXPECT_EQ(resumed.branches.size(), 2u);
  run_continual(resumed, tiny_dataset());
  ASSERT_EQ(resumed.branches.size(), 3u);
  EXPECT_EQ(serialize_branch(resumed.branches[2]), serialize_branch(state_->repo.branches[2]));
  fs::remove_all(dir);
}

TEST(Blob, RoundTripAndCorruption) {
  ParamBlock<float> b{"x", {2, 3}, {1, 2, 3, 4, 5, -6.5f}};
  const auto bytes = encode_blob(b);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CDNG");
  const auto back = decode_blob(bytes, "x");
  EXPECT_EQ(back.shape, b.shape);
  EXPECT_EQ(back.values, b.values);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_blob(bad, "x"), FormatError);
  auto ver = bytes;
  ver[4] = 9;
  EXPECT_THROW(decode_blob(ver, "x"), FormatError);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 2);
  EXPECT_THROW(decode_blob(cut, "x"), FormatError);
}

TEST(Blob, GridStoredAsBf16) {
  OccupancyGrid g(4);
  g.fill(0.3f);
  const auto bytes = encode_grid_blob(g);
  const auto back = decode_blob(bytes, "grid");
  EXPECT_EQ(back.values.size(), g.cell_count());
  EXPECT_EQ(back.values[0], round_bf16(0.3f));
  EXPECT_LT(bytes.size(), 2 * g.cell_count() + 64);
}

}  // namespace
}  // namespace cdngp
