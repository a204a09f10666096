#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <list>

#include "t3vf/ttt.hpp"
#include "test_support.hpp"

namespace t3vf {
namespace {

using testing::random_observation;

TEST(ActionVariance, TwoPoints) {
  const std::vector<Vec2> s{{0, 0}, {2, 0}};
  const auto v = action_variance(s);
  EXPECT_EQ(v.mean, Vec2(1, 0));
  EXPECT_DOUBLE_EQ(v.variance, 1.0);
}

TEST(ActionVariance, IdenticalSamplesHaveZeroVariance) {
  const std::vector<Vec2> s(5, Vec2(0.3, -0.2));
  EXPECT_EQ(action_variance(s).variance, 0.0);
}

TEST(ActionVariance, SquareCorners) {
  const std::vector<Vec2> s{{0, 0}, {0, 2}, {2, 0}, {2, 2}};
  const auto v = action_variance(s);
  EXPECT_EQ(v.mean, Vec2(1, 1));
  EXPECT_DOUBLE_EQ(v.variance, 2.0);
}

TEST(ActionVariance, EmptyRejected) { EXPECT_THROW(action_variance({}), UsageError); }

VarianceBuffer filled(std::initializer_list<double> values, std::size_t cap) {
  VarianceBuffer b(cap);
  for (double v : values) b.push(v);
  return b;
}

TEST(BufferQuantile, TenthsAtThirtyPercent) {
  const auto b = filled({1.0, 0.4, 0.2, 0.9, 0.3, 0.5, 0.1, 0.8, 0.7, 0.6}, 10);
  EXPECT_EQ(buffer_quantile(b, 0.3), 0.3);
}

TEST(BufferQuantile, SingleElement) {
  const auto b = filled({4.2}, 10);
  for (double rho : {0.01, 0.3, 0.99}) EXPECT_EQ(buffer_quantile(b, rho), 4.2);
}

TEST(BufferQuantile, CeilRank) { EXPECT_EQ(buffer_quantile(filled({5, 1, 3}, 3), 0.5), 3.0); }

TEST(BufferQuantile, EmptyRejected) {
  const VarianceBuffer b(3);
  EXPECT_THROW(buffer_quantile(b, 0.3), UsageError);
}

TEST(FilterStep, WarmupFillsBuffer) {
  VarianceBuffer b(10);
  for (int i = 0; i < 9; ++i) b.push(1.0 + i);
  const auto d = filter_step(b, 0.0, 0.3);
  EXPECT_TRUE(d.warmup);
  EXPECT_FALSE(d.accepted);
  EXPECT_EQ(b.size(), 10u);
}

TEST(FilterStep, TiesAreAccepted) {
  VarianceBuffer b(10);
  for (int i = 0; i < 10; ++i) b.push(1.0);
  const auto d = filter_step(b, 1.0, 0.3);
  EXPECT_FALSE(d.warmup);
  EXPECT_TRUE(d.accepted);
}

TEST(FilterStep, CurrentValueJoinsItsOwnComparison) {
  VarianceBuffer b(3);
  for (double v : {5.0, 6.0, 7.0}) b.push(v);
  // Window becomes {6, 7, 0.5}; k = ceil(0.3 * 3) = 1, smallest is 0.5.
  EXPECT_TRUE(filter_step(b, 0.5, 0.3).accepted);
  // Window {7, 0.5, 6.5}; smallest 0.5 < 6.5.
  EXPECT_FALSE(filter_step(b, 6.5, 0.3).accepted);
}

TEST(FilterStep, AcceptanceRateMatchesRankOracle) {
  constexpr int kSteps = 10000;
  constexpr std::size_t kCap = 10;
  constexpr double kRho = 0.3;
  VarianceBuffer b(kCap);
  Rng rng(20240601);
  std::exponential_distribution<double> dist(1.0);
  int post_warmup = 0;
  int accepted = 0;
  for (int i = 0; i < kSteps; ++i) {
    const auto d = filter_step(b, dist(rng), kRho);
    if (d.warmup) continue;
    ++post_warmup;
    accepted += d.accepted ? 1 : 0;
  }
  const double expected = std::ceil(kRho * kCap) / kCap;
  const double rate = static_cast<double>(accepted) / post_warmup;
  RecordProperty("acceptance_rate", std::to_string(rate));
  EXPECT_NEAR(rate, expected, 0.015);
}

TEST(VarianceBufferOracle, MatchesListModel) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cap_pick(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cap = static_cast<std::size_t>(cap_pick(rng));
    VarianceBuffer b(cap);
    std::list<double> oracle;
    for (int i = 0; i < 200; ++i) {
      const double v = u(rng);
      const bool was_full = oracle.size() == cap;
      const auto d = filter_step(b, v, 0.3);
      if (was_full) oracle.pop_front();
      oracle.push_back(v);
      ASSERT_LE(b.size(), cap);
      ASSERT_TRUE(std::equal(b.values().begin(), b.values().end(), oracle.begin(), oracle.end()));
      EXPECT_EQ(d.warmup, !was_full);
      if (was_full) {
        std::vector<double> sorted(oracle.begin(), oracle.end());
        std::sort(sorted.begin(), sorted.end());
        const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(0.3 * static_cast<double>(cap))));
        EXPECT_EQ(d.accepted, v <= sorted[k - 1]);
      } else {
        EXPECT_FALSE(d.accepted);
      }
    }
  }
}

TEST(VarianceBuffer, PushEvictsOldest) {
  VarianceBuffer b(2);
  b.push(1.0);
  b.push(2.0);
  b.push(3.0);
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.values().front(), 2.0);
  EXPECT_EQ(b.values().back(), 3.0);
}

PendingPair pending_at(int created, int gap, const ModelDims& d, Rng& rng) {
  return {created, created + gap, random_observation(d, rng), Vec::Zero(d.obs)};
}

TEST(MaturePairs, EmptyPendingUnchanged) {
  std::deque<PendingPair> pending;
  TTTBatch batch(4);
  EXPECT_EQ(mature_pairs(pending, 3, Vec::Zero(4), batch), 0u);
  EXPECT_EQ(batch.size(), 0u);
}

TEST(MaturePairs, OneDuePair) {
  const auto d = testing::small_dims();
  Rng rng(0);
  std::deque<PendingPair> pending{pending_at(0, 4, d, rng), pending_at(1, 4, d, rng)};
  TTTBatch batch(4);
  const Vec img = Vec::Constant(d.obs, 0.25);
  EXPECT_EQ(mature_pairs(pending, 4, img, batch), 1u);
  EXPECT_EQ(batch.size(), 1u);
  EXPECT_EQ(pending.size(), 1u);
  EXPECT_EQ(pending.front().created_at, 1);
  EXPECT_EQ(batch.targets()[0], img);
}

TEST(MaturePairs, SameDueTimeMaturesInCreationOrder) {
  const auto d = testing::small_dims();
  Rng rng(1);
  auto first = pending_at(2, 4, d, rng);
  auto second = pending_at(3, 3, d, rng);
  ASSERT_EQ(first.due_at, second.due_at);
  std::deque<PendingPair> pending{first, second};
  TTTBatch batch(4);
  EXPECT_EQ(mature_pairs(pending, 6, Vec::Zero(d.obs), batch), 2u);
  EXPECT_TRUE(pending.empty());
  EXPECT_EQ(batch.inputs()[0].image, first.obs_at_t.image);
  EXPECT_EQ(batch.inputs()[1].image, second.obs_at_t.image);
}

TEST(TTTBatchTest, PushBeyondCapacityRejected) {
  TTTBatch batch(1);
  batch.push({Vec::Zero(2), Vec::Zero(1)}, Vec::Zero(2));
  EXPECT_TRUE(batch.full());
  EXPECT_THROW(batch.push({Vec::Zero(2), Vec::Zero(1)}, Vec::Zero(2)), UsageError);
  batch.clear();
  EXPECT_EQ(batch.size(), 0u);
}

TTTBatch full_batch(const ModelParams& p, std::size_t b, Rng& rng, bool matched) {
  TTTBatch batch(b);
  for (std::size_t i = 0; i < b; ++i) {
    auto o = random_observation(p.dims, rng);
    Vec target = matched ? predict_image(p, forward(p, o), o) : random_observation(p.dims, rng).image;
    batch.push(std::move(o), std::move(target));
  }
  return batch;
}

TEST(TTTUpdate, MatchedTargetsLeaveQueryUnchanged) {
  const auto p = testing::random_params(testing::small_dims(), 3);
  Rng rng(3);
  const auto batch = full_batch(p, 4, rng, true);
  EXPECT_EQ(ttt_update(p, batch, 0.5).q, p.q);
}

TEST(TTTUpdate, ZeroStepIsIdentity) {
  const auto p = testing::random_params(testing::small_dims(), 4);
  Rng rng(4);
  const auto batch = full_batch(p, 4, rng, false);
  EXPECT_TRUE(ttt_update(p, batch, 0.0) == p);
}

TEST(TTTUpdate, OnlyQueryChangesAndLossDescends) {
  const auto p = testing::random_params(testing::small_dims(), 5);
  Rng rng(5);
  const auto batch = full_batch(p, 4, rng, false);
  const auto updated = ttt_update(p, batch, 1e-4);
  EXPECT_TRUE(updated.equal_except_query(p));
  EXPECT_NE(updated.q, p.q);
  EXPECT_LE(loss_img_batch(updated, batch.inputs(), batch.targets()),
            loss_img_batch(p, batch.inputs(), batch.targets()));
}

TEST(TTTUpdate, PartialBatchRejected) {
  const auto p = testing::random_params(testing::small_dims(), 6);
  TTTBatch batch(4);
  Rng rng(6);
  batch.push(random_observation(p.dims, rng), Vec::Zero(p.dims.obs));
  EXPECT_THROW(ttt_update(p, batch, 1.0), UsageError);
}

TEST(TTTConfigTest, DefaultsAndValidation) {
  const TTTConfig c;
  EXPECT_EQ(c.gap, 4);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.num_samples, 5);
  EXPECT_EQ(c.buffer_cap, 10);
  EXPECT_EQ(c.rho, 0.3);
  EXPECT_TRUE(c.reset_q_per_episode);
  EXPECT_NO_THROW(c.validate());
  TTTConfig bad;
  bad.num_samples = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TTTConfig{};
  bad.rho = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TTTConfig{};
  bad.alpha = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TTTMode, NamesRoundTrip) {
  for (auto m : {TTTMode::Base, TTTMode::Indiscriminate, TTTMode::FixedThreshold, TTTMode::Adaptive}) {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
  EXPECT_FALSE(parse_mode("greedy").has_value());
}

// Episode-level fixtures: a random (untrained) policy on a long episode with
// success disabled, so every step runs and the gate sees a full stream.
struct EpisodeFixture : ::testing::Test {
  ModelParams params = ModelParams::init(ModelDims{}, 77);
  EpisodeConfig env = [] {
    EpisodeConfig e;
    e.max_steps = 200;
    e.success_enabled = false;
    return e;
  }();
  TTTConfig cfg(TTTMode mode) const {
    TTTConfig c;
    c.mode = mode;
    c.fixed_threshold = 1e9;
    return c;
  }
  const PerturbationSpec robot{Perturbation::Robot, 1.0};
};

TEST_F(EpisodeFixture, BaseNeverUpdates) {
  const auto out = run_episode(params, env, robot, cfg(TTTMode::Base), 1);
  EXPECT_EQ(out.result.updates_performed, 0);
  EXPECT_EQ(out.result.pairs_accepted, 0);
  EXPECT_TRUE(out.params == params);
}

TEST_F(EpisodeFixture, ShortEpisodesAreAllWarmup) {
  EpisodeConfig short_env = env;
  for (int t = 1; t <= 10; ++t) {
    short_env.max_steps = t;
    const auto out = run_episode(params, short_env, robot, cfg(TTTMode::Adaptive), 3);
    EXPECT_EQ(out.result.updates_performed, 0) << t;
    EXPECT_EQ(out.result.pairs_accepted, 0) << t;
    for (const auto& d : out.result.per_step_decisions) EXPECT_TRUE(d.warmup);
  }
}

TEST_F(EpisodeFixture, NonQueryFieldsFrozenInEveryMode) {
  for (auto m : {TTTMode::Base, TTTMode::Indiscriminate, TTTMode::FixedThreshold, TTTMode::Adaptive}) {
    const auto out = run_episode(params, env, robot, cfg(m), 4);
    EXPECT_TRUE(out.params.equal_except_query(params)) << to_string(m);
    if (m != TTTMode::Base) {
      EXPECT_GT(out.result.updates_performed, 0) << to_string(m);
    }
  }
}

TEST_F(EpisodeFixture, UpdateCountEqualsFullBatches) {
  for (auto m : {TTTMode::Indiscriminate, TTTMode::Adaptive}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = run_episode(params, env, robot, cfg(m), seed).result;
      EXPECT_EQ(r.updates_performed, r.pairs_matured / 4);
      EXPECT_LE(r.pairs_matured, r.pairs_accepted);
    }
  }
}

TEST_F(EpisodeFixture, WarmupStepsNeverCollect) {
  const auto r = run_episode(params, env, robot, cfg(TTTMode::Adaptive), 5).result;
  int warm = 0;
  for (const auto& d : r.per_step_decisions) {
    if (d.warmup) {
      ++warm;
      EXPECT_FALSE(d.accepted);
    }
  }
  EXPECT_EQ(warm, 10);
}

TEST_F(EpisodeFixture, IndiscriminateCollectsAtLeastAsMuchAsAdaptive) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ind = run_episode(params, env, robot, cfg(TTTMode::Indiscriminate), seed).result;
    const auto ada = run_episode(params, env, robot, cfg(TTTMode::Adaptive), seed).result;
    EXPECT_GE(ind.pairs_accepted, ada.pairs_accepted);
    EXPECT_EQ(ind.pairs_accepted, env.max_steps);
  }
}

TEST_F(EpisodeFixture, LongEpisodeUpdateCountNearOracle) {
  const double oracle = std::floor(0.3 * (env.max_steps - 10 - 4) / 4.0);
  double total = 0.0;
  constexpr int kEpisodes = 100;
  for (int e = 0; e < kEpisodes; ++e) {
    total += run_episode(params, env, robot, cfg(TTTMode::Adaptive), static_cast<std::uint64_t>(e))
                 .result.updates_performed;
  }
  const double mean = total / kEpisodes;
  EXPECT_NEAR(mean, oracle, 0.4 * oracle);
}

TEST_F(EpisodeFixture, DeterministicExceptWallTime) {
  const auto a = run_episode(params, env, robot, cfg(TTTMode::Adaptive), 9);
  const auto b = run_episode(params, env, robot, cfg(TTTMode::Adaptive), 9);
  EXPECT_EQ(a.result.success, b.result.success);
  EXPECT_EQ(a.result.steps_taken, b.result.steps_taken);
  EXPECT_EQ(a.result.updates_performed, b.result.updates_performed);
  EXPECT_EQ(a.result.pairs_accepted, b.result.pairs_accepted);
  EXPECT_EQ(a.result.final_q_delta_norm, b.result.final_q_delta_norm);
  ASSERT_EQ(a.result.per_step_decisions.size(), b.result.per_step_decisions.size());
  for (std::size_t i = 0; i < a.result.per_step_decisions.size(); ++i) {
    EXPECT_EQ(a.result.per_step_decisions[i].variance, b.result.per_step_decisions[i].variance);
  }
  EXPECT_TRUE(a.params == b.params);
}

TEST_F(EpisodeFixture, FixedThresholdRequiresTau) {
  TTTConfig c = cfg(TTTMode::FixedThreshold);
  c.fixed_threshold.reset();
  EXPECT_THROW(run_episode(params, env, robot, c, 0), UsageError);
}

TEST_F(EpisodeFixture, ModesShareEnvironmentStream) {
  const auto seeds_base = EpisodeSeeds::from(42, TTTMode::Base);
  const auto seeds_ada = EpisodeSeeds::from(42, TTTMode::Adaptive);
  EXPECT_EQ(seeds_base.env, seeds_ada.env);
  EXPECT_NE(seeds_base.policy, seeds_ada.policy);
}

}  // namespace
}  // namespace t3vf
