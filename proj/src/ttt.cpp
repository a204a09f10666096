#include "t3vf/ttt.hpp"

#include <algorithm>
#include <cmath>

namespace t3vf {

std::string_view to_string(TTTMode mode) {
  switch (mode) {
    case TTTMode::Base: return "base";
    case TTTMode::Indiscriminate: return "indiscriminate";
    case TTTMode::FixedThreshold: return "fixed";
    case TTTMode::Adaptive: return "adaptive";
  }
  return "unknown";
}

std::optional<TTTMode> parse_mode(std::string_view name) {
  for (auto m : {TTTMode::Base, TTTMode::Indiscriminate, TTTMode::FixedThreshold, TTTMode::Adaptive}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

void TTTConfig::validate() const {
  if (gap < 1) throw ConfigError("ttt.gap must be >= 1");
  if (batch_size < 1) throw ConfigError("ttt.batch_size must be >= 1");
  if (num_samples < 2) throw ConfigError("ttt.num_samples must be >= 2");
  if (buffer_cap < 1) throw ConfigError("ttt.buffer_cap must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("ttt.rho must lie in (0, 1)");
  if (!(alpha > 0.0)) throw ConfigError("ttt.alpha must be > 0");
}

VarianceBuffer::VarianceBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw UsageError("VarianceBuffer capacity must be >= 1");
}

void VarianceBuffer::push(double value) {
  if (values_.size() == capacity_) values_.pop_front();
  values_.push_back(value);
}

double buffer_quantile(const VarianceBuffer& buffer, double rho) {
  if (buffer.empty()) throw UsageError("buffer_quantile on an empty buffer");
  std::vector<double> sorted(buffer.values().begin(), buffer.values().end());
  const auto len = static_cast<double>(sorted.size());
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(rho * len)));
  const auto idx = std::min(k, sorted.size()) - 1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx), sorted.end());
  return sorted[idx];
}

FilterDecision filter_step(VarianceBuffer& buffer, double variance, double rho) {
  if (!buffer.full()) {
    buffer.push(variance);
    return {true, false};
  }
  buffer.push(variance);
  return {false, variance <= buffer_quantile(buffer, rho)};
}

VarianceStats action_variance(std::span<const Vec2> samples) {
  if (samples.empty()) throw UsageError("action_variance requires at least one sample");
  Vec2 mean = Vec2::Zero();
  for (const auto& a : samples) mean += a;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const auto& a : samples) var += (a - mean).squaredNorm();
  return {mean, var / static_cast<double>(samples.size())};
}

TTTBatch::TTTBatch(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw UsageError("TTTBatch capacity must be >= 1");
  inputs_.reserve(capacity);
  targets_.reserve(capacity);
}

void TTTBatch::push(Observation input, Vec target) {
  if (full()) throw UsageError("TTTBatch is full; update and clear before adding pairs");
  inputs_.push_back(std::move(input));
  targets_.push_back(std::move(target));
}

void TTTBatch::clear() {
  inputs_.clear();
  targets_.clear();
}

std::size_t mature_pairs(std::deque<PendingPair>& pending, int t, const Vec& current_image, TTTBatch& batch) {
  std::size_t matured = 0;
  for (auto it = pending.begin(); it != pending.end();) {
    if (it->due_at == t) {
      batch.push(std::move(it->obs_at_t), current_image);
      it = pending.erase(it);
      ++matured;
    } else {
      ++it;
    }
  }
  return matured;
}

ModelParams ttt_update(const ModelParams& params, const TTTBatch& batch, double alpha) {
  if (!batch.full()) throw UsageError("ttt_update requires a full batch");
  ModelParams out = params;
  out.q -= alpha * grad_q_img(params, batch.inputs(), batch.targets());
  return out;
}

EpisodeSeeds EpisodeSeeds::from(std::uint64_t seed, TTTMode mode) {
  return {seed, derive_seed(seed, 0x9011cu, static_cast<int>(mode))};
}

EpisodeOutcome run_episode(const ModelParams& params, const EpisodeConfig& env_cfg,
                           const PerturbationSpec& spec, const TTTConfig& cfg, const EpisodeSeeds& seeds) {
  cfg.validate();
  if (cfg.mode == TTTMode::FixedThreshold && !cfg.fixed_threshold) {
    throw UsageError("FixedThreshold mode requires ttt.fixed_threshold");
  }
  const auto started = std::chrono::steady_clock::now();

  EpisodeOutcome out{{}, params};
  EpisodeResult& res = out.result;
  ModelParams& current = out.params;

  Rng env_rng(derive_seed(seeds.env, 0xe4u));
  Rng policy_rng(seeds.policy);
  WorldState state = reset(env_cfg, spec, seeds.env);
  Observation obs = observe(state, env_cfg, spec, env_rng);

  VarianceBuffer buffer(static_cast<std::size_t>(cfg.buffer_cap));
  TTTBatch batch(static_cast<std::size_t>(cfg.batch_size));
  std::deque<PendingPair> pending;
  res.per_step_decisions.reserve(env_cfg.max_steps);

  for (int t = 0; t < env_cfg.max_steps; ++t) {
    const Features feat = forward(current, obs);
    const ActionSamples draws = sample_actions(current, feat, cfg.num_samples, policy_rng);
    const VarianceStats stats = action_variance(draws.samples);

    // The buffer is maintained in every mode so diagnostics stay comparable.
    const FilterDecision gate = filter_step(buffer, stats.variance, cfg.rho);
    bool collect = false;
    switch (cfg.mode) {
      case TTTMode::Base: break;
      case TTTMode::Indiscriminate: collect = true; break;
      case TTTMode::FixedThreshold: collect = stats.variance <= *cfg.fixed_threshold; break;
      case TTTMode::Adaptive: collect = gate.accepted; break;
    }
    res.per_step_decisions.push_back({t, stats.variance, gate.warmup, collect});
    if (collect) {
      pending.push_back({t, t + cfg.gap, obs, predict_image(current, feat, obs)});
      ++res.pairs_accepted;
    }

    const StepResult next = step(state, stats.mean, env_cfg, env_rng);
    state = next.state;
    res.steps_taken = state.t;
    if (next.done) {
      res.success = next.success;
      break;
    }
    obs = observe(state, env_cfg, spec, env_rng);

    // Pairs share one gap, so at most one matures per step.
    const std::size_t matured = mature_pairs(pending, state.t, obs.image, batch);
    res.pairs_matured += static_cast<int>(matured);
    if (batch.full()) {
      current = ttt_update(current, batch, cfg.alpha);
      batch.clear();
      ++res.updates_performed;
    }
  }

  res.final_q_delta_norm = (current.q - params.q).norm();
  res.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started);
  return out;
}

}  // namespace t3vf
