#include "t3vf/harness.hpp"

#include <algorithm>
#include <cmath>

#include "t3vf/checkpoint.hpp"

namespace t3vf {

using nlohmann::json;

std::string_view to_string(TrainSetting setting) {
  return setting == TrainSetting::WithPerturbedTrain ? "with" : "without";
}

std::optional<TrainSetting> parse_setting(std::string_view name) {
  if (name == "with") return TrainSetting::WithPerturbedTrain;
  if (name == "without") return TrainSetting::WithoutPerturbedTrain;
  return std::nullopt;
}

std::vector<PerturbationSpec> all_dimensions(double magnitude) {
  std::vector<PerturbationSpec> out;
  for (auto p : kPerturbedDimensions) out.push_back({p, magnitude});
  return out;
}

std::uint64_t episode_seed(std::uint64_t base_seed, Perturbation dimension, int episode) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(dimension), static_cast<std::uint64_t>(episode));
}

namespace {

constexpr double kTrainPerturbationMagnitude = 0.5;

// One expert demonstration. The rollout keeps going for `gap` steps after the
// first success so that the states right before success still get a target.
void append_demo(std::vector<TrainSample>& out, const EpisodeConfig& env_cfg, const PerturbationSpec& spec,
                 int gap, std::uint64_t seed) {
  EpisodeConfig cfg = env_cfg;
  cfg.success_enabled = false;
  Rng rng(derive_seed(seed, 0xe4u));
  WorldState state = reset(cfg, spec, seed);

  std::vector<Observation> obs{observe(state, cfg, spec, rng)};
  std::vector<Vec2> actions;
  int first_success = -1;
  // Observations o_0 .. o_{T-1} are usable as inputs or targets.
  while (state.t < cfg.max_steps - 1) {
    if (first_success >= 0 && state.t >= first_success - 1 + gap) break;
    const Vec2 a = expert_action(state, cfg);
    actions.push_back(a);
    state = step(state, a, cfg, rng).state;
    obs.push_back(observe(state, cfg, spec, rng));
    if (first_success < 0 && (state.agent_pos - state.goal_pos).norm() < cfg.success_radius) {
      first_success = state.t;
    }
  }
  const int last_input = first_success >= 0 ? first_success - 1 : cfg.max_steps - 1;
  for (int t = 0; t <= last_input && t + gap < static_cast<int>(obs.size()); ++t) {
    out.push_back({obs[t], actions[t], obs[t + gap].image});
  }
}

CellStats summarize(const std::vector<EpisodeResult>& results) {
  CellStats s;
  s.episodes = static_cast<int>(results.size());
  for (const auto& r : results) {
    s.successes += r.success ? 1 : 0;
    s.mean_steps += r.steps_taken;
    s.mean_updates += r.updates_performed;
    s.mean_pairs_accepted += r.pairs_accepted;
  }
  if (s.episodes > 0) {
    s.mean_steps /= s.episodes;
    s.mean_updates /= s.episodes;
    s.mean_pairs_accepted /= s.episodes;
  }
  return s;
}

double median(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

std::vector<TrainSample> build_datasets(TrainSetting setting, const EpisodeConfig& env_cfg,
                                        const std::vector<PerturbationSpec>& dims, int gap, int num_demos,
                                        std::uint64_t seed) {
  if (num_demos < 1) throw UsageError("build_datasets requires num_demos >= 1");
  if (gap < 1) throw UsageError("build_datasets requires gap >= 1");
  env_cfg.validate();
  std::vector<TrainSample> out;
  for (int i = 0; i < num_demos; ++i) {
    const std::uint64_t demo_seed = derive_seed(seed, 0xd3u, static_cast<std::uint64_t>(i));
    PerturbationSpec spec{Perturbation::Clean, 0.0};
    if (setting == TrainSetting::WithPerturbedTrain && !dims.empty()) {
      Rng pick(derive_seed(demo_seed, 0x91u));
      if (std::uniform_real_distribution<double>(0.0, 1.0)(pick) >= 0.5) {
        const auto idx = std::uniform_int_distribution<std::size_t>(0, dims.size() - 1)(pick);
        spec = {dims[idx].dimension, kTrainPerturbationMagnitude};
      }
    }
    append_demo(out, env_cfg, spec, gap, demo_seed);
  }
  return out;
}

void EvalConfig::validate() const {
  if (episodes_per_dim < 1) throw ConfigError("eval.episodes_per_dim must be >= 1");
  if (dimensions.empty()) throw ConfigError("eval.dimensions must not be empty");
  if (modes.empty()) throw ConfigError("eval.modes must not be empty");
}

std::optional<std::size_t> EvalReport::mode_index(TTTMode mode) const {
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (modes[i] == mode) return i;
  }
  return std::nullopt;
}

double EvalReport::rate(TTTMode mode, std::size_t dim) const {
  const auto m = mode_index(mode);
  if (!m) throw UsageError("mode not present in report");
  return cells.at(*m).at(dim).rate();
}

double EvalReport::average(TTTMode mode) const {
  double sum = 0.0;
  for (std::size_t d = 0; d < dimensions.size(); ++d) sum += rate(mode, d);
  return sum / static_cast<double>(dimensions.size());
}

bool EvalReport::has_delta() const {
  return mode_index(TTTMode::Base).has_value() && mode_index(TTTMode::Adaptive).has_value();
}

double EvalReport::delta(std::size_t dim) const { return rate(TTTMode::Adaptive, dim) - rate(TTTMode::Base, dim); }

double EvalReport::average_delta() const { return average(TTTMode::Adaptive) - average(TTTMode::Base); }

double calibrate_fixed_threshold(const ModelParams& checkpoint, const EpisodeConfig& env_cfg,
                                 const TTTConfig& ttt_cfg, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("calibrate_fixed_threshold requires episodes >= 1");
  TTTConfig cfg = ttt_cfg;
  cfg.mode = TTTMode::Base;
  std::vector<double> variances;
  for (int e = 0; e < episodes; ++e) {
    const auto seeds = EpisodeSeeds::from(episode_seed(seed, Perturbation::Clean, e), cfg.mode);
    const auto out = run_episode(checkpoint, env_cfg, {Perturbation::Clean, 0.0}, cfg, seeds);
    for (const auto& d : out.result.per_step_decisions) variances.push_back(d.variance);
  }
  return median(std::move(variances));
}

EvalReport evaluate(const ModelParams& checkpoint, const EpisodeConfig& env_cfg, const EvalConfig& eval_cfg,
                    const TTTConfig& ttt_cfg) {
  eval_cfg.validate();
  env_cfg.validate();
  ttt_cfg.validate();

  EvalReport report;
  report.setting = eval_cfg.setting;
  report.modes = eval_cfg.modes;
  report.dimensions = eval_cfg.dimensions;

  TTTConfig base_cfg = ttt_cfg;
  const bool needs_threshold =
      std::find(eval_cfg.modes.begin(), eval_cfg.modes.end(), TTTMode::FixedThreshold) != eval_cfg.modes.end();
  if (needs_threshold && !base_cfg.fixed_threshold) {
    base_cfg.fixed_threshold = calibrate_fixed_threshold(checkpoint, env_cfg, ttt_cfg, 100,
                                                         derive_seed(eval_cfg.base_seed, 0x7a0u));
  }
  if (needs_threshold) report.fixed_threshold = base_cfg.fixed_threshold;

  for (TTTMode mode : eval_cfg.modes) {
    TTTConfig cfg = base_cfg;
    cfg.mode = mode;
    std::vector<CellStats> row;
    for (const auto& spec : eval_cfg.dimensions) {
      std::vector<EpisodeResult> results;
      results.reserve(eval_cfg.episodes_per_dim);
      ModelParams carried = checkpoint;
      for (int e = 0; e < eval_cfg.episodes_per_dim; ++e) {
        const std::uint64_t env_seed = episode_seed(eval_cfg.base_seed, spec.dimension, e);
        const ModelParams& start = cfg.reset_q_per_episode ? checkpoint : carried;
        auto out = run_episode(start, env_cfg, spec, cfg, EpisodeSeeds::from(env_seed, cfg.mode));
        if (eval_cfg.record_episodes) {
          const auto& r = out.result;
          report.episodes.push_back({spec.dimension, mode, e, env_seed, r.success, r.steps_taken,
                                     r.updates_performed, r.pairs_accepted, r.pairs_matured,
                                     r.final_q_delta_norm});
        }
        if (!cfg.reset_q_per_episode) carried = std::move(out.params);
        results.push_back(std::move(out.result));
      }
      row.push_back(summarize(results));
    }
    report.cells.push_back(std::move(row));
  }

  report.metadata = {{"env", to_json(env_cfg)},
                     {"ttt", to_json(base_cfg)},
                     {"eval", to_json(eval_cfg)},
                     {"checkpoint_fingerprint", params_fingerprint(checkpoint)}};
  return report;
}

const AblationRow& AblationReport::row(TTTMode mode) const {
  for (const auto& r : rows) {
    if (r.mode == mode) return r;
  }
  throw UsageError("ablation row missing");
}

AblationReport ablate(const ModelParams& checkpoint, const EpisodeConfig& env_cfg, const TTTConfig& ttt_cfg,
                      int episodes, std::uint64_t seed) {
  EvalConfig eval_cfg;
  eval_cfg.setting = TrainSetting::WithPerturbedTrain;
  eval_cfg.dimensions = {{Perturbation::Robot, 1.0}};
  eval_cfg.episodes_per_dim = episodes;
  eval_cfg.modes = {TTTMode::Base, TTTMode::Indiscriminate, TTTMode::FixedThreshold, TTTMode::Adaptive};
  eval_cfg.base_seed = seed;
  const EvalReport grid = evaluate(checkpoint, env_cfg, eval_cfg, ttt_cfg);

  AblationReport report;
  report.fixed_threshold = grid.fixed_threshold.value_or(0.0);
  report.rows = {
      {TTTMode::Base, false, false, false, grid.cells[0][0]},
      {TTTMode::Indiscriminate, true, false, false, grid.cells[1][0]},
      {TTTMode::FixedThreshold, true, true, false, grid.cells[2][0]},
      {TTTMode::Adaptive, true, true, true, grid.cells[3][0]},
  };
  report.metadata = grid.metadata;
  return report;
}

const TimingRow& TimingReport::row(TTTMode mode) const {
  for (const auto& r : rows) {
    if (r.mode == mode) return r;
  }
  throw UsageError("timing row missing");
}

TimingReport bench(const ModelParams& checkpoint, const EpisodeConfig& env_cfg, const TTTConfig& ttt_cfg,
                   int episodes, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("bench requires episodes >= 1");
  const std::vector<TTTMode> modes = {TTTMode::Base, TTTMode::Indiscriminate, TTTMode::Adaptive};
  const PerturbationSpec spec{Perturbation::Robot, 1.0};
  TimingReport report;
  for (auto m : modes) report.rows.push_back({m, episodes, 0.0, 0.0, 0.0, 1.0});

  // Modes are interleaved per episode so slow drifts in machine load hit all of them.
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t env_seed = episode_seed(seed, spec.dimension, e);
    for (std::size_t i = 0; i < modes.size(); ++i) {
      TTTConfig cfg = ttt_cfg;
      cfg.mode = modes[i];
      const auto out = run_episode(checkpoint, env_cfg, spec, cfg, EpisodeSeeds::from(env_seed, cfg.mode));
      auto& row = report.rows[i];
      row.mean_wall_ms += std::chrono::duration<double, std::milli>(out.result.wall_time).count();
      row.mean_updates += out.result.updates_performed;
      row.mean_steps += out.result.steps_taken;
    }
  }
  for (auto& row : report.rows) {
    row.mean_wall_ms /= episodes;
    row.mean_updates /= episodes;
    row.mean_steps /= episodes;
  }
  const double base_ms = report.rows[0].mean_wall_ms;
  for (auto& row : report.rows) row.relative_time = base_ms > 0.0 ? row.mean_wall_ms / base_ms : 1.0;
  report.rows[0].relative_time = 1.0;

  report.metadata = {{"env", to_json(env_cfg)},
                     {"ttt", to_json(ttt_cfg)},
                     {"episodes", episodes},
                     {"seed", seed},
                     {"dimension", "robot"},
                     {"checkpoint_fingerprint", params_fingerprint(checkpoint)}};
  return report;
}

AlphaCheck check_alpha(const ModelParams& checkpoint, const EpisodeConfig& env_cfg, const TTTConfig& ttt_cfg,
                       int trials, std::uint64_t seed) {
  if (trials < 1) throw UsageError("check_alpha requires trials >= 1");
  ttt_cfg.validate();
  const std::size_t batch_size = static_cast<std::size_t>(ttt_cfg.batch_size);
  constexpr std::size_t kHeldOut = 64;

  // Pool of attained pairs from the checkpoint's own Clean rollouts.
  std::vector<Observation> inputs;
  std::vector<Vec> targets;
  const PerturbationSpec clean{Perturbation::Clean, 0.0};
  for (int e = 0; inputs.size() < 4 * (kHeldOut + batch_size); ++e) {
    const std::uint64_t s = episode_seed(seed, Perturbation::Clean, e);
    Rng env_rng(derive_seed(s, 0xe4u));
    WorldState state = reset(env_cfg, clean, s);
    std::vector<Observation> traj{observe(state, env_cfg, clean, env_rng)};
    while (true) {
      const auto dist = action_distribution(checkpoint, forward(checkpoint, traj.back()));
      const auto next = step(state, dist.mean, env_cfg, env_rng);
      state = next.state;
      if (next.done) break;
      traj.push_back(observe(state, env_cfg, clean, env_rng));
    }
    for (std::size_t t = 0; t + ttt_cfg.gap < traj.size(); ++t) {
      inputs.push_back(traj[t]);
      targets.push_back(traj[t + ttt_cfg.gap].image);
    }
    if (e > 100000) throw UsageError("check_alpha could not collect enough pairs");
  }

  AlphaCheck out;
  Rng pick(derive_seed(seed, 0xa1u));
  std::vector<std::size_t> order(inputs.size());
  for (int trial = 0; trial < trials; ++trial) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), pick);
    TTTBatch batch(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) batch.push(inputs[order[i]], targets[order[i]]);
    std::vector<Observation> held_in;
    std::vector<Vec> held_tg;
    for (std::size_t i = batch_size; i < batch_size + kHeldOut; ++i) {
      held_in.push_back(inputs[order[i]]);
      held_tg.push_back(targets[order[i]]);
    }
    const double before = loss_img_batch(checkpoint, held_in, held_tg);
    const ModelParams updated = ttt_update(checkpoint, batch, ttt_cfg.alpha);
    const double after = loss_img_batch(updated, held_in, held_tg);
    const double rel = std::abs(after - before) / before;
    out.mean_relative_change += rel;
    out.max_relative_change = std::max(out.max_relative_change, rel);
  }
  out.trials = trials;
  out.mean_relative_change /= trials;
  return out;
}

json to_json(const EpisodeConfig& c) {
  return json{{"image_side", c.image_side},
              {"max_steps", c.max_steps},
              {"success_radius", c.success_radius},
              {"action_cap", c.action_cap},
              {"dynamics_noise_std", c.dynamics_noise_std},
              {"num_distractors", c.num_distractors},
              {"num_goal_ids", c.num_goal_ids},
              {"blob_sigma", c.blob_sigma},
              {"success_enabled", c.success_enabled}};
}

json to_json(const TTTConfig& c) {
  json j{{"gap", c.gap},
         {"batch_size", c.batch_size},
         {"num_samples", c.num_samples},
         {"buffer_cap", c.buffer_cap},
         {"rho", c.rho},
         {"alpha", c.alpha},
         {"mode", to_string(c.mode)},
         {"reset_q_per_episode", c.reset_q_per_episode}};
  j["fixed_threshold"] = c.fixed_threshold ? json(*c.fixed_threshold) : json(nullptr);
  return j;
}

json to_json(const EvalConfig& c) {
  json dims = json::array();
  for (const auto& d : c.dimensions) dims.push_back({{"dimension", to_string(d.dimension)}, {"magnitude", d.magnitude}});
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  return json{{"setting", to_string(c.setting)},
              {"dimensions", dims},
              {"episodes_per_dim", c.episodes_per_dim},
              {"modes", modes},
              {"base_seed", c.base_seed}};
}

}  // namespace t3vf
