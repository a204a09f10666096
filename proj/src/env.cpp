#include "t3vf/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace t3vf {

namespace {

constexpr double kAgentAmplitude = 1.0;
constexpr double kGoalAmplitude = 0.7;
constexpr double kDistractorAmplitude = 0.4;

constexpr double kRobotShift = 0.25;
constexpr double kLayoutShift = 0.25;
constexpr double kNoiseStd = 0.15;
constexpr double kGratingAmplitude = 0.2;
constexpr double kCameraShiftPixels = 2.0;
constexpr double kLightGain = 0.5;

Vec2 clip_unit(const Vec2& p) { return p.cwiseMax(0.0).cwiseMin(1.0); }

Vec2 uniform_in(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  const double x = u(rng);
  const double y = u(rng);
  return {x, y};
}

void add_blob(Vec& image, int side, const Vec2& pos, double amplitude, double sigma) {
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double cx = pos.x() * side;
  const double cy = pos.y() * side;
  for (int r = 0; r < side; ++r) {
    const double dy = (r + 0.5) - cy;
    for (int c = 0; c < side; ++c) {
      const double dx = (c + 0.5) - cx;
      image[r * side + c] += amplitude * std::exp(-(dx * dx + dy * dy) * inv_two_var);
    }
  }
}

Vec shift_image(const Vec& image, int side, int shift) {
  Vec out = Vec::Zero(image.size());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int sr = r - shift;
      const int sc = c - shift;
      if (sr >= 0 && sr < side && sc >= 0 && sc < side) out[r * side + c] = image[sr * side + sc];
    }
  }
  return out;
}

}  // namespace

void EpisodeConfig::validate() const {
  if (image_side < 4) throw ConfigError("env.image_side must be >= 4");
  if (max_steps < 1) throw ConfigError("env.max_steps must be >= 1");
  if (!(success_radius > 0.0)) throw ConfigError("env.success_radius must be > 0");
  if (!(action_cap > 0.0)) throw ConfigError("env.action_cap must be > 0");
  if (!(dynamics_noise_std >= 0.0)) throw ConfigError("env.dynamics_noise_std must be >= 0");
  if (num_distractors < 0) throw ConfigError("env.num_distractors must be >= 0");
  if (num_goal_ids < 1) throw ConfigError("env.num_goal_ids must be >= 1");
  if (!(blob_sigma > 0.0)) throw ConfigError("env.blob_sigma must be > 0");
}

std::string_view to_string(Perturbation p) {
  switch (p) {
    case Perturbation::Clean: return "clean";
    case Perturbation::Robot: return "robot";
    case Perturbation::Language: return "language";
    case Perturbation::Noise: return "noise";
    case Perturbation::Layout: return "layout";
    case Perturbation::Background: return "background";
    case Perturbation::Camera: return "camera";
    case Perturbation::Light: return "light";
  }
  return "unknown";
}

std::optional<Perturbation> parse_perturbation(std::string_view name) {
  for (auto p : {Perturbation::Clean, Perturbation::Robot, Perturbation::Language,
                 Perturbation::Noise, Perturbation::Layout, Perturbation::Background,
                 Perturbation::Camera, Perturbation::Light}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

Vec2 clip_norm(const Vec2& v, double cap) {
  const double norm = v.norm();
  if (norm <= cap) return v;
  return v * (cap / norm);
}

WorldState reset(const EpisodeConfig& config, const PerturbationSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  WorldState s;
  // Draw order is fixed so that every dimension consumes the same stream.
  s.agent_pos = uniform_in(rng, 0.1, 0.9);
  s.goal_pos = uniform_in(rng, 0.15, 0.85);
  s.distractor_pos.reserve(config.num_distractors);
  for (int i = 0; i < config.num_distractors; ++i) s.distractor_pos.push_back(uniform_in(rng, 0.15, 0.85));
  s.goal_id = std::uniform_int_distribution<int>(0, config.num_goal_ids - 1)(rng);
  std::uniform_real_distribution<double> freq(1.0, 3.0);
  s.background.freq_x = freq(rng);
  s.background.freq_y = freq(rng);
  s.background.phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);

  const double m = spec.effective();
  if (spec.is(Perturbation::Robot)) {
    s.agent_pos = clip_unit(s.agent_pos + Vec2::Constant(m * kRobotShift));
  } else if (spec.is(Perturbation::Layout)) {
    s.goal_pos = clip_unit(s.goal_pos - Vec2::Constant(m * kLayoutShift));
    for (auto& d : s.distractor_pos) d = clip_unit(d - Vec2::Constant(m * kLayoutShift));
  }
  return s;
}

Vec render_clean(const WorldState& state, const EpisodeConfig& config) {
  const int side = config.image_side;
  Vec image = Vec::Zero(config.image_size());
  add_blob(image, side, state.agent_pos, kAgentAmplitude, config.blob_sigma);
  add_blob(image, side, state.goal_pos, kGoalAmplitude, config.blob_sigma);
  for (const auto& d : state.distractor_pos) add_blob(image, side, d, kDistractorAmplitude, config.blob_sigma);
  return image.cwiseMax(0.0).cwiseMin(1.0);
}

Vec render(const WorldState& state, const EpisodeConfig& config, const PerturbationSpec& spec,
           Rng& rng) {
  const int side = config.image_side;
  Vec image = render_clean(state, config);
  const double m = spec.effective();
  if (m <= 0.0) return image;

  switch (spec.dimension) {
    case Perturbation::Noise: {
      std::normal_distribution<double> noise(0.0, 1.0);
      for (Eigen::Index i = 0; i < image.size(); ++i) image[i] += kNoiseStd * m * noise(rng);
      break;
    }
    case Perturbation::Background: {
      const auto& g = state.background;
      for (int r = 0; r < side; ++r) {
        const double y = (r + 0.5) / side;
        for (int c = 0; c < side; ++c) {
          const double x = (c + 0.5) / side;
          const double wave = std::sin(2.0 * std::numbers::pi * (g.freq_x * x + g.freq_y * y) + g.phase);
          image[r * side + c] += kGratingAmplitude * m * 0.5 * (1.0 + wave);
        }
      }
      break;
    }
    case Perturbation::Camera:
      image = shift_image(image, side, static_cast<int>(std::lround(kCameraShiftPixels * m)));
      break;
    case Perturbation::Light:
      image *= 1.0 + kLightGain * m;
      break;
    default:
      break;
  }
  return image.cwiseMax(0.0).cwiseMin(1.0);
}

Vec encode_instruction(int goal_id, const PerturbationSpec& spec, const EpisodeConfig& config) {
  if (goal_id < 0 || goal_id >= config.num_goal_ids) throw UsageError("goal_id out of range");
  Vec e = Vec::Zero(config.num_goal_ids);
  e[goal_id] = 1.0;
  if (!spec.is(Perturbation::Language)) return e;

  const Mat& mix = instruction_mixing_matrix();
  if (mix.rows() != config.num_goal_ids) {
    throw UsageError("language perturbation requires num_goal_ids == 8 (checked-in mixing matrix)");
  }
  const double m = spec.effective();
  Vec mixed = (1.0 - m) * e + m * (mix * e);
  return mixed / mixed.norm();
}

Observation observe(const WorldState& state, const EpisodeConfig& config,
                    const PerturbationSpec& spec, Rng& rng) {
  return {render(state, config, spec, rng), encode_instruction(state.goal_id, spec, config)};
}

StepResult step(const WorldState& state, const Vec2& action, const EpisodeConfig& config,
                Rng& rng) {
  if (state.succeeded || state.t >= config.max_steps) {
    throw UsageError("step called on a finished episode");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double nx = gauss(rng);
  const double ny = gauss(rng);

  StepResult out{state, false, false};
  const Vec2 noise = config.dynamics_noise_std * Vec2(nx, ny);
  out.state.agent_pos = clip_unit(state.agent_pos + clip_norm(action, config.action_cap) + noise);
  out.state.t = state.t + 1;
  out.success = config.success_enabled &&
                (out.state.agent_pos - state.goal_pos).norm() < config.success_radius;
  out.state.succeeded = out.success;
  out.done = out.success || out.state.t == config.max_steps;
  return out;
}

Vec2 expert_action(const WorldState& state, const EpisodeConfig& config) {
  return clip_norm(state.goal_pos - state.agent_pos, config.action_cap);
}

}  // namespace t3vf
