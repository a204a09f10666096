#pragma once

// Synthetic 2D reach task rendered to a small grayscale image.
//
// The agent (brightest blob) must reach the goal blob while distractor blobs
// sit elsewhere in the unit-square arena. Seven perturbation dimensions shift
// either the initial state (Robot, Layout), the instruction (Language) or
// the rendered pixels (Noise, Background, Camera, Light).

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "t3vf/common.hpp"

namespace t3vf {

struct EpisodeConfig {
  int image_side = 16;
  int max_steps = 60;
  double success_radius = 0.06;
  double action_cap = 0.08;
  double dynamics_noise_std = 0.005;
  int num_distractors = 2;
  int num_goal_ids = 8;
  double blob_sigma = 1.2;
  // When false, episodes always run to max_steps (long-episode benchmarks).
  bool success_enabled = true;

  int image_size() const { return image_side * image_side; }
  void validate() const;
};

enum class Perturbation { Clean, Robot, Language, Noise, Layout, Background, Camera, Light };

inline constexpr std::array<Perturbation, 7> kPerturbedDimensions = {
    Perturbation::Robot,      Perturbation::Language, Perturbation::Noise, Perturbation::Layout,
    Perturbation::Background, Perturbation::Camera,   Perturbation::Light};

std::string_view to_string(Perturbation p);
std::optional<Perturbation> parse_perturbation(std::string_view name);

struct PerturbationSpec {
  Perturbation dimension = Perturbation::Clean;
  double magnitude = 1.0;

  /// Magnitude actually applied; Clean ignores the stored value.
  double effective() const { return dimension == Perturbation::Clean ? 0.0 : magnitude; }
  bool is(Perturbation p) const { return dimension == p && effective() > 0.0; }
};

struct Grating {
  double freq_x = 0.0;
  double freq_y = 0.0;
  double phase = 0.0;

  bool operator==(const Grating&) const = default;
};

struct WorldState {
  Vec2 agent_pos = Vec2::Zero();
  Vec2 goal_pos = Vec2::Zero();
  std::vector<Vec2> distractor_pos;
  int goal_id = 0;
  int t = 0;
  bool succeeded = false;
  // Per-episode background pattern; only rendered under Background.
  Grating background;

  bool operator==(const WorldState&) const = default;
};

struct Observation {
  Vec image;
  Vec instruction;
};

struct StepResult {
  WorldState state;
  bool done = false;
  bool success = false;
};

WorldState reset(const EpisodeConfig& config, const PerturbationSpec& spec, std::uint64_t seed);

Vec render(const WorldState& state, const EpisodeConfig& config, const PerturbationSpec& spec,
           Rng& rng);

/// Clean base image (blobs only), before any pixel-level perturbation.
Vec render_clean(const WorldState& state, const EpisodeConfig& config);

Vec encode_instruction(int goal_id, const PerturbationSpec& spec, const EpisodeConfig& config);

Observation observe(const WorldState& state, const EpisodeConfig& config,
                    const PerturbationSpec& spec, Rng& rng);

/// Throws UsageError if the episode has already finished.
StepResult step(const WorldState& state, const Vec2& action, const EpisodeConfig& config,
                Rng& rng);

Vec2 expert_action(const WorldState& state, const EpisodeConfig& config);

/// Rescales v so its L2 norm does not exceed cap.
Vec2 clip_norm(const Vec2& v, double cap);

/// The checked-in doubly-stochastic instruction mixing matrix (8x8).
const Mat& instruction_mixing_matrix();

}  // namespace t3vf
