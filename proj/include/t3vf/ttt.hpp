#pragma once

// Test-time training loop: variance-gated collection of predicted/attained
// image pairs and batched gradient steps on the query tokens only.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "t3vf/env.hpp"
#include "t3vf/model.hpp"

namespace t3vf {

enum class TTTMode { Base, Indiscriminate, FixedThreshold, Adaptive };

std::string_view to_string(TTTMode mode);
std::optional<TTTMode> parse_mode(std::string_view name);

struct TTTConfig {
  int gap = 4;           // n
  int batch_size = 4;    // B
  int num_samples = 5;   // K
  int buffer_cap = 10;   // |V|
  double rho = 0.3;
  double alpha = 100.0;
  TTTMode mode = TTTMode::Adaptive;
  // Only read in FixedThreshold mode; harness calibrates it when unset.
  std::optional<double> fixed_threshold;
  bool reset_q_per_episode = true;

  void validate() const;
};

/// FIFO window of recent action variances.
class VarianceBuffer {
 public:
  explicit VarianceBuffer(std::size_t capacity);

  /// Appends, evicting the oldest value first when full.
  void push(double value);

  std::size_t size() const { return values_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return values_.size() == capacity_; }
  bool empty() const { return values_.empty(); }
  const std::deque<double>& values() const { return values_; }

 private:
  std::size_t capacity_;
  std::deque<double> values_;
};

/// Nearest-rank lower quantile: the k-th smallest value, k = max(1, ceil(rho * len)).
double buffer_quantile(const VarianceBuffer& buffer, double rho);

struct FilterDecision {
  bool warmup = false;
  bool accepted = false;
};

/// One gate step. Below capacity the value is only recorded (warmup). At
/// capacity the oldest value is evicted, the new one appended, and the step is
/// accepted iff it does not exceed the rho-quantile of the updated window.
FilterDecision filter_step(VarianceBuffer& buffer, double variance, double rho);

struct VarianceStats {
  Vec2 mean;
  double variance;
};

/// Mean action and mean squared L2 deviation around it.
VarianceStats action_variance(std::span<const Vec2> samples);

struct PendingPair {
  int created_at = 0;
  int due_at = 0;
  Observation obs_at_t;
  Vec prediction_at_accept;  // diagnostic only; the update recomputes it
};

class TTTBatch {
 public:
  explicit TTTBatch(std::size_t capacity);

  /// Throws UsageError when already full.
  void push(Observation input, Vec target);
  void clear();

  std::size_t size() const { return inputs_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return inputs_.size() == capacity_; }
  std::span<const Observation> inputs() const { return inputs_; }
  std::span<const Vec> targets() const { return targets_; }

 private:
  std::size_t capacity_;
  std::vector<Observation> inputs_;
  std::vector<Vec> targets_;
};

/// Moves every pending pair due at t into the batch (creation order), using
/// current_image as the attained target. Returns the number matured.
std::size_t mature_pairs(std::deque<PendingPair>& pending, int t, const Vec& current_image,
                         TTTBatch& batch);

/// q <- q - alpha * grad_q L_img over the batch; all other blocks copied.
/// Throws UsageError on a partial batch.
ModelParams ttt_update(const ModelParams& params, const TTTBatch& batch, double alpha);

struct StepDecision {
  int t = 0;
  double variance = 0.0;
  bool warmup = false;
  bool accepted = false;
};

struct EpisodeResult {
  bool success = false;
  int steps_taken = 0;
  int updates_performed = 0;
  int pairs_accepted = 0;
  int pairs_matured = 0;
  std::vector<StepDecision> per_step_decisions;
  std::chrono::nanoseconds wall_time{0};
  double final_q_delta_norm = 0.0;
};

/// Environment and policy randomness are separate streams: every mode shares
/// the environment stream, and each mode draws actions from its own sub-seed.
struct EpisodeSeeds {
  std::uint64_t env = 0;
  std::uint64_t policy = 0;

  static EpisodeSeeds from(std::uint64_t seed, TTTMode mode);
};

struct EpisodeOutcome {
  EpisodeResult result;
  ModelParams params;
};

EpisodeOutcome run_episode(const ModelParams& params, const EpisodeConfig& env_cfg,
                           const PerturbationSpec& spec, const TTTConfig& ttt_cfg,
                           const EpisodeSeeds& seeds);

inline EpisodeOutcome run_episode(const ModelParams& params, const EpisodeConfig& env_cfg,
                                  const PerturbationSpec& spec, const TTTConfig& ttt_cfg,
                                  std::uint64_t seed) {
  return run_episode(params, env_cfg, spec, ttt_cfg, EpisodeSeeds::from(seed, ttt_cfg.mode));
}

}  // namespace t3vf
