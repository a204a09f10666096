#pragma once

// Experiment drivers: demonstration datasets, the two-setting evaluation
// grid, the component ablation ladder and the per-episode cost benchmark.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "t3vf/env.hpp"
#include "t3vf/model.hpp"
#include "t3vf/ttt.hpp"

namespace t3vf {

enum class TrainSetting { WithPerturbedTrain, WithoutPerturbedTrain };

std::string_view to_string(TrainSetting setting);
std::optional<TrainSetting> parse_setting(std::string_view name);

/// Default perturbation list: all seven dimensions at the given magnitude.
std::vector<PerturbationSpec> all_dimensions(double magnitude = 1.0);

/// Expert demonstrations as (o_t, l, a_t, o_{t+n}) samples. Without perturbed
/// training every demo is Clean; with it, each demo is Clean with probability
/// 0.5 and otherwise uses a uniformly chosen dimension from `dims` at
/// magnitude 0.5.
std::vector<TrainSample> build_datasets(TrainSetting setting, const EpisodeConfig& env_cfg,
                                        const std::vector<PerturbationSpec>& dims, int gap,
                                        int num_demos, std::uint64_t seed);

struct EvalConfig {
  TrainSetting setting = TrainSetting::WithPerturbedTrain;
  std::vector<PerturbationSpec> dimensions = all_dimensions();
  int episodes_per_dim = 500;
  std::vector<TTTMode> modes = {TTTMode::Base, TTTMode::Adaptive};
  std::uint64_t base_seed = 0;
  bool record_episodes = false;

  void validate() const;
};

/// Environment seed of episode `episode` under `dimension`; shared by every mode.
std::uint64_t episode_seed(std::uint64_t base_seed, Perturbation dimension, int episode);

struct CellStats {
  int episodes = 0;
  int successes = 0;
  double mean_steps = 0.0;
  double mean_updates = 0.0;
  double mean_pairs_accepted = 0.0;

  double rate() const { return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes; }
};

struct EpisodeRecord {
  Perturbation dimension = Perturbation::Clean;
  TTTMode mode = TTTMode::Base;
  int episode = 0;
  std::uint64_t env_seed = 0;
  bool success = false;
  int steps = 0;
  int updates = 0;
  int pairs_accepted = 0;
  int pairs_matured = 0;
  double final_q_delta_norm = 0.0;
};

struct EvalReport {
  TrainSetting setting = TrainSetting::WithPerturbedTrain;
  std::vector<TTTMode> modes;
  std::vector<PerturbationSpec> dimensions;
  std::vector<std::vector<CellStats>> cells;  // [mode][dimension]
  std::optional<double> fixed_threshold;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<EpisodeRecord> episodes;

  std::optional<std::size_t> mode_index(TTTMode mode) const;
  double rate(TTTMode mode, std::size_t dim) const;
  /// Arithmetic mean of the per-dimension rates.
  double average(TTTMode mode) const;
  bool has_delta() const;
  /// rate(Adaptive) - rate(Base) for one dimension.
  double delta(std::size_t dim) const;
  double average_delta() const;
};

/// Median action variance over Base-mode Clean episodes: the default
/// threshold for the FixedThreshold ablation row.
double calibrate_fixed_threshold(const ModelParams& checkpoint, const EpisodeConfig& env_cfg,
                                 const TTTConfig& ttt_cfg, int episodes, std::uint64_t seed);

EvalReport evaluate(const ModelParams& checkpoint, const EpisodeConfig& env_cfg,
                    const EvalConfig& eval_cfg, const TTTConfig& ttt_cfg);

struct AblationRow {
  TTTMode mode;
  bool ttt;
  bool variance_filter;
  bool adaptive_buffer;
  CellStats stats;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // Base, Indiscriminate, FixedThreshold, Adaptive
  double fixed_threshold = 0.0;
  nlohmann::json metadata = nlohmann::json::object();

  const AblationRow& row(TTTMode mode) const;
};

/// The four-row ladder on the Robot dimension with paired seeds.
AblationReport ablate(const ModelParams& checkpoint, const EpisodeConfig& env_cfg,
                      const TTTConfig& ttt_cfg, int episodes, std::uint64_t seed);

struct TimingRow {
  TTTMode mode;
  int episodes = 0;
  double mean_wall_ms = 0.0;
  double mean_updates = 0.0;
  double mean_steps = 0.0;
  double relative_time = 1.0;
};

struct TimingReport {
  std::vector<TimingRow> rows;  // Base, Indiscriminate, Adaptive
  nlohmann::json metadata = nlohmann::json::object();

  const TimingRow& row(TTTMode mode) const;
};

/// Single-threaded wall-time and update-count comparison on the Robot dimension.
TimingReport bench(const ModelParams& checkpoint, const EpisodeConfig& env_cfg,
                   const TTTConfig& ttt_cfg, int episodes, std::uint64_t seed);

struct AlphaCheck {
  double mean_relative_change = 0.0;  // |L_after - L_before| / L_before on held-out pairs
  double max_relative_change = 0.0;
  int trials = 0;
};

/// Applies single q-updates from Clean Base-mode pairs and measures how much
/// the held-out image loss moves.
AlphaCheck check_alpha(const ModelParams& checkpoint, const EpisodeConfig& env_cfg,
                       const TTTConfig& ttt_cfg, int trials, std::uint64_t seed);

nlohmann::json to_json(const EpisodeConfig& cfg);
nlohmann::json to_json(const TTTConfig& cfg);
nlohmann::json to_json(const EvalConfig& cfg);

struct EmitOptions {
  bool include_episodes = false;
};

// Each writer creates out_dir if needed and returns the files it wrote.
// Throws IoError when the directory or a file cannot be written.
std::vector<std::filesystem::path> emit_reports(const EvalReport& report, const std::filesystem::path& out_dir,
                                                const EmitOptions& options = {});
std::vector<std::filesystem::path> emit_reports(const AblationReport& report, const std::filesystem::path& out_dir,
                                                const EmitOptions& options = {});
std::vector<std::filesystem::path> emit_reports(const TimingReport& report, const std::filesystem::path& out_dir,
                                                const EmitOptions& options = {});

std::string report_csv(const EvalReport& report);
std::string report_csv(const AblationReport& report);
std::string report_csv(const TimingReport& report);
nlohmann::json report_json(const EvalReport& report, bool include_episodes = false);
nlohmann::json report_json(const AblationReport& report);
nlohmann::json report_json(const TimingReport& report);
std::string timing_svg(const TimingReport& report);

/// Fixed one-decimal formatting, locale independent.
std::string format_fixed(double value, int decimals, bool explicit_sign = false);

}  // namespace t3vf
