#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "t3vf/checkpoint.hpp"
#include "t3vf/env.hpp"
#include "t3vf/harness.hpp"
#include "t3vf/model.hpp"
#include "t3vf/pretrain.hpp"
#include "t3vf/ttt.hpp"

namespace t3vf {

/// Consolidated configuration for the command-line tool. Loaded from an INI
/// document with sections [env] [model] [ttt] [eval] [pretrain] [paths] [run];
/// unknown sections or keys are rejected.
struct RunConfig {
  EpisodeConfig env;
  ModelDims dims;
  TTTConfig ttt;
  EvalConfig eval;
  PretrainHyper pretrain;
  int num_demos = 20000;
  // Empty means <out_dir>/checkpoint.json.
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;

  std::filesystem::path checkpoint_path() const;

  /// Propagates the global seed and env-derived model dims.
  void finalize();
  void validate() const;
};

/// Throws ConfigError on syntax errors, unknown keys or invalid values, and
/// IoError when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

nlohmann::json to_json(const RunConfig& cfg);

/// Comma-separated lists as used by the config file and CLI flags.
std::vector<TTTMode> parse_mode_list(const std::string& s);
/// Accepts dimension names or "all".
std::vector<PerturbationSpec> parse_dimension_list(const std::string& s, double magnitude);

/// Builds the demonstration set for cfg.eval.setting and pretrains on it.
/// The checkpoint metadata records the setting and the effective config.
Checkpoint train_checkpoint(const RunConfig& cfg, PretrainLog* log = nullptr);

}  // namespace t3vf
