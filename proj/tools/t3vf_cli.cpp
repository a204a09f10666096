// Command-line driver: pretrain, eval, ablate, bench.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 I/O error
// (including unreadable or malformed checkpoints), 4 checkpoint whose
// dimensions do not match the configured model.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "t3vf/checkpoint.hpp"
#include "t3vf/harness.hpp"
#include "t3vf/run_config.hpp"

namespace fs = std::filesystem;
using namespace t3vf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDims = 4;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct PretrainFlags {
  std::string setting;
};

struct EvalFlags {
  std::string checkpoint;
  std::string setting;
  std::string modes;
  std::string dims;
  std::optional<int> episodes;
  bool record_episodes = false;
};

struct RunFlags {
  std::string checkpoint;
  std::optional<int> episodes;
};

RunConfig resolve_config(const GlobalFlags& g) {
  RunConfig cfg;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
    try {
      cfg = load_run_config(g.config);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  cfg.finalize();
  cfg.validate();
  return cfg;
}

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

Checkpoint load_for(const RunConfig& cfg, const std::string& flag) {
  const fs::path path = flag.empty() ? cfg.checkpoint_path() : fs::path(flag);
  return load_checkpoint(path, cfg.dims);
}

void report_written(const std::vector<fs::path>& files) {
  for (const auto& f : files) std::cerr << "wrote " << f.string() << "\n";
}

int cmd_pretrain(const GlobalFlags& g, const PretrainFlags& f) {
  RunConfig cfg = resolve_config(g);
  if (!f.setting.empty()) {
    const auto s = parse_setting(f.setting);
    if (!s) throw ConfigError("--setting must be 'with' or 'without'");
    cfg.eval.setting = *s;
  }
  ensure_out_dir(cfg.out_dir);

  std::cerr << "pretrain: " << cfg.num_demos << " demonstrations (" << to_string(cfg.eval.setting)
            << " perturbed train)\n";
  PretrainLog log;
  const Checkpoint ckpt = train_checkpoint(cfg, &log);

  const fs::path ckpt_path = cfg.out_dir / "checkpoint.json";
  save_checkpoint(ckpt, ckpt_path);
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    csv += std::to_string(e + 1) + "," + shortest(log.epoch_loss[e]) + "\n";
  }
  const fs::path log_path = cfg.out_dir / "train_log.csv";
  write_text(log_path, csv);
  report_written({ckpt_path, log_path});
  std::cout << "checkpoint " << ckpt_path.string() << " fingerprint " << params_fingerprint(ckpt.params)
            << " final_loss " << shortest(log.epoch_loss.back()) << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalFlags& g, const EvalFlags& f) {
  RunConfig cfg = resolve_config(g);
  if (!f.modes.empty()) cfg.eval.modes = parse_mode_list(f.modes);
  if (!f.dims.empty()) {
    const double magnitude = cfg.eval.dimensions.empty() ? 1.0 : cfg.eval.dimensions.front().magnitude;
    cfg.eval.dimensions = parse_dimension_list(f.dims, magnitude);
  }
  if (f.episodes) cfg.eval.episodes_per_dim = *f.episodes;
  if (f.record_episodes) cfg.eval.record_episodes = true;

  const Checkpoint ckpt = load_for(cfg, f.checkpoint);
  if (!f.setting.empty()) {
    const auto s = parse_setting(f.setting);
    if (!s) throw ConfigError("--setting must be 'with' or 'without'");
    cfg.eval.setting = *s;
  } else if (ckpt.metadata.contains("setting") && ckpt.metadata["setting"].is_string()) {
    if (const auto s = parse_setting(ckpt.metadata["setting"].get<std::string>())) cfg.eval.setting = *s;
  }
  cfg.eval.validate();

  EvalReport report = evaluate(ckpt.params, cfg.env, cfg.eval, cfg.ttt);
  report.metadata["config"] = to_json(cfg);
  report_written(emit_reports(report, cfg.out_dir, {cfg.eval.record_episodes}));
  std::cout << report_csv(report);
  return kExitOk;
}

int cmd_ablate(const GlobalFlags& g, const RunFlags& f) {
  RunConfig cfg = resolve_config(g);
  const int episodes = f.episodes.value_or(cfg.eval.episodes_per_dim);
  const Checkpoint ckpt = load_for(cfg, f.checkpoint);
  AblationReport report = ablate(ckpt.params, cfg.env, cfg.ttt, episodes, cfg.seed);
  report.metadata["config"] = to_json(cfg);
  report_written(emit_reports(report, cfg.out_dir));
  std::cout << report_csv(report);
  return kExitOk;
}

int cmd_bench(const GlobalFlags& g, const RunFlags& f) {
  RunConfig cfg = resolve_config(g);
  const int episodes = f.episodes.value_or(100);
  const Checkpoint ckpt = load_for(cfg, f.checkpoint);
  TimingReport report = bench(ckpt.params, cfg.env, cfg.ttt, episodes, cfg.seed);
  report.metadata["config"] = to_json(cfg);
  report_written(emit_reports(report, cfg.out_dir));
  std::cout << report_csv(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time training on the query tokens of a toy visual-foresight policy"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config, "INI configuration file");
  app.add_option("--seed", g.seed, "Overrides [run] seed");
  app.add_option("--out", g.out, "Output directory (overrides [paths] out_dir)");

  PretrainFlags pf;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Build demonstrations and train a checkpoint");
  pretrain_cmd->add_option("--setting", pf.setting, "with | without perturbed training data");

  EvalFlags ef;
  auto* eval_cmd = app.add_subcommand("eval", "Success-rate grid over perturbation dimensions and modes");
  eval_cmd->add_option("--checkpoint", ef.checkpoint, "Checkpoint file");
  eval_cmd->add_option("--setting", ef.setting, "with | without (recorded in the report)");
  eval_cmd->add_option("--modes", ef.modes, "Comma list of base,indiscriminate,fixed,adaptive");
  eval_cmd->add_option("--dims", ef.dims, "Comma list of dimensions, or 'all'");
  eval_cmd->add_option("--episodes", ef.episodes, "Episodes per dimension");
  eval_cmd->add_flag("--record-episodes", ef.record_episodes, "Include per-episode records in report.json");

  RunFlags af;
  auto* ablate_cmd = app.add_subcommand("ablate", "Four-row component ladder on the robot dimension");
  ablate_cmd->add_option("--checkpoint", af.checkpoint, "Checkpoint file");
  ablate_cmd->add_option("--episodes", af.episodes, "Episodes per row");

  RunFlags bf;
  auto* bench_cmd = app.add_subcommand("bench", "Per-episode wall time and update counts");
  bench_cmd->add_option("--checkpoint", bf.checkpoint, "Checkpoint file");
  bench_cmd->add_option("--episodes", bf.episodes, "Episodes per mode (default 100)");

  // Global flags are accepted after the subcommand name as well.
  for (auto* sub : {pretrain_cmd, eval_cmd, ablate_cmd, bench_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*pretrain_cmd) return cmd_pretrain(g, pf);
    if (*eval_cmd) return cmd_eval(g, ef);
    if (*ablate_cmd) return cmd_ablate(g, af);
    if (*bench_cmd) return cmd_bench(g, bf);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return e.kind() == CheckpointError::Kind::DimensionMismatch ? kExitDims : kExitIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
