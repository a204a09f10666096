#include "t3vf/run_config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>


namespace t3vf {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"env",
       {"image_side", "max_steps", "success_radius", "action_cap", "dynamics_noise_std", "num_distractors",
        "num_goal_ids", "blob_sigma", "success_enabled"}},
      {"model", {"query", "inst", "img", "act", "dep"}},
      {"ttt",
       {"gap", "batch_size", "num_samples", "buffer_cap", "rho", "alpha", "mode", "fixed_threshold",
        "reset_q_per_episode"}},
      {"eval", {"setting", "dimensions", "magnitude", "episodes_per_dim", "modes", "record_episodes"}},
      {"pretrain", {"epochs", "batch_size", "learning_rate", "lambda", "num_demos"}},
      {"paths", {"checkpoint", "out_dir"}},
      {"run", {"seed"}},
  };
  return keys;
}

template <typename T>
void read(const pt::ptree& section, const std::string& sec_name, const char* key, T& out) {
  const auto node = section.get_child_optional(key);
  if (!node) return;
  try {
    out = node->get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    throw ConfigError("invalid value for " + sec_name + "." + key + ": '" + node->data() + "'");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

std::vector<TTTMode> parse_mode_list(const std::string& s) {
  std::vector<TTTMode> out;
  for (const auto& name : split_list(s)) {
    const auto m = parse_mode(name);
    if (!m) throw ConfigError("unknown mode '" + name + "'");
    out.push_back(*m);
  }
  return out;
}

std::vector<PerturbationSpec> parse_dimension_list(const std::string& s, double magnitude) {
  std::vector<PerturbationSpec> out;
  for (const auto& name : split_list(s)) {
    if (name == "all") {
      for (const auto& d : all_dimensions(magnitude)) out.push_back(d);
      continue;
    }
    const auto p = parse_perturbation(name);
    if (!p) throw ConfigError("unknown perturbation dimension '" + name + "'");
    out.push_back({*p, magnitude});
  }
  return out;
}

void RunConfig::finalize() {
  const ModelDims env_dims = ModelDims::for_env(env);
  dims.obs = env_dims.obs;
  dims.instr = env_dims.instr;
  pretrain.seed = seed;
  eval.base_seed = seed;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out_dir / "checkpoint.json" : checkpoint;
}

void RunConfig::validate() const {
  env.validate();
  dims.validate();
  ttt.validate();
  eval.validate();
  pretrain.validate();
  if (num_demos < 1) throw ConfigError("pretrain.num_demos must be >= 1");
  if (dims.instr != env.num_goal_ids) throw ConfigError("model instruction width must equal env.num_goal_ids");
}

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  for (const auto& [sec_name, section] : tree) {
    const auto it = known_keys().find(sec_name);
    if (it == known_keys().end()) {
      if (section.empty()) throw ConfigError("top-level key '" + sec_name + "' outside any section");
      throw ConfigError("unknown config section [" + sec_name + "]");
    }
    for (const auto& [key, value] : section) {
      if (!it->second.contains(key)) throw ConfigError("unknown config key " + sec_name + "." + key);
    }
  }

  RunConfig cfg;
  auto section = [&](const char* name) -> pt::ptree {
    const auto child = tree.get_child_optional(name);
    return child ? *child : pt::ptree{};
  };

  {
    const auto s = section("env");
    read(s, "env", "image_side", cfg.env.image_side);
    read(s, "env", "max_steps", cfg.env.max_steps);
    read(s, "env", "success_radius", cfg.env.success_radius);
    read(s, "env", "action_cap", cfg.env.action_cap);
    read(s, "env", "dynamics_noise_std", cfg.env.dynamics_noise_std);
    read(s, "env", "num_distractors", cfg.env.num_distractors);
    read(s, "env", "num_goal_ids", cfg.env.num_goal_ids);
    read(s, "env", "blob_sigma", cfg.env.blob_sigma);
    read(s, "env", "success_enabled", cfg.env.success_enabled);
  }
  {
    const auto s = section("model");
    read(s, "model", "query", cfg.dims.query);
    read(s, "model", "inst", cfg.dims.inst);
    read(s, "model", "img", cfg.dims.img);
    read(s, "model", "act", cfg.dims.act);
    read(s, "model", "dep", cfg.dims.dep);
  }
  {
    const auto s = section("ttt");
    read(s, "ttt", "gap", cfg.ttt.gap);
    read(s, "ttt", "batch_size", cfg.ttt.batch_size);
    read(s, "ttt", "num_samples", cfg.ttt.num_samples);
    read(s, "ttt", "buffer_cap", cfg.ttt.buffer_cap);
    read(s, "ttt", "rho", cfg.ttt.rho);
    read(s, "ttt", "alpha", cfg.ttt.alpha);
    read(s, "ttt", "reset_q_per_episode", cfg.ttt.reset_q_per_episode);
    if (const auto mode = s.get_optional<std::string>("mode")) {
      const auto m = parse_mode(*mode);
      if (!m) throw ConfigError("unknown ttt.mode '" + *mode + "'");
      cfg.ttt.mode = *m;
    }
    if (s.get_child_optional("fixed_threshold")) {
      double tau = 0.0;
      read(s, "ttt", "fixed_threshold", tau);
      cfg.ttt.fixed_threshold = tau;
    }
  }
  {
    const auto s = section("eval");
    if (const auto setting = s.get_optional<std::string>("setting")) {
      const auto v = parse_setting(*setting);
      if (!v) throw ConfigError("eval.setting must be 'with' or 'without'");
      cfg.eval.setting = *v;
    }
    double magnitude = 1.0;
    read(s, "eval", "magnitude", magnitude);
    if (!(magnitude >= 0.0 && magnitude <= 1.0)) throw ConfigError("eval.magnitude must lie in [0, 1]");
    cfg.eval.dimensions = all_dimensions(magnitude);
    if (const auto dims = s.get_optional<std::string>("dimensions")) {
      cfg.eval.dimensions = parse_dimension_list(*dims, magnitude);
    }
    if (const auto modes = s.get_optional<std::string>("modes")) cfg.eval.modes = parse_mode_list(*modes);
    read(s, "eval", "episodes_per_dim", cfg.eval.episodes_per_dim);
    read(s, "eval", "record_episodes", cfg.eval.record_episodes);
  }
  {
    const auto s = section("pretrain");
    read(s, "pretrain", "epochs", cfg.pretrain.epochs);
    read(s, "pretrain", "batch_size", cfg.pretrain.batch_size);
    read(s, "pretrain", "learning_rate", cfg.pretrain.learning_rate);
    read(s, "pretrain", "lambda", cfg.pretrain.lambda);
    read(s, "pretrain", "num_demos", cfg.num_demos);
  }
  {
    const auto s = section("paths");
    if (const auto v = s.get_optional<std::string>("checkpoint")) cfg.checkpoint = *v;
    if (const auto v = s.get_optional<std::string>("out_dir")) cfg.out_dir = *v;
  }
  {
    const auto s = section("run");
    read(s, "run", "seed", cfg.seed);
  }

  cfg.finalize();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

Checkpoint train_checkpoint(const RunConfig& cfg, PretrainLog* log) {
  const auto data = build_datasets(cfg.eval.setting, cfg.env, all_dimensions(), cfg.ttt.gap, cfg.num_demos,
                                   derive_seed(cfg.seed, 0xda7au));
  Checkpoint ckpt;
  ckpt.params = pretrain(data, cfg.dims, cfg.pretrain, log);
  ckpt.hyper = cfg.pretrain;
  ckpt.metadata = {{"setting", to_string(cfg.eval.setting)}, {"num_samples", data.size()}, {"config", to_json(cfg)}};
  return ckpt;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json pre = hyper_to_json(cfg.pretrain);
  pre["num_demos"] = cfg.num_demos;
  return {{"env", to_json(cfg.env)},
          {"model", dims_to_json(cfg.dims)},
          {"ttt", to_json(cfg.ttt)},
          {"eval", to_json(cfg.eval)},
          {"pretrain", pre},
          {"paths", {{"checkpoint", cfg.checkpoint_path().string()}, {"out_dir", cfg.out_dir.string()}}},
          {"seed", cfg.seed}};
}

}  // namespace t3vf
