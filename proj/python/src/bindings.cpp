#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "t3vf/checkpoint.hpp"
#include "t3vf/harness.hpp"
#include "t3vf/run_config.hpp"

namespace py = pybind11;
using namespace t3vf;

namespace {

std::string json_text(const nlohmann::json& j) { return j.dump(); }

// Holds a numpy-friendly copy; Eigen::Ref would alias the param storage.
Vec field_values(const ModelParams& p, const std::string& name) {
  for (const auto& f : p.fields()) {
    if (f.name == name) return Eigen::Map<const Vec>(f.data, f.size());
  }
  throw py::key_error("unknown parameter field '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compiled core of the t3vf package";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  py::class_<Rng>(m, "Rng").def(py::init<std::uint64_t>(), py::arg("seed"));
  m.def("derive_seed", [](std::uint64_t parent, std::uint64_t tag) { return derive_seed(parent, tag); });

  // Environment.
  py::enum_<Perturbation>(m, "Perturbation")
      .value("Clean", Perturbation::Clean)
      .value("Robot", Perturbation::Robot)
      .value("Language", Perturbation::Language)
      .value("Noise", Perturbation::Noise)
      .value("Layout", Perturbation::Layout)
      .value("Background", Perturbation::Background)
      .value("Camera", Perturbation::Camera)
      .value("Light", Perturbation::Light);

  py::class_<EpisodeConfig>(m, "EpisodeConfig")
      .def(py::init<>())
      .def_readwrite("image_side", &EpisodeConfig::image_side)
      .def_readwrite("max_steps", &EpisodeConfig::max_steps)
      .def_readwrite("success_radius", &EpisodeConfig::success_radius)
      .def_readwrite("action_cap", &EpisodeConfig::action_cap)
      .def_readwrite("dynamics_noise_std", &EpisodeConfig::dynamics_noise_std)
      .def_readwrite("num_distractors", &EpisodeConfig::num_distractors)
      .def_readwrite("num_goal_ids", &EpisodeConfig::num_goal_ids)
      .def_readwrite("blob_sigma", &EpisodeConfig::blob_sigma)
      .def_readwrite("success_enabled", &EpisodeConfig::success_enabled)
      .def_property_readonly("image_size", &EpisodeConfig::image_size)
      .def("validate", &EpisodeConfig::validate);

  py::class_<PerturbationSpec>(m, "PerturbationSpec")
      .def(py::init([](Perturbation d, double mag) { return PerturbationSpec{d, mag}; }), py::arg("dimension"),
           py::arg("magnitude") = 1.0)
      .def_readwrite("dimension", &PerturbationSpec::dimension)
      .def_readwrite("magnitude", &PerturbationSpec::magnitude)
      .def("effective", &PerturbationSpec::effective);
  m.def("all_dimensions", &all_dimensions, py::arg("magnitude") = 1.0);

  py::class_<WorldState>(m, "WorldState")
      .def_readonly("agent_pos", &WorldState::agent_pos)
      .def_readonly("goal_pos", &WorldState::goal_pos)
      .def_readonly("distractor_pos", &WorldState::distractor_pos)
      .def_readonly("goal_id", &WorldState::goal_id)
      .def_readonly("t", &WorldState::t)
      .def_readonly("succeeded", &WorldState::succeeded)
      .def("__eq__", [](const WorldState& a, const WorldState& b) { return a == b; });

  py::class_<Observation>(m, "Observation")
      .def(py::init([](Vec image, Vec instruction) { return Observation{std::move(image), std::move(instruction)}; }),
           py::arg("image"), py::arg("instruction"))
      .def_readwrite("image", &Observation::image)
      .def_readwrite("instruction", &Observation::instruction);

  py::class_<StepResult>(m, "StepResult")
      .def_readonly("state", &StepResult::state)
      .def_readonly("done", &StepResult::done)
      .def_readonly("success", &StepResult::success);

  m.def("reset", &reset, py::arg("config"), py::arg("spec"), py::arg("seed"));
  m.def("render", &render, py::arg("state"), py::arg("config"), py::arg("spec"), py::arg("rng"));
  m.def("render_clean", &render_clean, py::arg("state"), py::arg("config"));
  m.def("observe", &observe, py::arg("state"), py::arg("config"), py::arg("spec"), py::arg("rng"));
  m.def("step", &step, py::arg("state"), py::arg("action"), py::arg("config"), py::arg("rng"));
  m.def("expert_action", &expert_action, py::arg("state"), py::arg("config"));

  // Model.
  py::class_<ModelDims>(m, "ModelDims")
      .def(py::init<>())
      .def_readwrite("obs", &ModelDims::obs)
      .def_readwrite("instr", &ModelDims::instr)
      .def_readwrite("query", &ModelDims::query)
      .def_readwrite("inst", &ModelDims::inst)
      .def_readwrite("img", &ModelDims::img)
      .def_readwrite("act", &ModelDims::act)
      .def_readwrite("dep", &ModelDims::dep)
      .def_property_readonly("hidden", &ModelDims::hidden)
      .def_static("for_env", &ModelDims::for_env)
      .def("__eq__", [](const ModelDims& a, const ModelDims& b) { return a == b; });

  py::class_<ModelParams>(m, "ModelParams")
      .def_static("init", &ModelParams::init, py::arg("dims"), py::arg("seed"))
      .def_static("zeros", &ModelParams::zeros, py::arg("dims"))
      .def_readonly("dims", &ModelParams::dims)
      .def_readwrite("q", &ModelParams::q)
      .def_readwrite("b_s", &ModelParams::b_s)
      .def_property_readonly("field_names",
                             [](const ModelParams& p) {
                               std::vector<std::string> names;
                               for (const auto& f : p.fields()) names.emplace_back(f.name);
                               return names;
                             })
      .def("field", &field_values, py::arg("name"), "Flattened copy of one parameter block")
      .def("equal_except_query", &ModelParams::equal_except_query)
      .def("fingerprint", [](const ModelParams& p) { return params_fingerprint(p); })
      .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; })
      .def("copy", [](const ModelParams& p) { return p; });

  py::class_<Features>(m, "Features")
      .def_readonly("h_inst", &Features::h_inst)
      .def_readonly("h_img", &Features::h_img)
      .def_readonly("h_act", &Features::h_act)
      .def_readonly("h_dep", &Features::h_dep);

  m.def("forward", &forward, py::arg("params"), py::arg("obs"));
  m.def("predict_image", &predict_image, py::arg("params"), py::arg("features"), py::arg("obs"));
  m.def(
      "action_distribution",
      [](const ModelParams& p, const Features& f) {
        const auto d = action_distribution(p, f);
        return py::make_tuple(Vec2(d.mean), d.scale);
      },
      py::arg("params"), py::arg("features"), "Returns (mean, scale)");
  m.def(
      "sample_actions",
      [](const ModelParams& p, const Features& f, int k, Rng& rng) {
        const auto s = sample_actions(p, f, k, rng);
        return py::make_tuple(s.samples, Vec2(s.mean), s.scale);
      },
      py::arg("params"), py::arg("features"), py::arg("num_samples"), py::arg("rng"),
      "Returns (samples, mean, scale)");

  py::class_<TrainSample>(m, "TrainSample")
      .def(py::init([](Observation o, Vec2 a, Vec target) { return TrainSample{std::move(o), a, std::move(target)}; }),
           py::arg("obs"), py::arg("expert"), py::arg("future_image"))
      .def_readwrite("obs", &TrainSample::obs)
      .def_readwrite("expert", &TrainSample::expert)
      .def_readwrite("future_image", &TrainSample::future_image);

  m.def("loss_train", &loss_train, py::arg("params"), py::arg("sample"), py::arg("lambda_"));
  m.def(
      "loss_img_batch",
      [](const ModelParams& p, const std::vector<Observation>& in, const std::vector<Vec>& tg) {
        return loss_img_batch(p, in, tg);
      },
      py::arg("params"), py::arg("inputs"), py::arg("targets"));
  m.def(
      "grad_q_img",
      [](const ModelParams& p, const std::vector<Observation>& in, const std::vector<Vec>& tg) {
        return grad_q_img(p, in, tg);
      },
      py::arg("params"), py::arg("inputs"), py::arg("targets"));

  // Pretraining and checkpoints.
  py::enum_<TrainSetting>(m, "TrainSetting")
      .value("WithPerturbedTrain", TrainSetting::WithPerturbedTrain)
      .value("WithoutPerturbedTrain", TrainSetting::WithoutPerturbedTrain);

  m.def("build_datasets", &build_datasets, py::arg("setting"), py::arg("env"), py::arg("dims"), py::arg("gap"),
        py::arg("num_demos"), py::arg("seed"));

  py::class_<PretrainHyper>(m, "PretrainHyper")
      .def(py::init<>())
      .def_readwrite("epochs", &PretrainHyper::epochs)
      .def_readwrite("batch_size", &PretrainHyper::batch_size)
      .def_readwrite("learning_rate", &PretrainHyper::learning_rate)
      .def_readwrite("lambda_", &PretrainHyper::lambda)
      .def_readwrite("seed", &PretrainHyper::seed);

  m.def(
      "pretrain",
      [](const std::vector<TrainSample>& data, const ModelDims& dims, const PretrainHyper& hyper) {
        PretrainLog log;
        ModelParams p;
        {
          py::gil_scoped_release release;
          p = pretrain(data, dims, hyper, &log);
        }
        return py::make_tuple(std::move(p), log.epoch_loss);
      },
      py::arg("data"), py::arg("dims"), py::arg("hyper"), "Returns (params, per-epoch losses)");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def(py::init([](const ModelParams& p, const PretrainHyper& h) { return Checkpoint{p, h, {}}; }),
           py::arg("params"), py::arg("hyper") = PretrainHyper{})
      .def_readwrite("params", &Checkpoint::params)
      .def_readwrite("hyper", &Checkpoint::hyper)
      .def_property(
          "metadata_json", [](const Checkpoint& c) { return json_text(c.metadata); },
          [](Checkpoint& c, const std::string& s) { c.metadata = nlohmann::json::parse(s); })
      .def("to_string", [](const Checkpoint& c) { return checkpoint_to_string(c); });

  m.def("save_checkpoint", &save_checkpoint, py::arg("checkpoint"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"), py::arg("expected_dims") = std::nullopt);

  // Test-time training.
  py::enum_<TTTMode>(m, "TTTMode")
      .value("Base", TTTMode::Base)
      .value("Indiscriminate", TTTMode::Indiscriminate)
      .value("FixedThreshold", TTTMode::FixedThreshold)
      .value("Adaptive", TTTMode::Adaptive);

  py::class_<TTTConfig>(m, "TTTConfig")
      .def(py::init<>())
      .def_readwrite("gap", &TTTConfig::gap)
      .def_readwrite("batch_size", &TTTConfig::batch_size)
      .def_readwrite("num_samples", &TTTConfig::num_samples)
      .def_readwrite("buffer_cap", &TTTConfig::buffer_cap)
      .def_readwrite("rho", &TTTConfig::rho)
      .def_readwrite("alpha", &TTTConfig::alpha)
      .def_readwrite("mode", &TTTConfig::mode)
      .def_readwrite("fixed_threshold", &TTTConfig::fixed_threshold)
      .def_readwrite("reset_q_per_episode", &TTTConfig::reset_q_per_episode);

  py::class_<VarianceBuffer>(m, "VarianceBuffer")
      .def(py::init<std::size_t>(), py::arg("capacity"))
      .def("push", &VarianceBuffer::push)
      .def_property_readonly("values",
                             [](const VarianceBuffer& b) { return std::vector<double>(b.values().begin(), b.values().end()); })
      .def("__len__", &VarianceBuffer::size)
      .def_property_readonly("capacity", &VarianceBuffer::capacity);

  py::class_<FilterDecision>(m, "FilterDecision")
      .def_readonly("warmup", &FilterDecision::warmup)
      .def_readonly("accepted", &FilterDecision::accepted);

  m.def("buffer_quantile", &buffer_quantile, py::arg("buffer"), py::arg("rho"));
  m.def("filter_step", &filter_step, py::arg("buffer"), py::arg("variance"), py::arg("rho"));
  m.def(
      "action_variance",
      [](const std::vector<Vec2>& samples) {
        const auto s = action_variance(samples);
        return py::make_tuple(Vec2(s.mean), s.variance);
      },
      py::arg("samples"), "Returns (mean, variance)");

  py::class_<StepDecision>(m, "StepDecision")
      .def_readonly("t", &StepDecision::t)
      .def_readonly("variance", &StepDecision::variance)
      .def_readonly("warmup", &StepDecision::warmup)
      .def_readonly("accepted", &StepDecision::accepted);

  py::class_<EpisodeResult>(m, "EpisodeResult")
      .def_readonly("success", &EpisodeResult::success)
      .def_readonly("steps_taken", &EpisodeResult::steps_taken)
      .def_readonly("updates_performed", &EpisodeResult::updates_performed)
      .def_readonly("pairs_accepted", &EpisodeResult::pairs_accepted)
      .def_readonly("pairs_matured", &EpisodeResult::pairs_matured)
      .def_readonly("per_step_decisions", &EpisodeResult::per_step_decisions)
      .def_readonly("final_q_delta_norm", &EpisodeResult::final_q_delta_norm)
      .def_property_readonly("wall_time_ns", [](const EpisodeResult& r) { return r.wall_time.count(); });

  m.def(
      "run_episode",
      [](const ModelParams& p, const EpisodeConfig& env, const PerturbationSpec& spec, const TTTConfig& ttt,
         std::uint64_t seed) {
        py::gil_scoped_release release;
        auto out = run_episode(p, env, spec, ttt, seed);
        return std::make_pair(std::move(out.result), std::move(out.params));
      },
      py::arg("params"), py::arg("env"), py::arg("spec"), py::arg("ttt"), py::arg("seed"),
      "Returns (result, params after the episode)");

  // Harness.
  py::class_<CellStats>(m, "CellStats")
      .def_readonly("episodes", &CellStats::episodes)
      .def_readonly("successes", &CellStats::successes)
      .def_readonly("mean_steps", &CellStats::mean_steps)
      .def_readonly("mean_updates", &CellStats::mean_updates)
      .def_readonly("mean_pairs_accepted", &CellStats::mean_pairs_accepted)
      .def_property_readonly("rate", &CellStats::rate);

  py::class_<EvalConfig>(m, "EvalConfig")
      .def(py::init<>())
      .def_readwrite("setting", &EvalConfig::setting)
      .def_readwrite("dimensions", &EvalConfig::dimensions)
      .def_readwrite("episodes_per_dim", &EvalConfig::episodes_per_dim)
      .def_readwrite("modes", &EvalConfig::modes)
      .def_readwrite("base_seed", &EvalConfig::base_seed)
      .def_readwrite("record_episodes", &EvalConfig::record_episodes);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("modes", &EvalReport::modes)
      .def_readonly("dimensions", &EvalReport::dimensions)
      .def_readonly("cells", &EvalReport::cells)
      .def_readonly("fixed_threshold", &EvalReport::fixed_threshold)
      .def("rate", &EvalReport::rate)
      .def("average", &EvalReport::average)
      .def("average_delta", &EvalReport::average_delta)
      .def("csv", [](const EvalReport& r) { return report_csv(r); })
      .def(
          "json", [](const EvalReport& r, bool eps) { return json_text(report_json(r, eps)); },
          py::arg("include_episodes") = false);

  m.def(
      "evaluate",
      [](const ModelParams& p, const EpisodeConfig& env, const EvalConfig& eval, const TTTConfig& ttt) {
        py::gil_scoped_release release;
        return evaluate(p, env, eval, ttt);
      },
      py::arg("params"), py::arg("env"), py::arg("eval"), py::arg("ttt"));

  py::class_<AblationRow>(m, "AblationRow")
      .def_readonly("mode", &AblationRow::mode)
      .def_readonly("ttt", &AblationRow::ttt)
      .def_readonly("variance_filter", &AblationRow::variance_filter)
      .def_readonly("adaptive_buffer", &AblationRow::adaptive_buffer)
      .def_readonly("stats", &AblationRow::stats);

  py::class_<AblationReport>(m, "AblationReport")
      .def_readonly("rows", &AblationReport::rows)
      .def_readonly("fixed_threshold", &AblationReport::fixed_threshold)
      .def("csv", [](const AblationReport& r) { return report_csv(r); })
      .def("json", [](const AblationReport& r) { return json_text(report_json(r)); });

  m.def(
      "ablate",
      [](const ModelParams& p, const EpisodeConfig& env, const TTTConfig& ttt, int episodes, std::uint64_t seed) {
        py::gil_scoped_release release;
        return ablate(p, env, ttt, episodes, seed);
      },
      py::arg("params"), py::arg("env"), py::arg("ttt"), py::arg("episodes"), py::arg("seed"));

  py::class_<TimingRow>(m, "TimingRow")
      .def_readonly("mode", &TimingRow::mode)
      .def_readonly("episodes", &TimingRow::episodes)
      .def_readonly("mean_wall_ms", &TimingRow::mean_wall_ms)
      .def_readonly("mean_updates", &TimingRow::mean_updates)
      .def_readonly("mean_steps", &TimingRow::mean_steps)
      .def_readonly("relative_time", &TimingRow::relative_time);

  py::class_<TimingReport>(m, "TimingReport")
      .def_readonly("rows", &TimingReport::rows)
      .def("csv", [](const TimingReport& r) { return report_csv(r); })
      .def("json", [](const TimingReport& r) { return json_text(report_json(r)); })
      .def("svg", [](const TimingReport& r) { return timing_svg(r); });

  m.def(
      "bench",
      [](const ModelParams& p, const EpisodeConfig& env, const TTTConfig& ttt, int episodes, std::uint64_t seed) {
        py::gil_scoped_release release;
        return bench(p, env, ttt, episodes, seed);
      },
      py::arg("params"), py::arg("env"), py::arg("ttt"), py::arg("episodes"), py::arg("seed"));

  m.def(
      "load_run_config_json",
      [](const std::string& path) { return json_text(to_json(load_run_config(path))); }, py::arg("path"),
      "Effective configuration of an INI file, as JSON text");
}
