#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "t3vf/harness.hpp"
#include "t3vf/pretrain.hpp"

namespace t3vf {
namespace {

namespace fs = std::filesystem;

TEST(BuildDatasets, ShortHorizonSampleCount) {
  EpisodeConfig cfg;
  cfg.max_steps = 10;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto data = build_datasets(TrainSetting::WithoutPerturbedTrain, cfg, all_dimensions(), 4, 1, seed);
    EXPECT_LE(data.size(), 6u) << seed;
  }
}

TEST(BuildDatasets, SamplesPairObservationsGapApart) {
  EpisodeConfig cfg;
  cfg.success_radius = 1e-9;  // noisy dynamics never land this close: a full-length trajectory
  cfg.max_steps = 10;
  const auto data = build_datasets(TrainSetting::WithoutPerturbedTrain, cfg, all_dimensions(), 4, 1, 3);
  ASSERT_EQ(data.size(), 6u);
  for (std::size_t t = 0; t + 4 < data.size(); ++t) {
    EXPECT_EQ(data[t].future_image, data[t + 4].obs.image);
  }
  for (const auto& s : data) {
    EXPECT_GE(s.future_image.minCoeff(), 0.0);
    EXPECT_LE(s.future_image.maxCoeff(), 1.0);
  }
}

TEST(BuildDatasets, WithoutSettingIsClean) {
  const EpisodeConfig cfg;
  const auto data = build_datasets(TrainSetting::WithoutPerturbedTrain, cfg, all_dimensions(), 4, 200, 5);
  // Clean inputs are exactly one-hot instructions and unperturbed renders.
  for (const auto& s : data) {
    EXPECT_EQ(s.obs.instruction.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ((s.obs.instruction.array() != 0.0).count(), 1);
  }
}

TEST(BuildDatasets, WithSettingContainsPerturbedSamples) {
  const EpisodeConfig cfg;
  const auto data = build_datasets(TrainSetting::WithPerturbedTrain, cfg, all_dimensions(), 4, 200, 5);
  int mixed = 0;
  for (const auto& s : data) mixed += (s.obs.instruction.array() != 0.0).count() > 1 ? 1 : 0;
  EXPECT_GT(mixed, 0);
}

TEST(BuildDatasets, Deterministic) {
  const EpisodeConfig cfg;
  const auto a = build_datasets(TrainSetting::WithPerturbedTrain, cfg, all_dimensions(), 4, 30, 9);
  const auto b = build_datasets(TrainSetting::WithPerturbedTrain, cfg, all_dimensions(), 4, 30, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].obs.image, b[i].obs.image);
    EXPECT_EQ(a[i].expert, b[i].expert);
    EXPECT_EQ(a[i].future_image, b[i].future_image);
  }
}

TEST(BuildDatasets, ZeroDemosRejected) {
  EXPECT_THROW(build_datasets(TrainSetting::WithPerturbedTrain, EpisodeConfig{}, all_dimensions(), 4, 0, 1),
               UsageError);
}

// A cheaply trained checkpoint shared across the evaluation tests.
class HarnessFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto data = build_datasets(TrainSetting::WithPerturbedTrain, EpisodeConfig{}, all_dimensions(), 4, 100, 1);
    PretrainHyper h;
    h.epochs = 2;
    params_ = new ModelParams(pretrain(data, ModelDims{}, h));
  }
  static void TearDownTestSuite() {
    delete params_;
    params_ = nullptr;
  }
  static const ModelParams& params() { return *params_; }

  static EvalConfig small_eval(std::vector<TTTMode> modes) {
    EvalConfig e;
    e.episodes_per_dim = 12;
    e.modes = std::move(modes);
    e.base_seed = 3;
    return e;
  }

  static ModelParams* params_;
};

ModelParams* HarnessFixture::params_ = nullptr;

TEST_F(HarnessFixture, BaseOnlyHasNoDelta) {
  const auto r = evaluate(params(), EpisodeConfig{}, small_eval({TTTMode::Base}), TTTConfig{});
  EXPECT_FALSE(r.has_delta());
  EXPECT_EQ(report_csv(r).substr(0, report_csv(r).find('\n')), "dimension,Base");
}

TEST_F(HarnessFixture, BaseUnaffectedByOtherModes) {
  const auto alone = evaluate(params(), EpisodeConfig{}, small_eval({TTTMode::Base}), TTTConfig{});
  const auto both = evaluate(params(), EpisodeConfig{}, small_eval({TTTMode::Base, TTTMode::Adaptive}), TTTConfig{});
  for (std::size_t d = 0; d < alone.dimensions.size(); ++d) {
    EXPECT_EQ(alone.cells[0][d].successes, both.cells[0][d].successes);
    EXPECT_EQ(alone.cells[0][d].mean_steps, both.cells[0][d].mean_steps);
  }
}

TEST_F(HarnessFixture, RatesAndAverages) {
  const auto r = evaluate(params(), EpisodeConfig{}, small_eval({TTTMode::Base, TTTMode::Adaptive}), TTTConfig{});
  ASSERT_EQ(r.dimensions.size(), 7u);
  for (std::size_t m = 0; m < r.modes.size(); ++m) {
    double sum = 0.0;
    for (std::size_t d = 0; d < 7; ++d) {
      const auto& c = r.cells[m][d];
      EXPECT_EQ(c.episodes, 12);
      EXPECT_EQ(c.rate(), static_cast<double>(c.successes) / 12);
      sum += c.rate();
    }
    EXPECT_EQ(r.average(r.modes[m]), sum / 7.0);
  }
  EXPECT_EQ(r.average_delta(), r.average(TTTMode::Adaptive) - r.average(TTTMode::Base));
  EXPECT_EQ(r.metadata["checkpoint_fingerprint"].get<std::string>().size(), 16u);
}

TEST_F(HarnessFixture, EpisodeRecordsOnRequest) {
  auto e = small_eval({TTTMode::Base});
  e.dimensions = {{Perturbation::Robot, 1.0}};
  e.record_episodes = true;
  const auto r = evaluate(params(), EpisodeConfig{}, e, TTTConfig{});
  ASSERT_EQ(r.episodes.size(), 12u);
  EXPECT_EQ(r.episodes[3].env_seed, episode_seed(3, Perturbation::Robot, 3));
  EXPECT_TRUE(report_json(r, true).contains("episodes"));
  EXPECT_FALSE(report_json(r, false).contains("episodes"));
}

TEST_F(HarnessFixture, PersistentQueryCarriesAcrossEpisodes) {
  auto e = small_eval({TTTMode::Indiscriminate});
  e.dimensions = {{Perturbation::Robot, 1.0}};
  TTTConfig persist;
  persist.reset_q_per_episode = false;
  const auto a = evaluate(params(), EpisodeConfig{}, e, persist);
  const auto b = evaluate(params(), EpisodeConfig{}, e, persist);
  EXPECT_EQ(a.cells[0][0].successes, b.cells[0][0].successes);
  EXPECT_EQ(a.cells[0][0].mean_steps, b.cells[0][0].mean_steps);
}

TEST_F(HarnessFixture, AblationHasFourRowsAndMatchesEvaluate) {
  const auto ab = ablate(params(), EpisodeConfig{}, TTTConfig{}, 12, 8);
  ASSERT_EQ(ab.rows.size(), 4u);
  EXPECT_EQ(ab.rows[0].mode, TTTMode::Base);
  EXPECT_EQ(ab.rows[3].mode, TTTMode::Adaptive);
  EXPECT_GT(ab.fixed_threshold, 0.0);
  EvalConfig e = small_eval({TTTMode::Base});
  e.dimensions = {{Perturbation::Robot, 1.0}};
  e.base_seed = 8;
  const auto r = evaluate(params(), EpisodeConfig{}, e, TTTConfig{});
  EXPECT_EQ(ab.row(TTTMode::Base).stats.successes, r.cells[0][0].successes);
  EXPECT_EQ(report_csv(ab).find("row,ttt,variance_filter,adaptive_buffer,success_rate\n"), 0u);
}

TEST_F(HarnessFixture, FixedThresholdIsMedianVariance) {
  const double tau = calibrate_fixed_threshold(params(), EpisodeConfig{}, TTTConfig{}, 20, 1);
  EXPECT_GT(tau, 0.0);
  EXPECT_EQ(tau, calibrate_fixed_threshold(params(), EpisodeConfig{}, TTTConfig{}, 20, 1));
}

TEST_F(HarnessFixture, BenchSingleEpisode) {
  const auto t = bench(params(), EpisodeConfig{}, TTTConfig{}, 1, 2);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.row(TTTMode::Base).mean_updates, 0.0);
  EXPECT_EQ(t.row(TTTMode::Base).relative_time, 1.0);
  for (const auto& r : t.rows) EXPECT_EQ(r.episodes, 1);
  const std::string csv = report_csv(t);
  EXPECT_NE(csv.find("\nBase,"), std::string::npos);
  EXPECT_NE(csv.find(",1.00\n"), std::string::npos);
}

TEST_F(HarnessFixture, AlphaCheckIsBoundedAtDefault) {
  const auto c = check_alpha(params(), EpisodeConfig{}, TTTConfig{}, 10, 4);
  EXPECT_EQ(c.trials, 10);
  EXPECT_GE(c.max_relative_change, c.mean_relative_change);
}

EvalReport synthetic_report() {
  EvalReport r;
  r.modes = {TTTMode::Base, TTTMode::Adaptive};
  r.dimensions = all_dimensions();
  for (int m = 0; m < 2; ++m) {
    std::vector<CellStats> row;
    for (int d = 0; d < 7; ++d) {
      CellStats c;
      c.episodes = 500;
      c.successes = 100 + 13 * d + 11 * m;
      row.push_back(c);
    }
    r.cells.push_back(row);
  }
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct EmitFixture : ::testing::Test {
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("t3vf_emit_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(EmitFixture, EvalCsvShape) {
  const auto r = synthetic_report();
  const std::string csv = report_csv(r);
  std::istringstream in(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 9u);  // header, 7 dimensions, Avg
  EXPECT_EQ(lines[0], "dimension,Base,Adaptive,Delta");
  EXPECT_EQ(lines[1], "robot,20.0,22.2,+2.2");
  EXPECT_EQ(lines[8].rfind("Avg,", 0), 0u);
  for (const auto& l : lines) EXPECT_EQ(std::count(l.begin(), l.end(), ','), 3);
}

TEST_F(EmitFixture, ReemissionIsByteIdentical) {
  const auto r = synthetic_report();
  const auto first = emit_reports(r, dir);
  ASSERT_EQ(first.size(), 2u);
  const std::string csv = slurp(first[0]);
  const std::string json = slurp(first[1]);
  emit_reports(r, dir);
  EXPECT_EQ(slurp(first[0]), csv);
  EXPECT_EQ(slurp(first[1]), json);
  EXPECT_EQ(first[0].filename(), "report.csv");
  EXPECT_EQ(first[1].filename(), "report.json");
}

TimingReport synthetic_timing() {
  TimingReport t;
  t.rows = {{TTTMode::Base, 10, 1.0, 0.0, 60.0, 1.0},
            {TTTMode::Indiscriminate, 10, 1.7, 14.0, 60.0, 1.7},
            {TTTMode::Adaptive, 10, 1.3, 4.0, 60.0, 1.3}};
  return t;
}

TEST_F(EmitFixture, TimingSvgIsWellFormed) {
  const auto files = emit_reports(synthetic_timing(), dir);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[2].filename(), "timing.svg");
  boost::property_tree::ptree tree;
  std::ifstream in(files[2]);
  ASSERT_NO_THROW(boost::property_tree::read_xml(in, tree));
  const auto& svg = tree.get_child("svg");
  int bars = 0;
  for (const auto& [name, child] : svg) bars += name == "rect" ? 1 : 0;
  EXPECT_EQ(bars, 4);  // background plus one per mode
  const std::string text = slurp(files[2]);
  EXPECT_NE(text.find("1.70x"), std::string::npos);
  EXPECT_NE(text.find("1.00x"), std::string::npos);
}

TEST_F(EmitFixture, UnwritableDirectoryIsIoError) {
  fs::create_directories(dir);
  const fs::path blocker = dir / "file";
  std::ofstream(blocker) << "x";
  EXPECT_THROW(emit_reports(synthetic_report(), blocker / "sub"), IoError);
}

TEST(FormatFixed, LocaleIndependentAndSigned) {
  EXPECT_EQ(format_fixed(12.345, 1), "12.3");
  EXPECT_EQ(format_fixed(-0.01, 1), "0.0");
  EXPECT_EQ(format_fixed(2.0, 1, true), "+2.0");
  EXPECT_EQ(format_fixed(-2.25, 2, true), "-2.25");
}

TEST(Settings, NamesRoundTrip) {
  EXPECT_EQ(parse_setting("with"), TrainSetting::WithPerturbedTrain);
  EXPECT_EQ(parse_setting("without"), TrainSetting::WithoutPerturbedTrain);
  EXPECT_FALSE(parse_setting("both").has_value());
}

}  // namespace
}  // namespace t3vf
