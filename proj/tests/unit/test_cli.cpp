#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metaassist/cli.hpp"

using namespace metaassist;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "metaassist");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data());
  testing::internal::GetCapturedStdout();
  testing::internal::GetCapturedStderr();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in.good()) << p;
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "metaassist_cli_tests" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  // Small desk corpus shared by the training tests.
  std::string corpus() {
    const auto out = path("data");
    if (!fs::exists(out + "/corpus.jsonl")) {
      EXPECT_EQ(run_cli({"gen-data", "--train-size", "400", "--seed", "3", "--out", out}), 0);
    }
    return out + "/corpus.jsonl";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataIsReproducible) {
  ASSERT_EQ(run_cli({"gen-data", "--seed", "9", "--train-size", "300", "--out", path("a")}), 0);
  ASSERT_EQ(run_cli({"gen-data", "--seed", "9", "--train-size", "300", "--out", path("b")}), 0);
  EXPECT_EQ(slurp(path("a/corpus.jsonl")), slurp(path("b/corpus.jsonl")));
  const Corpus c = load_corpus(path("a/corpus.jsonl"));
  EXPECT_EQ(c.train.size(), 300u);
  EXPECT_EQ(c.generator_config, [] {
    auto d = desk_default_config(9);
    d.train_size = 300;
    return d;
  }());
}

TEST_F(Cli, FixedZeroTrainingMatchesVanillaOnly) {
  const auto data = corpus();
  ASSERT_EQ(run_cli({"train", "--data", data, "--scheme", "fixed:0.0", "--epochs", "2", "--seed", "4", "--out", path("t")}), 0);
  ASSERT_EQ(run_cli({"evaluate", "--data", data, "--model", path("t/model.json"), "--out", path("e")}), 0);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 4;
  const Corpus c = load_corpus(data);
  const auto vanilla = train_hard_labels(c, cfg, LabelSource::Vanilla);
  EXPECT_EQ(load_model(path("t/model.json"), &c.schema), vanilla.model);
  const Json metrics = load_json(path("e/metrics.json"));
  EXPECT_EQ(metrics.at("metrics").dump(), to_json(evaluate(vanilla.model, c.test)).dump());
  const Json train_metrics = load_json(path("t/metrics.json"));
  EXPECT_EQ(train_metrics.at("gradient_evaluations").get<std::size_t>(), total_steps(cfg, c.train.size()));
}

TEST_F(Cli, ParseErrorsAreReported) {
  EXPECT_NE(run_cli({"gen-data", "--no-such-flag", "1", "--out", path("x")}), 0);
  EXPECT_NE(run_cli({"no-such-command"}), 0);
  EXPECT_NE(run_cli({}), 0);
  EXPECT_NE(run_cli({"train", "--epochs", "many", "--out", path("x")}), 0);
}

TEST_F(Cli, RuntimeErrorsReturnOne) {
  EXPECT_EQ(run_cli({"train", "--out", path("x")}), 1);
  EXPECT_EQ(run_cli({"train", "--data", path("missing.jsonl"), "--out", path("x")}), 1);
  EXPECT_EQ(run_cli({"train", "--data", corpus(), "--scheme", "fixed:2", "--out", path("x")}), 1);
  EXPECT_EQ(run_cli({"gen-data", "--preset", "nope", "--out", path("x")}), 1);
}

TEST_F(Cli, VerifyDominance) {
  ASSERT_EQ(run_cli({"verify-theorem1", "--instances", "10", "--out", path("v")}), 0);
  const Json summary = load_json(path("v/summary.json"));
  EXPECT_TRUE(summary.at("holds").get<bool>());
  EXPECT_EQ(summary.at("instances").get<std::size_t>(), 10u);
  EXPECT_EQ(count_lines(slurp(path("v/theorem1.jsonl"))), 10u);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  const auto data = corpus();
  cli::write_text(path("cfg.json"), R"({"command": "train", "train": {"epochs": 1, "seed": 7}})");
  ASSERT_EQ(run_cli({"train", "--config", path("cfg.json"), "--data", data, "--out", path("a")}), 0);
  Json used = load_json(path("a/config.json"));
  EXPECT_EQ(used.at("train").at("epochs").get<std::size_t>(), 1u);
  EXPECT_EQ(used.at("train").at("seed").get<std::uint64_t>(), 7u);
  ASSERT_EQ(run_cli({"train", "--config", path("cfg.json"), "--epochs", "2", "--data", data, "--out", path("b")}), 0);
  used = load_json(path("b/config.json"));
  EXPECT_EQ(used.at("train").at("epochs").get<std::size_t>(), 2u);
  EXPECT_EQ(used.at("train").at("seed").get<std::uint64_t>(), 7u);

  cli::write_text(path("wrong.json"), R"({"command": "gen-data"})");
  EXPECT_EQ(run_cli({"train", "--config", path("wrong.json"), "--data", data, "--out", path("c")}), 1);
  cli::write_text(path("typo.json"), R"({"train": {"epochs": "one"}})");
  EXPECT_EQ(run_cli({"train", "--config", path("typo.json"), "--data", data, "--out", path("c")}), 1);
}

TEST_F(Cli, PersistedConfigReproducesRun) {
  const auto data = corpus();
  ASSERT_EQ(run_cli({"train", "--data", data, "--scheme", "s3", "--epochs", "2", "--seed", "2", "--out", path("a")}), 0);
  ASSERT_EQ(run_cli({"train", "--config", path("a/config.json"), "--out", path("b")}), 0);
  for (const char* f : {"model.json", "best_model.json", "scheme.json", "run_log.jsonl", "metrics.json", "config.json"})
    EXPECT_EQ(slurp(path(std::string("a/") + f)), slurp(path(std::string("b/") + f))) << f;
  EXPECT_TRUE(fs::exists(path("a/timing.json")));
  EXPECT_TRUE(fs::exists(path("a/aux_model.json")));
}

TEST_F(Cli, AuxiliaryPipelineAndExports) {
  const auto data = corpus();
  ASSERT_EQ(run_cli({"train-aux", "--data", data, "--out", path("aux")}), 0);
  ASSERT_EQ(run_cli({"gen-pseudo", "--data", data, "--aux", path("aux/aux_model.json"), "--out", path("p")}), 0);
  const Corpus labelled = load_corpus(path("p/corpus.jsonl"));
  for (const auto& s : labelled.train) ASSERT_TRUE(s.pseudo_labels.has_value());

  ASSERT_EQ(run_cli({"train", "--data", path("p/corpus.jsonl"), "--scheme", "s3", "--epochs", "1", "--out", path("t")}), 0);
  EXPECT_FALSE(fs::exists(path("t/aux_model.json")));
  ASSERT_EQ(run_cli({"export-weights", "--data", path("p/corpus.jsonl"), "--model", path("t/model.json"),
                     "--scheme-file", path("t/scheme.json"), "--out", path("w")}),
            0);
  EXPECT_EQ(count_lines(slurp(path("w/weights.jsonl"))), labelled.train.size() * labelled.schema.size());
  const Json summary = load_json(path("w/weight_summary.json"));
  EXPECT_EQ(summary.at("per_slot").size(), labelled.schema.size());
  EXPECT_TRUE(summary.at("per_slot")[0].contains("scale_histogram"));

  // Without pseudo labels in the corpus, the export needs the auxiliary model.
  EXPECT_EQ(run_cli({"export-weights", "--data", data, "--model", path("t/model.json"), "--scheme-file",
                     path("t/scheme.json"), "--out", path("w2")}),
            1);
  ASSERT_EQ(run_cli({"export-weights", "--data", data, "--model", path("t/model.json"), "--scheme-file",
                     path("t/scheme.json"), "--aux", path("aux/aux_model.json"), "--out", path("w2")}),
            0);
  EXPECT_EQ(slurp(path("w/weights.jsonl")), slurp(path("w2/weights.jsonl")));

  ASSERT_EQ(run_cli({"error-rates", "--data", data, "--model", "aux=" + path("aux/aux_model.json"), "--model",
                     "meta=" + path("t/model.json"), "--out", path("er")}),
            0);
  const auto csv = slurp(path("er/error_rates.csv"));
  EXPECT_EQ(count_lines(csv), labelled.schema.size() + 1);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "slot,aux error (%),meta error (%)");
}

TEST_F(Cli, SmallBenchTable) {
  const std::vector<std::string> base{"bench-table", "--train-size", "200", "--seeds", "2", "--alphas", "0",
                                      "1",           "--schemes",    "s1",  "--epochs", "1"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  };
  ASSERT_EQ(run_cli(with({"--out", path("b1")})), 0);
  ASSERT_EQ(run_cli(with({"--jobs", "3", "--out", path("b3")})), 0);
  EXPECT_EQ(slurp(path("b1/runs.jsonl")), slurp(path("b3/runs.jsonl")));
  EXPECT_EQ(count_lines(slurp(path("b1/runs.jsonl"))), 6u);
  const auto csv = slurp(path("b1/bench.csv"));
  EXPECT_EQ(count_lines(csv), 4u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scheme,JGA (%),JGA std,JTA (%),SA (%)");
  EXPECT_NE(csv.find("\nfixed:0.00,"), std::string::npos);
  EXPECT_NE(csv.find("\ns1,"), std::string::npos);
  const Json cfg = load_json(path("b1/config.json"));
  EXPECT_EQ(cfg.at("preset"), "asymmetric");
  EXPECT_NE(slurp(path("b1/runs.jsonl")).find("slot_alphas"), std::string::npos);
}

TEST_F(Cli, OutputRootFromEnvironment) {
  ASSERT_EQ(setenv("METAASSIST_OUT", path("root").c_str(), 1), 0);
  const int rc = run_cli({"gen-data", "--train-size", "50"});
  unsetenv("METAASSIST_OUT");
  ASSERT_EQ(rc, 0);
  EXPECT_TRUE(fs::exists(path("root/gen-data/corpus.jsonl")));
  EXPECT_TRUE(fs::exists(path("root/gen-data/config.json")));
}

TEST(CliFormatting, TextAndCsvTables) {
  const std::vector<std::vector<std::string>> rows{{"name", "value"}, {"alpha", "1.50"}, {"b", "12.25"}};
  EXPECT_EQ(cli::render_csv(rows), "name,value\nalpha,1.50\nb,12.25\n");
  EXPECT_EQ(cli::render_text(rows), "name   value\n------------\nalpha   1.50\nb      12.25\n");
  EXPECT_EQ(cli::percent(0.125), "12.50");
}
