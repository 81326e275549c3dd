#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <unistd.h>

#include <fstream>

#include "cli_harness.hpp"
#include "mtec/cli/cli.hpp"
#include "mtec/csv.hpp"
#include "mtec/data.hpp"
#include "mtec/groups.hpp"
#include "mtec/model_io.hpp"

namespace fs = std::filesystem;
using harness::run;

namespace {

nlohmann::json toy_config() {
  std::ifstream in(harness::toy_dir() / "config.json");
  auto j = nlohmann::json::parse(in);
  for (auto& [key, value] : j["data"].items()) value = (harness::toy_dir() / value.get<std::string>()).string();
  return j;
}

fs::path write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2);
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class ToyCli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    // ctest runs each case in its own process, possibly in parallel.
    dir_ = harness::scratch("cli_suite_" + std::to_string(::getpid()));
    const auto r = run({"fit", "--config", config().string(), "--seed", "7", "--out", (dir_ / "fit").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static fs::path config() { return harness::toy_dir() / "config.json"; }
  static fs::path model() { return dir_ / "fit" / "model.json"; }
  static fs::path covariates() { return harness::toy_dir() / "covariates.csv"; }
  static fs::path dir_;
};
fs::path ToyCli::dir_;

TEST_F(ToyCli, FitWritesArtifacts) {
  for (const char* f : {"model.json", "training_log.csv", "report.json"}) EXPECT_TRUE(fs::exists(dir_ / "fit" / f)) << f;
  const auto bundle = mtec::ModelBundle::load(model());
  EXPECT_EQ(bundle.species_names.size(), 8u);
  EXPECT_EQ(bundle.metadata.seed, 7u);
}

TEST_F(ToyCli, PredictMatchesInProcessModel) {
  const auto out = dir_ / "pred.csv";
  const auto r = run({"predict", "--model", model().string(), "--covariates", covariates().string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bundle = mtec::ModelBundle::load(model());
  const auto schema = mtec::data::FeatureSchema::load(harness::toy_dir() / "schema.json");
  const auto cov = mtec::data::load_covariates(covariates(), schema);
  const Eigen::MatrixXd expected = bundle.predict_raw(cov.values);

  std::ifstream in(out);
  const auto table = mtec::csv::parse(in, out.string());
  ASSERT_EQ(table.header.size(), bundle.species_names.size() + 1);
  ASSERT_EQ(table.rows.size(), cov.site_ids.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    EXPECT_EQ(table.rows[i][0], cov.site_ids[i]);
    for (std::size_t j = 1; j < table.header.size(); ++j)
      ASSERT_NEAR(std::stod(table.rows[i][j]), expected(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)), 1e-8);
  }
}

TEST_F(ToyCli, PriorSamplingIsSeeded) {
  auto sample = [&](const std::string& seed, const std::string& name) {
    const auto out = dir_ / name;
    const auto r = run({"predict", "--model", model().string(), "--covariates", covariates().string(), "--sample-prior",
                        "10", "--seed", seed, "--out", out.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return harness::slurp(out);
  };
  const auto a = sample("5", "p1.csv"), b = sample("5", "p2.csv"), c = sample("6", "p3.csv");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST_F(ToyCli, CompareWithItself) {
  const auto pred = dir_ / "self_pred.csv";
  ASSERT_EQ(run({"predict", "--model", model().string(), "--covariates", covariates().string(), "--out", pred.string()}).code, 0);
  const auto out = dir_ / "self_cmp";
  const auto r = run({"compare", "--model", model().string(), "--external-scores", pred.string(), "--config",
                      config().string(), "--eval", (harness::toy_dir() / "community.csv").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto w = lines(harness::slurp(out / "wilcoxon.csv"));
  ASSERT_EQ(w.size(), 4u);
  for (std::size_t k = 1; k < w.size(); ++k) EXPECT_NE(w[k].find(",1.000000,"), std::string::npos) << w[k];
  const auto s = lines(harness::slurp(out / "summary.csv"));
  EXPECT_EQ(s[0], "Model,TSS,ROC AUC,Recall (Evaluation)");
  EXPECT_EQ(s[1].substr(s[1].find(',')), s[2].substr(s[2].find(',')));
}

TEST_F(ToyCli, PresenceOnlyReportsRecall) {
  const auto out = dir_ / "po_cmp";
  const auto r = run({"compare", "--model", model().string(), "--glm", "--config", config().string(), "--eval",
                      (harness::toy_dir() / "eval.csv").string(), "--presence-only", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = lines(harness::slurp(out / "summary.csv"));
  ASSERT_GE(s.size(), 3u);
  EXPECT_EQ(s[1].rfind("MTEC,n/a,n/a,", 0), 0u) << s[1];
  EXPECT_EQ(s[1].find("n/a", 13), std::string::npos) << s[1];
}

TEST_F(ToyCli, DownstreamPipelineAndDeterminism) {
  auto pipeline = [&](const fs::path& root) {
    const std::vector<std::vector<std::string>> commands = {
        {"explain", "--model", model().string(), "--config", config().string(), "--samples", "64", "--seed", "3",
         "--out", (root / "attr").string()},
        {"cluster", "--attribution", (root / "attr").string(), "--group", "landcover", "--kmax", "4", "--seed", "3",
         "--out", (root / "cluster").string()},
        {"network", "--model", model().string(), "--config", config().string(), "--lambda", "0.02", "--out",
         (root / "network").string()},
    };
    for (const auto& c : commands) {
      const auto r = run(c);
      EXPECT_EQ(r.code, 0) << c.front() << ": " << r.err;
    }
  };
  const auto a = dir_ / "down_a", b = dir_ / "down_b";
  pipeline(a);
  pipeline(b);
  EXPECT_EQ(harness::tree(a), harness::tree(b));

  // Only landcover-tagged columns enter the response matrix.
  std::ifstream in(a / "cluster" / "cluster.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["group"], "landcover");
  const auto attr = mtec::explain::ShapAttribution::load(a / "attr");
  const auto rm = mtec::groups::response_matrix(attr, "landcover");
  EXPECT_EQ(rm.features, std::vector<std::string>{"landcover"});
  EXPECT_TRUE(fs::exists(a / "network" / "edges.csv"));
}

TEST_F(ToyCli, DryRunWritesNothing) {
  const auto out = dir_ / "dry";
  const auto r = run({"fit", "--config", config().string(), "--dry-run", "--out", out.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(out));
  const auto p = run({"predict", "--model", model().string(), "--covariates", covariates().string(), "--dry-run",
                      "--out", (dir_ / "dry.csv").string()});
  EXPECT_EQ(p.code, 0) << p.err;
  EXPECT_FALSE(fs::exists(dir_ / "dry.csv"));
}

TEST(CliErrors, MalformedSchemaNamesColumn) {
  const auto dir = harness::scratch("cli_schema");
  std::ifstream in(harness::toy_dir() / "schema.json");
  auto schema = nlohmann::json::parse(in);
  schema["columns"].push_back({{"name", "soil_depth"}, {"kind", "numerical"}, {"group", "soil"}});
  auto cfg = toy_config();
  cfg["data"]["schema"] = write_json(dir / "schema.json", schema).string();
  const auto r = run({"fit", "--config", write_json(dir / "config.json", cfg).string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, mtec::cli::kInputError);
  EXPECT_NE(r.err.find("soil_depth"), std::string::npos) << r.err;
}

TEST(CliErrors, BadArgumentsAndConfig) {
  EXPECT_EQ(run({}).code, mtec::cli::kInputError);
  EXPECT_EQ(run({"fit"}).code, mtec::cli::kInputError);
  EXPECT_EQ(run({"frobnicate"}).code, mtec::cli::kInputError);
  EXPECT_EQ(run({"fit", "--config", "/nonexistent/c.json"}).code, mtec::cli::kInputError);

  const auto dir = harness::scratch("cli_bad");
  auto cfg = toy_config();
  cfg["trainning"] = 1;
  const auto r = run({"fit", "--config", write_json(dir / "c.json", cfg).string(), "--dry-run"});
  EXPECT_EQ(r.code, mtec::cli::kInputError);
  EXPECT_NE(r.err.find("trainning"), std::string::npos) << r.err;
}

TEST(CliErrors, ExclusiveAndPairedFlags) {
  EXPECT_EQ(run({"compare", "--model", "m.json", "--glm", "--external-scores", "s.csv", "--eval", "y.csv"}).code,
            mtec::cli::kInputError);
  EXPECT_EQ(run({"network", "--model", "m.json", "--lambda-grid", "0.1,0.2"}).code, mtec::cli::kInputError);
  EXPECT_EQ(run({"network", "--model", "m.json", "--lambda", "0.1", "--lambda-grid", "0.1,0.2", "--ebic"}).code,
            mtec::cli::kInputError);
  EXPECT_EQ(run({"explain", "--model", "m.json", "--exact", "--samples", "10"}).code, mtec::cli::kInputError);
}

TEST(CliErrors, DivergentTrainingExitsThree) {
  const auto dir = harness::scratch("cli_diverge");
  auto cfg = toy_config();
  cfg["training"]["learning_rate"] = 1e300;
  const auto r = run({"fit", "--config", write_json(dir / "c.json", cfg).string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, mtec::cli::kTrainingError) << r.err;
}

TEST(CliErrors, MissingAttributionIsDownstream) {
  const auto r = run({"cluster", "--attribution", "/nonexistent/attr", "--group", "x"});
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.err.empty());
}

}  // namespace
