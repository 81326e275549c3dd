#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mtec::cli {

namespace fs = std::filesystem;

struct CommonArgs {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  bool dry_run = false;
};

struct FitArgs : CommonArgs {
  fs::path config;
  bool cv5x2 = false;
  std::vector<double> reg_grid;
};

struct PredictArgs : CommonArgs {
  fs::path model;
  fs::path covariates;
  int sample_prior = 0;  // 0 = prior mean
};

struct CompareArgs : CommonArgs {
  fs::path model;
  bool glm = false;
  std::optional<fs::path> external_scores;
  std::string external_name = "external";
  fs::path eval;
  bool presence_only = false;
  double external_threshold = 0.5;
  std::optional<fs::path> config;
  std::optional<fs::path> covariates;
};

struct ExplainArgs : CommonArgs {
  fs::path model;
  bool exact = false;
  std::optional<int> samples;
  std::optional<int> background;
  std::optional<int> max_sites;
  std::optional<fs::path> config;
  std::optional<fs::path> covariates;
};

struct ClusterArgs : CommonArgs {
  fs::path attribution;
  std::string group;
  int kmax = 8;
  int references = 50;
  bool consensus = false;
  bool standardize = false;
};

struct NetworkArgs : CommonArgs {
  fs::path model;
  std::optional<double> lambda;
  std::vector<double> lambda_grid;
  bool ebic = false;
  std::optional<fs::path> config;
  std::optional<fs::path> community;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err);
int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err);
int cmd_explain(const ExplainArgs& a, std::ostream& out, std::ostream& err);
int cmd_cluster(const ClusterArgs& a, std::ostream& out, std::ostream& err);
int cmd_network(const NetworkArgs& a, std::ostream& out, std::ostream& err);

}  // namespace mtec::cli
