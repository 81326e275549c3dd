#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtec/data.hpp"
#include "mtec/model.hpp"
#include "mtec/train.hpp"

namespace mtec::cli {

struct DataPaths {
  std::filesystem::path community;
  std::filesystem::path covariates;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> coordinates;  // site_id,x,y
};

struct SplitSettings {
  int min_occur = 5;
  double train_fraction = 0.8;
};

struct ShapSettings {
  std::string mode = "automatic";  // automatic | exact | sampled
  int samples = 2048;
  int background = 50;
  int max_sites = 0;  // 0 explains every site
};

struct ClusterSettings {
  int k_max = 8;
  int references = 50;
  bool standardize = false;
  bool consensus = false;
};

struct NetworkSettings {
  double lambda = 0.01;
  std::vector<double> lambda_grid;
  int max_iter = 500;
  double tol = 1e-6;
};

struct BaselineSettings {
  std::string link = "logit";
  double lambda_lasso = 0.0;
  double lambda_ridge = 0.0;
  int max_iterations = 20000;
};

// Full run configuration. Relative data and output paths resolve against
// the directory holding the config file. Unknown keys are rejected.
struct RunConfig {
  DataPaths data;
  std::filesystem::path output_dir = "mtec_out";
  std::uint64_t seed = 0;
  data::PreprocessOptions preprocessing;
  MtecConfig model;
  train::TrainSettings training;
  SplitSettings split;
  ShapSettings shap;
  ClusterSettings cluster;
  NetworkSettings network;
  BaselineSettings baseline;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
};

// Defaults as JSON, printed in `fit --help`.
std::string defaults_text();

}  // namespace mtec::cli
