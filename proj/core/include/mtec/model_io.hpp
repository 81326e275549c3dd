#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtec/data.hpp"
#include "mtec/model.hpp"

namespace mtec {

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  LossParts final_train;
  double final_valid_total = 0.0;
  std::vector<std::string> train_sites;
  std::vector<std::string> valid_sites;
  // Per-species max-TSS thresholds on the validation rows (0.5 when undefined).
  std::vector<double> thresholds;
};

// Everything needed to predict from raw covariates: the preprocessor fitted
// on the training rows, the model, and provenance of the fit.
struct ModelBundle {
  static constexpr int kFormatVersion = 1;

  data::Preprocessor preprocessor;
  MtecModel model;
  std::vector<std::string> species_names;
  TrainingMetadata metadata;

  // Raw covariate rows -> occurrence probabilities.
  Eigen::MatrixXd predict_raw(const Eigen::MatrixXd& raw, const PredictOptions& options = {}) const;

  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static ModelBundle load(const std::filesystem::path& path);
};

}  // namespace mtec
