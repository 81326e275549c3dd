#include "mtec/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "mtec/error.hpp"

namespace mtec::cli {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(section + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(section + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get(const nlohmann::json& j, const char* key, const T& fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(section + "." + key + ": wrong type");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

void RunConfig::validate() const {
  model.validate();
  training.validate();
  if (split.min_occur < 1) throw ConfigError("split.min_occur must be >= 1");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    throw ConfigError("split.train_fraction must lie in (0, 1)");
  }
  if (shap.mode != "automatic" && shap.mode != "exact" && shap.mode != "sampled") {
    throw ConfigError("shap.mode must be automatic, exact or sampled");
  }
  if (shap.samples < 2) throw ConfigError("shap.samples must be >= 2");
  if (shap.background < 1) throw ConfigError("shap.background must be >= 1");
  if (shap.max_sites < 0) throw ConfigError("shap.max_sites must be >= 0");
  if (cluster.k_max < 1) throw ConfigError("cluster.k_max must be >= 1");
  if (cluster.references < 10) throw ConfigError("cluster.references must be >= 10");
  if (!(network.lambda >= 0.0)) throw ConfigError("network.lambda must be >= 0");
  for (double l : network.lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("network.lambda_grid values must be >= 0");
  }
  if (network.max_iter < 1) throw ConfigError("network.max_iter must be >= 1");
  parse_link(baseline.link);
  if (baseline.lambda_lasso < 0.0 || baseline.lambda_ridge < 0.0) {
    throw ConfigError("baseline penalties must be >= 0");
  }
  if (!(preprocessing.vif_threshold > 1.0)) throw ConfigError("preprocessing.vif_threshold must be > 1");
  if (!(preprocessing.pca_variance > 0.0 && preprocessing.pca_variance <= 1.0)) {
    throw ConfigError("preprocessing.pca_variance must lie in (0, 1]");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json d = {{"community", data.community.generic_string()},
                      {"covariates", data.covariates.generic_string()},
                      {"schema", data.schema.generic_string()}};
  if (data.coordinates) d["coordinates"] = data.coordinates->generic_string();
  return {
      {"data", d},
      {"output_dir", output_dir.generic_string()},
      {"seed", seed},
      {"preprocessing",
       {{"mode", data::to_string(preprocessing.mode)},
        {"vif_threshold", preprocessing.vif_threshold},
        {"pca_variance", preprocessing.pca_variance}}},
      {"model", model.to_json()},
      {"training", training.to_json()},
      {"split", {{"min_occur", split.min_occur}, {"train_fraction", split.train_fraction}}},
      {"shap",
       {{"mode", shap.mode}, {"samples", shap.samples}, {"background", shap.background}, {"max_sites", shap.max_sites}}},
      {"cluster",
       {{"k_max", cluster.k_max},
        {"references", cluster.references},
        {"standardize", cluster.standardize},
        {"consensus", cluster.consensus}}},
      {"network",
       {{"lambda", network.lambda},
        {"lambda_grid", network.lambda_grid},
        {"max_iter", network.max_iter},
        {"tol", network.tol}}},
      {"baseline",
       {{"link", baseline.link},
        {"lambda_lasso", baseline.lambda_lasso},
        {"lambda_ridge", baseline.lambda_ridge},
        {"max_iterations", baseline.max_iterations}}},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown(j, "config",
                 {"data", "output_dir", "seed", "preprocessing", "model", "training", "split", "shap", "cluster",
                  "network", "baseline"});
  RunConfig c;
  if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
  const auto& d = j.at("data");
  reject_unknown(d, "data", {"community", "covariates", "schema", "coordinates"});
  for (const char* key : {"community", "covariates", "schema"}) {
    if (!d.contains(key)) throw ConfigError(std::string("data: missing '") + key + "'");
  }
  c.data.community = resolve(base_dir, get<std::string>(d, "community", "", "data"));
  c.data.covariates = resolve(base_dir, get<std::string>(d, "covariates", "", "data"));
  c.data.schema = resolve(base_dir, get<std::string>(d, "schema", "", "data"));
  if (d.contains("coordinates")) c.data.coordinates = resolve(base_dir, get<std::string>(d, "coordinates", "", "data"));

  c.output_dir = resolve(base_dir, get<std::string>(j, "output_dir", c.output_dir.string(), "config"));
  c.seed = get<std::uint64_t>(j, "seed", c.seed, "config");

  if (j.contains("preprocessing")) {
    const auto& p = j.at("preprocessing");
    reject_unknown(p, "preprocessing", {"mode", "vif_threshold", "pca_variance"});
    c.preprocessing.mode = data::parse_preprocess_mode(get<std::string>(p, "mode", "end_to_end", "preprocessing"));
    c.preprocessing.vif_threshold = get(p, "vif_threshold", c.preprocessing.vif_threshold, "preprocessing");
    c.preprocessing.pca_variance = get(p, "pca_variance", c.preprocessing.pca_variance, "preprocessing");
  }
  if (j.contains("model")) c.model = MtecConfig::from_json(j.at("model"));
  if (j.contains("training")) c.training = train::TrainSettings::from_json(j.at("training"));
  if (j.contains("split")) {
    const auto& s = j.at("split");
    reject_unknown(s, "split", {"min_occur", "train_fraction"});
    c.split.min_occur = get(s, "min_occur", c.split.min_occur, "split");
    c.split.train_fraction = get(s, "train_fraction", c.split.train_fraction, "split");
  }
  if (j.contains("shap")) {
    const auto& s = j.at("shap");
    reject_unknown(s, "shap", {"mode", "samples", "background", "max_sites"});
    c.shap.mode = get(s, "mode", c.shap.mode, "shap");
    c.shap.samples = get(s, "samples", c.shap.samples, "shap");
    c.shap.background = get(s, "background", c.shap.background, "shap");
    c.shap.max_sites = get(s, "max_sites", c.shap.max_sites, "shap");
  }
  if (j.contains("cluster")) {
    const auto& s = j.at("cluster");
    reject_unknown(s, "cluster", {"k_max", "references", "standardize", "consensus"});
    c.cluster.k_max = get(s, "k_max", c.cluster.k_max, "cluster");
    c.cluster.references = get(s, "references", c.cluster.references, "cluster");
    c.cluster.standardize = get(s, "standardize", c.cluster.standardize, "cluster");
    c.cluster.consensus = get(s, "consensus", c.cluster.consensus, "cluster");
  }
  if (j.contains("network")) {
    const auto& s = j.at("network");
    reject_unknown(s, "network", {"lambda", "lambda_grid", "max_iter", "tol"});
    c.network.lambda = get(s, "lambda", c.network.lambda, "network");
    c.network.lambda_grid = get(s, "lambda_grid", c.network.lambda_grid, "network");
    c.network.max_iter = get(s, "max_iter", c.network.max_iter, "network");
    c.network.tol = get(s, "tol", c.network.tol, "network");
  }
  if (j.contains("baseline")) {
    const auto& s = j.at("baseline");
    reject_unknown(s, "baseline", {"link", "lambda_lasso", "lambda_ridge", "max_iterations"});
    c.baseline.link = get(s, "link", c.baseline.link, "baseline");
    c.baseline.lambda_lasso = get(s, "lambda_lasso", c.baseline.lambda_lasso, "baseline");
    c.baseline.lambda_ridge = get(s, "lambda_ridge", c.baseline.lambda_ridge, "baseline");
    c.baseline.max_iterations = get(s, "max_iterations", c.baseline.max_iterations, "baseline");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return from_json(j, path.parent_path());
}

std::string defaults_text() {
  RunConfig c;
  c.data.community = "<required>";
  c.data.covariates = "<required>";
  c.data.schema = "<required>";
  return "Config defaults (JSON; unknown keys are rejected):\n" + c.to_json().dump(2) + "\n";
}

}  // namespace mtec::cli
