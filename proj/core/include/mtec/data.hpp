#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mtec::data {

enum class FeatureKind { numerical, ordinal, categorical };

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;
  std::vector<std::string> levels;  // categorical only
  std::string group;                // optional feature-group tag ("" = unassigned)
};

// Typed description of the raw covariate columns. Construction validates
// unique names and non-empty, duplicate-free level lists.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureColumn> columns);

  static FeatureSchema from_json(const nlohmann::json& j);
  static FeatureSchema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<FeatureColumn>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  const FeatureColumn& operator[](std::size_t i) const { return columns_[i]; }
  int index_of(const std::string& name) const;

  // Level index of a categorical value, or nullopt when the level is unknown.
  std::optional<int> level_index(std::size_t column, const std::string& value) const;

 private:
  std::vector<FeatureColumn> columns_;
};

// Raw covariates (categorical cells hold level indices, -1 for a level not in
// the schema) and the binary community matrix, row-aligned by site.
struct Dataset {
  std::vector<std::string> site_ids;
  Eigen::MatrixXd covariates;  // N x P raw
  Eigen::MatrixXd community;   // N x M, entries 0/1
  std::vector<std::string> species_names;
  FeatureSchema schema;

  std::size_t n_sites() const { return site_ids.size(); }
  std::size_t n_species() const { return species_names.size(); }

  // Checks dimensions and the binary invariant; throws ValidationError.
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct LoadOptions {
  // Map unknown categorical levels to -1 instead of failing (prediction time).
  bool allow_unknown_levels = false;
};

// Covariates CSV against a schema. Row order follows the file.
struct CovariateTable {
  std::vector<std::string> site_ids;
  Eigen::MatrixXd values;
  std::size_t unknown_level_cells = 0;
};
CovariateTable load_covariates(const std::filesystem::path& path, const FeatureSchema& schema,
                               const LoadOptions& options = {});

// Community CSV (site_id + one 0/1 column per species).
struct CommunityTable {
  std::vector<std::string> site_ids;
  std::vector<std::string> species_names;
  Eigen::MatrixXd values;
};
CommunityTable load_community(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& community_path,
                     const std::filesystem::path& covariates_path,
                     const std::filesystem::path& schema_path);

// Rows of the community table reordered to match `site_ids`; throws
// AlignmentError naming the first id missing from either side.
Eigen::MatrixXd align_community(const CommunityTable& community,
                                const std::vector<std::string>& site_ids);

enum class PreprocessMode { end_to_end, vif, pca };

std::string to_string(PreprocessMode mode);
PreprocessMode parse_preprocess_mode(const std::string& s);

struct PreprocessOptions {
  PreprocessMode mode = PreprocessMode::end_to_end;
  double vif_threshold = 10.0;
  double pca_variance = 0.95;
};

// Output of transforming one raw row.
struct TransformedRow {
  Eigen::VectorXd values;
  bool unseen_level = false;
};

// Fitted covariate transformation. Immutable after fit; transform is a pure
// function of the fitted state and the row.
class Preprocessor {
 public:
  static Preprocessor fit(const Dataset& d, const std::vector<std::size_t>& train_rows,
                          const PreprocessOptions& options = {});
  static Preprocessor fit(const Eigen::MatrixXd& raw, const FeatureSchema& schema,
                          const std::vector<std::size_t>& train_rows,
                          const PreprocessOptions& options = {});

  TransformedRow transform_row(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const;
  // Row-wise transform of a raw matrix; `unseen_rows` (optional) counts rows
  // that hit an unseen categorical level.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& raw, std::size_t* unseen_rows = nullptr) const;

  PreprocessMode mode() const { return options_.mode; }
  const PreprocessOptions& options() const { return options_; }
  std::size_t input_width() const { return schema_.size(); }
  std::size_t output_width() const;
  const FeatureSchema& schema() const { return schema_; }

  // Names of the output slots ("temp", "landcover=forest", "PC1", ...).
  std::vector<std::string> output_names() const;

  const std::vector<std::size_t>& dropped_columns() const { return vif_dropped_; }
  bool vif_fallback_used() const { return vif_fallback_; }
  const Eigen::VectorXd& explained_variance() const { return pca_explained_; }

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);

 private:
  // Standardize + one-hot, before VIF column removal or PCA projection.
  Eigen::VectorXd expand(const Eigen::Ref<const Eigen::VectorXd>& raw_row, bool& unseen) const;

  FeatureSchema schema_;
  PreprocessOptions options_;
  std::vector<double> mean_;   // per raw column (numeric kinds)
  std::vector<double> scale_;  // population standard deviation
  std::vector<std::size_t> kept_;  // expanded slots kept after VIF
  std::vector<std::size_t> vif_dropped_;  // raw column indices
  bool vif_fallback_ = false;
  Eigen::VectorXd pca_center_;
  Eigen::MatrixXd pca_loadings_;  // expanded width x components
  Eigen::VectorXd pca_explained_;
};

// Variance inflation factor of every column: diag of the inverse correlation
// matrix. Returns nullopt when the correlation matrix is singular.
std::optional<Eigen::VectorXd> variance_inflation_factors(const Eigen::MatrixXd& x);

}  // namespace mtec::data
