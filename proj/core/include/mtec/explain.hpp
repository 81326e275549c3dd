#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mtec::explain {

// Maps raw covariate rows (n x P) to occurrence probabilities (n x M).
using PredictFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

// phi(species, site, feature) with per-species base values.
class ShapAttribution {
 public:
  ShapAttribution() = default;
  ShapAttribution(int n_species, int n_sites, int n_features);

  int n_species() const { return n_species_; }
  int n_sites() const { return n_sites_; }
  int n_features() const { return n_features_; }

  double& operator()(int species, int site, int feature) {
    return values_[index(species, site, feature)];
  }
  double operator()(int species, int site, int feature) const {
    return values_[index(species, site, feature)];
  }

  // sites x features slice for one species.
  Eigen::MatrixXd species_matrix(int species) const;

  Eigen::VectorXd base_values;
  std::vector<std::string> species_names;
  std::vector<std::string> site_ids;
  std::vector<std::string> feature_names;
  std::map<std::string, std::string> feature_groups;  // feature -> group

  // Partitioned CSV (species,site_id,feature,phi) + JSON sidecar.
  void save(const std::filesystem::path& dir) const;
  static ShapAttribution load(const std::filesystem::path& dir);

 private:
  std::size_t index(int s, int i, int p) const {
    return (static_cast<std::size_t>(s) * n_sites_ + i) * n_features_ + p;
  }
  int n_species_ = 0, n_sites_ = 0, n_features_ = 0;
  std::vector<double> values_;
};

enum class ShapMode { automatic, exact, sampled };

struct ShapOptions {
  ShapMode mode = ShapMode::automatic;
  int n_samples = 2048;
  std::uint64_t seed = 0;
  // automatic mode enumerates every coalition up to this many features.
  int exact_max_features = 12;
};

// Kernel SHAP. Features outside a coalition take their values from each
// background row; the coalition value is the mean prediction. Exact mode
// enumerates all 2^P coalitions, sampled mode draws coalition sizes from the
// Shapley kernel. Empty and full coalitions are imposed as constraints, so
// base + sum(phi) = f(x) holds in both modes.
ShapAttribution shap_explain(const PredictFn& model, const Eigen::MatrixXd& sites,
                             const Eigen::MatrixXd& background, const ShapOptions& options = {});

// Shapley kernel weight of a coalition of size s among P features.
double shapley_kernel_weight(int n_features, int coalition_size);

// species x feature mean |phi| over sites.
Eigen::MatrixXd global_importance(const ShapAttribution& attr);

struct GroupImportance {
  std::vector<std::string> groups;  // sorted
  Eigen::MatrixXd values;           // species x group, rows sum to 1
};

// Throws ConfigError when a feature has no group.
GroupImportance group_importance(const ShapAttribution& attr);

// Feature order by decreasing cross-species mean importance (ties by index).
std::vector<int> importance_order(const Eigen::MatrixXd& importance);

struct Coordinates {
  double x = 0.0;
  double y = 0.0;
};

struct LocalRecord {
  std::string site_id;
  double x = 0.0, y = 0.0;
  std::string feature;
  double phi = 0.0;
};

struct LocalExport {
  std::vector<LocalRecord> records;
  std::size_t skipped_sites = 0;  // attributed sites without coordinates
};

LocalExport export_local_attribution(const ShapAttribution& attr, int species,
                                     const std::map<std::string, Coordinates>& coordinates);

void write_local_csv(std::ostream& out, const LocalExport& e);

}  // namespace mtec::explain
