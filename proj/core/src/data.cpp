#include "mtec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "mtec/csv.hpp"
#include "mtec/error.hpp"

namespace mtec::data {

namespace {

std::string kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::numerical: return "numerical";
    case FeatureKind::ordinal: return "ordinal";
    case FeatureKind::categorical: return "categorical";
  }
  return "numerical";
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

FeatureSchema::FeatureSchema(std::vector<FeatureColumn> columns) : columns_(std::move(columns)) {
  std::set<std::string> names;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw SchemaError("schema: empty column name");
    if (!names.insert(c.name).second) throw SchemaError("schema: duplicate column '" + c.name + "'");
    if (c.kind == FeatureKind::categorical) {
      if (c.levels.empty()) throw SchemaError("schema: categorical column '" + c.name + "' has no levels");
      std::set<std::string> lv(c.levels.begin(), c.levels.end());
      if (lv.size() != c.levels.size()) {
        throw SchemaError("schema: categorical column '" + c.name + "' has duplicate levels");
      }
    } else if (!c.levels.empty()) {
      throw SchemaError("schema: column '" + c.name + "' lists levels but is not categorical");
    }
  }
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array()) {
    throw SchemaError("schema: expected an object with a 'columns' array");
  }
  std::vector<FeatureColumn> cols;
  for (const auto& c : j["columns"]) {
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string()) {
      throw SchemaError("schema: column entry without a string 'name'");
    }
    FeatureColumn col;
    col.name = c["name"].get<std::string>();
    for (const auto& [key, _] : c.items()) {
      if (key != "name" && key != "kind" && key != "levels" && key != "group") {
        throw SchemaError("schema: column '" + col.name + "': unknown key '" + key + "'");
      }
    }
    const std::string kind = c.value("kind", "");
    if (kind == "numerical") col.kind = FeatureKind::numerical;
    else if (kind == "ordinal") col.kind = FeatureKind::ordinal;
    else if (kind == "categorical") col.kind = FeatureKind::categorical;
    else throw SchemaError("schema: column '" + col.name + "': invalid kind '" + kind + "'");
    if (c.contains("levels")) {
      if (!c["levels"].is_array()) throw SchemaError("schema: column '" + col.name + "': levels must be an array");
      for (const auto& l : c["levels"]) {
        if (!l.is_string()) throw SchemaError("schema: column '" + col.name + "': levels must be strings");
        col.levels.push_back(l.get<std::string>());
      }
    }
    if (c.contains("group")) col.group = c["group"].get<std::string>();
    cols.push_back(std::move(col));
  }
  try {
    return FeatureSchema(std::move(cols));
  } catch (const SchemaError&) {
    throw;
  }
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns_) {
    nlohmann::json o{{"name", c.name}, {"kind", kind_name(c.kind)}};
    if (c.kind == FeatureKind::categorical) o["levels"] = c.levels;
    if (!c.group.empty()) o["group"] = c.group;
    cols.push_back(std::move(o));
  }
  return {{"columns", cols}};
}

int FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::optional<int> FeatureSchema::level_index(std::size_t column, const std::string& value) const {
  const auto& lv = columns_.at(column).levels;
  const auto it = std::find(lv.begin(), lv.end(), value);
  if (it == lv.end()) return std::nullopt;
  return static_cast<int>(it - lv.begin());
}

void Dataset::validate() const {
  const auto n = static_cast<Eigen::Index>(site_ids.size());
  if (covariates.rows() != n || community.rows() != n) {
    throw ValidationError("dataset: row counts disagree with site ids");
  }
  if (community.cols() != static_cast<Eigen::Index>(species_names.size())) {
    throw ValidationError("dataset: community columns disagree with species names");
  }
  if (covariates.cols() != static_cast<Eigen::Index>(schema.size())) {
    throw ValidationError("dataset: covariate columns disagree with schema");
  }
  for (Eigen::Index i = 0; i < community.rows(); ++i) {
    for (Eigen::Index j = 0; j < community.cols(); ++j) {
      const double v = community(i, j);
      if (v != 0.0 && v != 1.0) {
        throw ValidationError("dataset: community cell (" + site_ids[i] + ", " + species_names[j] +
                              ") is not 0/1");
      }
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.schema = schema;
  out.species_names = species_names;
  out.covariates.resize(static_cast<Eigen::Index>(rows.size()), covariates.cols());
  out.community.resize(static_cast<Eigen::Index>(rows.size()), community.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.site_ids.push_back(site_ids.at(rows[r]));
    out.covariates.row(r) = covariates.row(src);
    out.community.row(r) = community.row(src);
  }
  return out;
}

CovariateTable load_covariates(const std::filesystem::path& path, const FeatureSchema& schema,
                               const LoadOptions& options) {
  const auto table = csv::read(path);
  const std::string src = path.string();
  if (table.header.empty() || trim(table.header[0]) != "site_id") {
    throw SchemaError(src + ": first column must be 'site_id'");
  }
  // Every schema column must be present; extra columns are an error too so a
  // typo in either file is caught.
  std::vector<int> col_of(schema.size(), -1);
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const std::string name = trim(table.header[c]);
    const int idx = schema.index_of(name);
    if (idx < 0) throw SchemaError(src + ": column '" + name + "' is not in the schema");
    if (col_of[idx] >= 0) throw SchemaError(src + ": duplicate column '" + name + "'");
    col_of[idx] = static_cast<int>(c);
  }
  for (std::size_t k = 0; k < schema.size(); ++k) {
    if (col_of[k] < 0) throw SchemaError(src + ": missing schema column '" + schema[k].name + "'");
  }

  CovariateTable out;
  out.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(schema.size()));
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = src + ":" + std::to_string(table.lines[r]);
    const std::string id = trim(row[0]);
    if (id.empty()) throw ValidationError(where + ": empty site_id");
    if (!seen.insert(id).second) throw ValidationError(where + ": duplicate site_id '" + id + "'");
    out.site_ids.push_back(id);
    for (std::size_t k = 0; k < schema.size(); ++k) {
      const std::string cell = trim(row[col_of[k]]);
      const auto& col = schema[k];
      if (cell.empty() || cell == "NA") {
        throw ValidationError(where + ": missing value in column '" + col.name + "'");
      }
      double v = 0.0;
      if (col.kind == FeatureKind::categorical) {
        const auto lvl = schema.level_index(k, cell);
        if (!lvl) {
          if (!options.allow_unknown_levels) {
            throw SchemaError(where + ": unknown level '" + cell + "' for column '" + col.name + "'");
          }
          ++out.unknown_level_cells;
          v = -1.0;
        } else {
          v = *lvl;
        }
      } else if (!parse_double(cell, v)) {
        throw ValidationError(where + ": column '" + col.name + "': not a number: '" + cell + "'");
      }
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return out;
}

CommunityTable load_community(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::string src = path.string();
  if (table.header.empty() || trim(table.header[0]) != "site_id") {
    throw SchemaError(src + ": first column must be 'site_id'");
  }
  CommunityTable out;
  std::set<std::string> names;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const std::string name = trim(table.header[c]);
    if (!names.insert(name).second) throw SchemaError(src + ": duplicate species '" + name + "'");
    out.species_names.push_back(name);
  }
  const auto m = static_cast<Eigen::Index>(out.species_names.size());
  out.values.resize(static_cast<Eigen::Index>(table.rows.size()), m);
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string id = trim(row[0]);
    const std::string where = src + ":" + std::to_string(table.lines[r]);
    if (!seen.insert(id).second) throw ValidationError(where + ": duplicate site_id '" + id + "'");
    out.site_ids.push_back(id);
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::string cell = trim(row[static_cast<std::size_t>(j) + 1]);
      double v;
      if (cell == "0") v = 0.0;
      else if (cell == "1") v = 1.0;
      else {
        throw ValidationError(where + ": community cell (row " + std::to_string(r + 1) + ", column " +
                              std::to_string(j + 2) + " '" + out.species_names[j] +
                              "') must be 0 or 1, found '" + cell + "'");
      }
      out.values(static_cast<Eigen::Index>(r), j) = v;
    }
  }
  return out;
}

Eigen::MatrixXd align_community(const CommunityTable& community,
                                const std::vector<std::string>& site_ids) {
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < community.site_ids.size(); ++i) {
    pos.emplace(community.site_ids[i], static_cast<Eigen::Index>(i));
  }
  std::set<std::string> wanted(site_ids.begin(), site_ids.end());
  for (const auto& id : community.site_ids) {
    if (!wanted.count(id)) throw AlignmentError("site_id '" + id + "' is in the community file but not the covariates file");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(site_ids.size()), community.values.cols());
  for (std::size_t i = 0; i < site_ids.size(); ++i) {
    const auto it = pos.find(site_ids[i]);
    if (it == pos.end()) {
      throw AlignmentError("site_id '" + site_ids[i] + "' is in the covariates file but not the community file");
    }
    out.row(static_cast<Eigen::Index>(i)) = community.values.row(it->second);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& community_path,
                     const std::filesystem::path& covariates_path,
                     const std::filesystem::path& schema_path) {
  Dataset d;
  d.schema = FeatureSchema::load(schema_path);
  auto cov = load_covariates(covariates_path, d.schema);
  auto com = load_community(community_path);
  d.community = align_community(com, cov.site_ids);
  d.site_ids = std::move(cov.site_ids);
  d.covariates = std::move(cov.values);
  d.species_names = std::move(com.species_names);
  d.validate();
  return d;
}

std::string to_string(PreprocessMode mode) {
  switch (mode) {
    case PreprocessMode::end_to_end: return "end_to_end";
    case PreprocessMode::vif: return "vif";
    case PreprocessMode::pca: return "pca";
  }
  return "end_to_end";
}

PreprocessMode parse_preprocess_mode(const std::string& s) {
  if (s == "end_to_end") return PreprocessMode::end_to_end;
  if (s == "vif") return PreprocessMode::vif;
  if (s == "pca") return PreprocessMode::pca;
  throw ConfigError("unknown preprocessing mode '" + s + "'");
}

std::optional<Eigen::VectorXd> variance_inflation_factors(const Eigen::MatrixXd& x) {
  const Eigen::Index p = x.cols();
  if (p == 0) return Eigen::VectorXd();
  if (p == 1) return Eigen::VectorXd::Ones(1);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::VectorXd sd = centered.colwise().norm().transpose();
  if ((sd.array() == 0.0).any()) return std::nullopt;
  const Eigen::MatrixXd z = centered * sd.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd corr = z.transpose() * z;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(corr);
  // Rank-deficient (or numerically so) design: VIF is infinite.
  if (!lu.isInvertible() || lu.rcond() < 1e-12) return std::nullopt;
  const Eigen::MatrixXd inv = lu.inverse();
  return Eigen::VectorXd(inv.diagonal());
}

Preprocessor Preprocessor::fit(const Dataset& d, const std::vector<std::size_t>& train_rows,
                               const PreprocessOptions& options) {
  return fit(d.covariates, d.schema, train_rows, options);
}

Preprocessor Preprocessor::fit(const Eigen::MatrixXd& raw, const FeatureSchema& schema,
                               const std::vector<std::size_t>& train_rows,
                               const PreprocessOptions& options) {
  if (train_rows.empty()) throw ConfigError("preprocessor: no training rows");
  if (options.mode == PreprocessMode::vif && !(options.vif_threshold > 1.0)) {
    throw ConfigError("preprocessor: vif_threshold must exceed 1");
  }
  if (options.mode == PreprocessMode::pca &&
      !(options.pca_variance > 0.0 && options.pca_variance <= 1.0)) {
    throw ConfigError("preprocessor: pca_variance must be in (0, 1]");
  }
  if (raw.cols() != static_cast<Eigen::Index>(schema.size())) {
    throw ShapeError("preprocessor: raw width " + std::to_string(raw.cols()) + " != schema width " +
                     std::to_string(schema.size()));
  }

  Preprocessor p;
  p.schema_ = schema;
  p.options_ = options;
  const auto n = static_cast<double>(train_rows.size());
  p.mean_.assign(schema.size(), 0.0);
  p.scale_.assign(schema.size(), 1.0);
  for (std::size_t k = 0; k < schema.size(); ++k) {
    if (schema[k].kind == FeatureKind::categorical) continue;
    double sum = 0.0;
    for (auto r : train_rows) sum += raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    const double mean = sum / n;
    double ss = 0.0;
    for (auto r : train_rows) {
      const double dv = raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) - mean;
      ss += dv * dv;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) throw ValidationError("preprocessor: column '" + schema[k].name + "' has zero variance");
    p.mean_[k] = mean;
    p.scale_[k] = sd;
  }

  // Expanded layout: numeric columns one slot each, categorical one slot per level.
  std::size_t width = 0;
  std::vector<std::size_t> slot_of(schema.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    slot_of[k] = width;
    width += schema[k].kind == FeatureKind::categorical ? schema[k].levels.size() : 1;
  }
  p.kept_.resize(width);
  for (std::size_t s = 0; s < width; ++s) p.kept_[s] = s;

  if (options.mode == PreprocessMode::end_to_end) return p;

  Eigen::MatrixXd expanded(static_cast<Eigen::Index>(train_rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < train_rows.size(); ++r) {
    bool unseen = false;
    expanded.row(static_cast<Eigen::Index>(r)) =
        p.expand(raw.row(static_cast<Eigen::Index>(train_rows[r])).transpose(), unseen).transpose();
  }

  if (options.mode == PreprocessMode::vif) {
    std::vector<std::size_t> numeric;
    for (std::size_t k = 0; k < schema.size(); ++k) {
      if (schema[k].kind != FeatureKind::categorical) numeric.push_back(k);
    }
    while (numeric.size() > 1) {
      Eigen::MatrixXd sub(expanded.rows(), static_cast<Eigen::Index>(numeric.size()));
      for (std::size_t c = 0; c < numeric.size(); ++c) {
        sub.col(static_cast<Eigen::Index>(c)) = expanded.col(static_cast<Eigen::Index>(slot_of[numeric[c]]));
      }
      const auto vif = variance_inflation_factors(sub);
      std::size_t drop;
      if (vif) {
        Eigen::Index arg;
        const double worst = vif->maxCoeff(&arg);
        if (worst <= options.vif_threshold) break;
        drop = static_cast<std::size_t>(arg);
      } else {
        // Singular design: drop the later column of the most correlated pair.
        p.vif_fallback_ = true;
        const Eigen::MatrixXd centered = sub.rowwise() - sub.colwise().mean();
        const Eigen::VectorXd norms = centered.colwise().norm();
        const Eigen::MatrixXd corr =
            (centered.transpose() * centered).array() / (norms * norms.transpose()).array();
        double best = -1.0;
        drop = numeric.size() - 1;
        for (Eigen::Index a = 0; a < corr.rows(); ++a) {
          for (Eigen::Index b = a + 1; b < corr.cols(); ++b) {
            if (std::abs(corr(a, b)) > best) {
              best = std::abs(corr(a, b));
              drop = static_cast<std::size_t>(b);
            }
          }
        }
      }
      p.vif_dropped_.push_back(numeric[drop]);
      numeric.erase(numeric.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    std::sort(p.vif_dropped_.begin(), p.vif_dropped_.end());
    p.kept_.clear();
    for (std::size_t k = 0; k < schema.size(); ++k) {
      const bool dropped = std::binary_search(p.vif_dropped_.begin(), p.vif_dropped_.end(), k);
      if (dropped) continue;
      const std::size_t span = schema[k].kind == FeatureKind::categorical ? schema[k].levels.size() : 1;
      for (std::size_t s = 0; s < span; ++s) p.kept_.push_back(slot_of[k] + s);
    }
    return p;
  }

  // PCA on the standardized + one-hot training matrix.
  p.pca_center_ = expanded.colwise().mean().transpose();
  const Eigen::MatrixXd centered = expanded.rowwise() - p.pca_center_.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / n;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index w = cov.rows();
  Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double trace = values.sum();
  Eigen::Index keep = w;
  double cumulative = 0.0;
  for (Eigen::Index c = 0; c < w; ++c) {
    cumulative += values(c) / trace;
    if (cumulative >= options.pca_variance - 1e-10) {
      keep = c + 1;
      break;
    }
  }
  for (Eigen::Index c = 0; c < keep; ++c) {
    Eigen::Index arg;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, c) < 0) vectors.col(c) *= -1.0;
  }
  p.pca_loadings_ = vectors.leftCols(keep);
  p.pca_explained_ = values.head(keep) / trace;
  return p;
}

Eigen::VectorXd Preprocessor::expand(const Eigen::Ref<const Eigen::VectorXd>& raw_row, bool& unseen) const {
  std::size_t width = 0;
  for (const auto& c : schema_.columns()) {
    width += c.kind == FeatureKind::categorical ? c.levels.size() : 1;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));
  Eigen::Index slot = 0;
  for (std::size_t k = 0; k < schema_.size(); ++k) {
    const auto& col = schema_[k];
    const double v = raw_row(static_cast<Eigen::Index>(k));
    if (col.kind == FeatureKind::categorical) {
      const auto nlev = static_cast<Eigen::Index>(col.levels.size());
      const double idx = std::round(v);
      if (idx >= 0 && idx < static_cast<double>(nlev) && idx == v) {
        out(slot + static_cast<Eigen::Index>(idx)) = 1.0;
      } else {
        unseen = true;
      }
      slot += nlev;
    } else {
      out(slot++) = (v - mean_[k]) / scale_[k];
    }
  }
  return out;
}

std::size_t Preprocessor::output_width() const {
  if (options_.mode == PreprocessMode::pca) return static_cast<std::size_t>(pca_loadings_.cols());
  return kept_.size();
}

TransformedRow Preprocessor::transform_row(const Eigen::Ref<const Eigen::VectorXd>& raw_row) const {
  if (raw_row.size() != static_cast<Eigen::Index>(schema_.size())) {
    throw ShapeError("transform: expected " + std::to_string(schema_.size()) + " raw values, got " +
                     std::to_string(raw_row.size()));
  }
  TransformedRow out;
  const Eigen::VectorXd full = expand(raw_row, out.unseen_level);
  if (options_.mode == PreprocessMode::pca) {
    out.values = pca_loadings_.transpose() * (full - pca_center_);
    return out;
  }
  out.values.resize(static_cast<Eigen::Index>(kept_.size()));
  for (std::size_t s = 0; s < kept_.size(); ++s) {
    out.values(static_cast<Eigen::Index>(s)) = full(static_cast<Eigen::Index>(kept_[s]));
  }
  return out;
}

Eigen::MatrixXd Preprocessor::transform(const Eigen::MatrixXd& raw, std::size_t* unseen_rows) const {
  Eigen::MatrixXd out(raw.rows(), static_cast<Eigen::Index>(output_width()));
  std::size_t unseen = 0;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    auto row = transform_row(raw.row(i).transpose());
    unseen += row.unseen_level ? 1 : 0;
    out.row(i) = row.values.transpose();
  }
  if (unseen_rows) *unseen_rows = unseen;
  return out;
}

std::vector<std::string> Preprocessor::output_names() const {
  std::vector<std::string> out;
  if (options_.mode == PreprocessMode::pca) {
    for (Eigen::Index c = 0; c < pca_loadings_.cols(); ++c) out.push_back("PC" + std::to_string(c + 1));
    return out;
  }
  std::vector<std::string> all;
  for (const auto& c : schema_.columns()) {
    if (c.kind == FeatureKind::categorical) {
      for (const auto& l : c.levels) all.push_back(c.name + "=" + l);
    } else {
      all.push_back(c.name);
    }
  }
  for (auto s : kept_) out.push_back(all[s]);
  return out;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("shape").at(0).get<Eigen::Index>();
  const auto cols = j.at("shape").at(1).get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ShapeError("matrix: data/shape mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

}  // namespace

nlohmann::json Preprocessor::to_json() const {
  nlohmann::json j;
  j["schema"] = schema_.to_json();
  j["mode"] = to_string(options_.mode);
  j["vif_threshold"] = options_.vif_threshold;
  j["pca_variance"] = options_.pca_variance;
  j["mean"] = mean_;
  j["scale"] = scale_;
  j["kept_slots"] = kept_;
  j["vif_dropped"] = vif_dropped_;
  j["vif_fallback"] = vif_fallback_;
  if (options_.mode == PreprocessMode::pca) {
    j["pca_center"] = std::vector<double>(pca_center_.data(), pca_center_.data() + pca_center_.size());
    j["pca_loadings"] = matrix_json(pca_loadings_);
    j["pca_explained"] =
        std::vector<double>(pca_explained_.data(), pca_explained_.data() + pca_explained_.size());
  }
  return j;
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  p.schema_ = FeatureSchema::from_json(j.at("schema"));
  p.options_.mode = parse_preprocess_mode(j.at("mode").get<std::string>());
  p.options_.vif_threshold = j.at("vif_threshold").get<double>();
  p.options_.pca_variance = j.at("pca_variance").get<double>();
  p.mean_ = j.at("mean").get<std::vector<double>>();
  p.scale_ = j.at("scale").get<std::vector<double>>();
  p.kept_ = j.at("kept_slots").get<std::vector<std::size_t>>();
  p.vif_dropped_ = j.at("vif_dropped").get<std::vector<std::size_t>>();
  p.vif_fallback_ = j.at("vif_fallback").get<bool>();
  if (p.mean_.size() != p.schema_.size() || p.scale_.size() != p.schema_.size()) {
    throw ShapeError("preprocessor: state does not match schema");
  }
  if (p.options_.mode == PreprocessMode::pca) {
    const auto c = j.at("pca_center").get<std::vector<double>>();
    p.pca_center_ = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    p.pca_loadings_ = matrix_from_json(j.at("pca_loadings"));
    const auto e = j.at("pca_explained").get<std::vector<double>>();
    p.pca_explained_ = Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
  }
  return p;
}

}  // namespace mtec::data
