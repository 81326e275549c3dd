#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "mtec/data.hpp"
#include "mtec/error.hpp"
#include "mtec/random.hpp"

namespace fs = std::filesystem;
using mtec::data::FeatureColumn;
using mtec::data::FeatureKind;
using mtec::data::FeatureSchema;
using mtec::data::PreprocessMode;
using mtec::data::Preprocessor;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mtec_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kSchema = R"({"columns": [
  {"name": "temp", "kind": "numerical", "group": "climate"},
  {"name": "lc", "kind": "categorical", "levels": ["forest", "grass", "crop"]}
]})";

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

FeatureSchema numeric_schema(int p) {
  std::vector<FeatureColumn> cols;
  for (int k = 0; k < p; ++k) cols.push_back({"x" + std::to_string(k + 1), FeatureKind::numerical, {}, ""});
  return FeatureSchema(cols);
}

TEST(LoadDataset, ThreeSitesTwoSpecies) {
  const auto dir = temp_dir("toy");
  write(dir / "schema.json", kSchema);
  write(dir / "cov.csv", "site_id,temp,lc\na,1.5,forest\nb,2.5,crop\nc,0.5,grass\n");
  write(dir / "com.csv", "site_id,sp1,sp2\nc,1,0\na,0,1\nb,1,1\n");
  const auto d = mtec::data::load_dataset(dir / "com.csv", dir / "cov.csv", dir / "schema.json");
  EXPECT_EQ(d.n_sites(), 3u);
  EXPECT_EQ(d.n_species(), 2u);
  // Community rows follow the covariate order.
  EXPECT_EQ(d.community(0, 1), 1.0);
  EXPECT_EQ(d.community(2, 0), 1.0);
  EXPECT_EQ(d.covariates(1, 1), 2.0);
  EXPECT_EQ(d.schema[0].group, "climate");
}

TEST(LoadDataset, NonBinaryCellNamesPosition) {
  const auto dir = temp_dir("bad_cell");
  write(dir / "com.csv", "site_id,sp1,sp2\na,0,1\nb,2,0\n");
  try {
    mtec::data::load_community(dir / "com.csv");
    FAIL() << "expected ValidationError";
  } catch (const mtec::ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("sp1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'2'"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, MisalignedSitesRejected) {
  const auto dir = temp_dir("align");
  write(dir / "schema.json", kSchema);
  write(dir / "cov.csv", "site_id,temp,lc\na,1,forest\nb,2,crop\n");
  write(dir / "com.csv", "site_id,sp1\na,1\nz,0\n");
  EXPECT_THROW(mtec::data::load_dataset(dir / "com.csv", dir / "cov.csv", dir / "schema.json"),
               mtec::AlignmentError);
}

TEST(LoadDataset, UnknownLevelPolicy) {
  const auto dir = temp_dir("levels");
  write(dir / "schema.json", kSchema);
  write(dir / "cov.csv", "site_id,temp,lc\na,1,forest\nb,2,desert\n");
  const auto schema = FeatureSchema::load(dir / "schema.json");
  EXPECT_THROW(mtec::data::load_covariates(dir / "cov.csv", schema), mtec::SchemaError);
  mtec::data::LoadOptions o;
  o.allow_unknown_levels = true;
  const auto t = mtec::data::load_covariates(dir / "cov.csv", schema, o);
  EXPECT_EQ(t.unknown_level_cells, 1u);
  EXPECT_EQ(t.values(1, 1), -1.0);
}

TEST(LoadDataset, MissingSchemaColumnIsNamed) {
  const auto dir = temp_dir("missing_col");
  write(dir / "schema.json", kSchema);
  write(dir / "cov.csv", "site_id,temp\na,1\n");
  try {
    mtec::data::load_covariates(dir / "cov.csv", FeatureSchema::load(dir / "schema.json"));
    FAIL() << "expected SchemaError";
  } catch (const mtec::SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("'lc'"), std::string::npos);
  }
}

TEST(LoadDataset, CalibrationShapedInput) {
  const auto dir = temp_dir("calibration");
  const int n = 1346, m = 77;
  mtec::Rng rng(5);
  std::string cov = "site_id,temp,lc\n", com = "site_id";
  for (int j = 0; j < m; ++j) com += ",t" + std::to_string(j);
  com += "\n";
  const char* levels[] = {"forest", "grass", "crop"};
  for (int i = 0; i < n; ++i) {
    const std::string id = "s" + std::to_string(i);
    cov += id + "," + std::to_string(rng.normal()) + "," + levels[rng.below(3)] + "\n";
    com += id;
    for (int j = 0; j < m; ++j) com += rng.bernoulli(0.2) ? ",1" : ",0";
    com += "\n";
  }
  write(dir / "schema.json", kSchema);
  write(dir / "cov.csv", cov);
  write(dir / "com.csv", com);
  const auto d = mtec::data::load_dataset(dir / "com.csv", dir / "cov.csv", dir / "schema.json");
  EXPECT_EQ(d.n_sites(), 1346u);
  EXPECT_EQ(d.n_species(), 77u);
  EXPECT_NO_THROW(d.validate());
}

TEST(Schema, RejectsDuplicatesAndBadKinds) {
  EXPECT_THROW(FeatureSchema::from_json(nlohmann::json::parse(
                   R"({"columns": [{"name": "a", "kind": "numerical"}, {"name": "a", "kind": "numerical"}]})")),
               mtec::SchemaError);
  EXPECT_THROW(FeatureSchema::from_json(nlohmann::json::parse(R"({"columns": [{"name": "a", "kind": "text"}]})")),
               mtec::SchemaError);
  EXPECT_THROW(FeatureSchema::from_json(
                   nlohmann::json::parse(R"({"columns": [{"name": "a", "kind": "categorical", "levels": []}]})")),
               mtec::SchemaError);
}

TEST(Schema, JsonRoundTrip) {
  const auto s = FeatureSchema::from_json(nlohmann::json::parse(kSchema));
  const auto back = FeatureSchema::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.level_index(1, "crop"), 2);
  EXPECT_FALSE(back.level_index(1, "desert").has_value());
}

TEST(Preprocessor, StandardizesTrainColumn) {
  Eigen::MatrixXd raw(3, 1);
  raw << 1, 2, 3;
  const auto p = Preprocessor::fit(raw, numeric_schema(1), all_rows(3));
  const Eigen::MatrixXd t = p.transform(raw);
  EXPECT_NEAR(t(0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(t(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(t(2, 0), 1.224744871391589, 1e-12);
}

TEST(Preprocessor, OneHotAndMeanSlot) {
  const auto schema = FeatureSchema::from_json(nlohmann::json::parse(kSchema));
  Eigen::MatrixXd raw(4, 2);
  raw << 1, 0, 2, 1, 3, 2, 2, 1;
  const auto p = Preprocessor::fit(raw, schema, all_rows(4));
  ASSERT_EQ(p.output_width(), 4u);
  Eigen::VectorXd row(2);
  row << 2.0, 1.0;  // training mean, second level
  const auto t = p.transform_row(row);
  EXPECT_FALSE(t.unseen_level);
  EXPECT_DOUBLE_EQ(t.values(0), 0.0);
  EXPECT_EQ(t.values.tail(3), Eigen::Vector3d(0, 1, 0));
  EXPECT_EQ(p.output_names()[2], "lc=grass");

  row << 2.0, -1.0;
  const auto u = p.transform_row(row);
  EXPECT_TRUE(u.unseen_level);
  EXPECT_EQ(u.values.tail(3), Eigen::Vector3d::Zero());
}

TEST(Preprocessor, TrainingRowRoundTrip) {
  mtec::Rng rng(8);
  Eigen::MatrixXd raw(30, 4);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = rng.normal();
  for (auto mode : {PreprocessMode::end_to_end, PreprocessMode::vif, PreprocessMode::pca}) {
    mtec::data::PreprocessOptions o;
    o.mode = mode;
    const auto p = Preprocessor::fit(raw, numeric_schema(4), all_rows(30), o);
    const Eigen::MatrixXd full = p.transform(raw);
    for (Eigen::Index i = 0; i < raw.rows(); i += 7) {
      EXPECT_EQ(p.transform_row(raw.row(i).transpose()).values, full.row(i).transpose());
    }
    const auto reloaded = Preprocessor::from_json(p.to_json());
    EXPECT_EQ(reloaded.transform(raw), full) << mtec::data::to_string(mode);
  }
}

TEST(Preprocessor, VifDropsOneOfCollinearPair) {
  mtec::Rng rng(9);
  Eigen::MatrixXd raw(40, 3);
  for (Eigen::Index i = 0; i < 40; ++i) {
    raw(i, 0) = rng.normal();
    raw(i, 1) = 2.0 * raw(i, 0) + 1.0;
    raw(i, 2) = rng.normal();
  }
  mtec::data::PreprocessOptions o;
  o.mode = PreprocessMode::vif;
  o.vif_threshold = 10.0;
  const auto p = Preprocessor::fit(raw, numeric_schema(3), all_rows(40), o);
  ASSERT_EQ(p.dropped_columns().size(), 1u);
  EXPECT_TRUE(p.dropped_columns()[0] == 0 || p.dropped_columns()[0] == 1);
  EXPECT_EQ(p.output_width(), 2u);
}

// VIF by regressing each column on the others: 1 / (1 - R^2).
Eigen::VectorXd ols_vif(const Eigen::MatrixXd& x) {
  const Eigen::Index p = x.cols(), n = x.rows();
  Eigen::VectorXd out(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    Eigen::MatrixXd design(n, p);
    design.col(0).setOnes();
    for (Eigen::Index c = 0, d = 1; c < p; ++c)
      if (c != k) design.col(d++) = x.col(c);
    const Eigen::VectorXd y = x.col(k);
    const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(y);
    const double ss_res = (y - design * beta).squaredNorm();
    const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
    out(k) = 1.0 / (ss_res / ss_tot);
  }
  return out;
}

TEST(Preprocessor, VifMatchesRegressionOracle) {
  mtec::Rng rng(10);
  Eigen::MatrixXd x(60, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x.col(3) += 0.8 * x.col(0) - 0.5 * x.col(1);
  const auto vif = mtec::data::variance_inflation_factors(x);
  ASSERT_TRUE(vif.has_value());
  const Eigen::VectorXd oracle = ols_vif(x);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR((*vif)(k), oracle(k), 1e-8 * oracle(k));
}

TEST(Preprocessor, PcaRetainsRankOfData) {
  mtec::Rng rng(11);
  Eigen::MatrixXd raw(50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const double a = rng.normal(), b = rng.normal();
    raw(i, 0) = a;
    raw(i, 1) = b;
    raw(i, 2) = a - 2.0 * b;
  }
  mtec::data::PreprocessOptions o;
  o.mode = PreprocessMode::pca;
  o.pca_variance = 1.0;
  const auto p = Preprocessor::fit(raw, numeric_schema(3), all_rows(50), o);
  EXPECT_EQ(p.output_width(), 2u);

  // Oracle: eigenvalues of the covariance of the standardized data.
  Eigen::MatrixXd z = raw.rowwise() - raw.colwise().mean();
  const Eigen::RowVectorXd sd = (z.array().square().colwise().sum() / 50.0).sqrt();
  z = z.array().rowwise() / sd.array();
  const Eigen::MatrixXd cov = z.transpose() * z / 50.0;
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().reverse();
  EXPECT_NEAR(p.explained_variance()(0), ev(0) / ev.sum(), 1e-10);
  EXPECT_NEAR(p.explained_variance()(1), ev(1) / ev.sum(), 1e-10);
  EXPECT_NEAR(p.explained_variance().sum(), 1.0, 1e-10);
}

TEST(Preprocessor, ZeroVarianceColumnRejected) {
  Eigen::MatrixXd raw = Eigen::MatrixXd::Ones(5, 1);
  EXPECT_THROW(Preprocessor::fit(raw, numeric_schema(1), all_rows(5)), mtec::ValidationError);
}

TEST(Dataset, SubsetKeepsAlignment) {
  mtec::data::Dataset d;
  d.site_ids = {"a", "b", "c"};
  d.covariates = Eigen::MatrixXd(3, 1);
  d.covariates << 1, 2, 3;
  d.community = Eigen::MatrixXd(3, 1);
  d.community << 0, 1, 1;
  d.species_names = {"sp"};
  d.schema = numeric_schema(1);
  const auto s = d.subset({2, 0});
  EXPECT_EQ(s.site_ids, (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(s.covariates(0, 0), 3.0);
  EXPECT_EQ(s.community(1, 0), 0.0);
  d.community(1, 0) = 0.5;
  EXPECT_THROW(d.validate(), mtec::ValidationError);
}

}  // namespace
