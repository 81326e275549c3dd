#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "mtec/assoc.hpp"
#include "mtec/baseline.hpp"
#include "mtec/cli/run_config.hpp"
#include "mtec/csv.hpp"
#include "mtec/error.hpp"
#include "mtec/eval.hpp"
#include "mtec/explain.hpp"
#include "mtec/groups.hpp"
#include "mtec/model_io.hpp"
#include "mtec/random.hpp"
#include "mtec/train.hpp"

namespace mtec::cli {

namespace {

// Independent seed streams derived from the single user seed.
enum Stream : std::uint64_t { kSplit = 1, kCv = 2, kTrain = 3, kShap = 4, kBackground = 5, kPrior = 6 };

std::uint64_t derive(std::uint64_t seed, Stream stream) { return Rng(seed).split(stream).next(); }

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

std::string opt_number(const std::optional<double>& v, int precision = 3) {
  return v ? csv::format_number(*v, precision) : "n/a";
}

std::string join_csv(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) line += ',';
    line += csv::escape(cells[k]);
  }
  return line + '\n';
}

// row names x column names matrix.
std::string matrix_csv(const std::string& corner, const std::vector<std::string>& rows,
                       const std::vector<std::string>& cols, const Eigen::MatrixXd& m, int precision = 8) {
  std::vector<std::string> header{corner};
  header.insert(header.end(), cols.begin(), cols.end());
  std::string text = join_csv(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> cells{rows[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) cells.push_back(csv::format_number(m(i, j), precision));
    text += join_csv(cells);
  }
  return text;
}

std::map<std::string, std::size_t> index_by_name(const std::vector<std::string>& names) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t k = 0; k < names.size(); ++k) idx.emplace(names[k], k);
  return idx;
}

// Rows of `ids` located in `lookup`; throws naming the first missing id.
std::vector<std::size_t> locate(const std::vector<std::string>& ids, const std::vector<std::string>& lookup,
                                const std::string& what) {
  const auto idx = index_by_name(lookup);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = idx.find(id);
    if (it == idx.end()) throw AlignmentError("site '" + id + "' missing from " + what);
    rows.push_back(it->second);
  }
  return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

Eigen::MatrixXd take_cols(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(cols[k]));
  return out;
}

std::map<std::string, explain::Coordinates> load_coordinates(const fs::path& path) {
  const auto t = csv::read(path);
  const int id = t.column("site_id"), x = t.column("x"), y = t.column("y");
  if (id < 0 || x < 0 || y < 0) throw SchemaError(path.string() + ": coordinates need site_id, x and y columns");
  std::map<std::string, explain::Coordinates> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    try {
      out[row.at(static_cast<std::size_t>(id))] = {std::stod(row.at(static_cast<std::size_t>(x))),
                                                   std::stod(row.at(static_cast<std::size_t>(y)))};
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ":" + std::to_string(t.lines[r]) + ": bad coordinate");
    }
  }
  return out;
}

std::vector<double> select_thresholds(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels) {
  std::vector<double> th;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    const auto s = eval::column(scores, j), y = eval::column(labels, j);
    const auto choice = eval::select_threshold(s, y);
    th.push_back(choice ? choice->threshold : 0.5);
  }
  return th;
}

nlohmann::json summary_json(const eval::MetricReport& r) {
  return {{"tss", eval::format_summary(r.tss())},
          {"roc_auc", eval::format_summary(r.auc())},
          {"recall", eval::format_summary(r.recall())}};
}

std::optional<RunConfig> maybe_config(const std::optional<fs::path>& path) {
  if (!path) return std::nullopt;
  return RunConfig::load(*path);
}

std::uint64_t pick_seed(const CommonArgs& a, const std::optional<RunConfig>& cfg) {
  if (a.seed) return *a.seed;
  return cfg ? cfg->seed : 0;
}

// ---------------------------------------------------------------- fit

double mean_defined(const std::vector<eval::SpeciesMetrics>& metrics) {
  double sum = 0.0;
  int n = 0;
  for (const auto& m : metrics) {
    if (m.auc) {
      sum += *m.auc;
      ++n;
    }
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = RunConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const fs::path out_dir = a.out ? *a.out : cfg.output_dir;
  for (double l : a.reg_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("--reg-grid values must be finite and >= 0");
  }
  const data::Dataset d = data::load_dataset(cfg.data.community, cfg.data.covariates, cfg.data.schema);
  if (cfg.data.coordinates) load_coordinates(*cfg.data.coordinates);
  const auto n_train = static_cast<std::size_t>(std::lround(cfg.split.train_fraction * static_cast<double>(d.n_sites())));
  if (n_train < 1 || n_train >= d.n_sites()) throw ConfigError("split.train_fraction leaves an empty partition");

  if (a.dry_run) {
    out << "fit: configuration valid (" << d.n_sites() << " sites, " << d.n_species() << " species, "
        << d.schema.size() << " covariates); nothing written\n";
    return 0;
  }

  const auto plan = train::balanced_partition(d.community, cfg.split.min_occur, n_train, derive(cfg.seed, kSplit));
  if (plan.overflow) err << "fit: warning: mandatory presence draws exceeded the training size\n";

  train::TrainSettings settings = cfg.training;
  settings.seed = derive(cfg.seed, kTrain);

  nlohmann::json report;
  report["data"] = {{"sites", d.n_sites()}, {"species", d.n_species()}, {"covariates", d.schema.size()}};
  report["split"] = {{"train", plan.train_rows.size()},
                     {"valid", plan.valid_rows.size()},
                     {"min_occur", plan.min_occur},
                     {"overflow", plan.overflow}};

  MtecConfig chosen = cfg.model;
  if (a.cv5x2 || !a.reg_grid.empty()) {
    std::vector<MtecConfig> configs;
    std::vector<std::string> names;
    if (a.reg_grid.empty()) {
      configs.push_back(cfg.model);
      names.push_back("config");
    }
    for (double l : a.reg_grid) {
      MtecConfig c = cfg.model;
      c.lambda_lasso = l;
      c.lambda_ridge = l;
      configs.push_back(c);
      names.push_back("lambda=" + csv::format_number(l, 6));
    }
    if (a.cv5x2) {
      train::CvOptions cv;
      cv.min_occur = cfg.split.min_occur;
      cv.preprocessing = cfg.preprocessing;
      cv.seed = derive(cfg.seed, kCv);
      const auto rep = train::cross_validate_5x2(d, configs, names, settings, cv);
      chosen = configs[rep.best_config];
      report["cv5x2"] = rep.to_json();
    } else {
      // Grid without cross-validation: pick by mean validation AUC on the split.
      nlohmann::json grid = nlohmann::json::array();
      double best = -1.0;
      for (std::size_t k = 0; k < configs.size(); ++k) {
        const auto r = train::fit(d, cfg.preprocessing, configs[k], settings, plan);
        const auto& valid = plan.valid_rows.empty() ? plan.train_rows : plan.valid_rows;
        const Eigen::MatrixXd f = r.preprocessor.transform(take_rows(d.covariates, valid));
        const auto metrics = eval::evaluate(names[k], r.fit.model.predict(f), take_rows(d.community, valid), d.species_names);
        const double score = mean_defined(metrics.per_species);
        grid.push_back({{"name", names[k]}, {"valid_mean_auc", std::isfinite(score) ? nlohmann::json(score) : nlohmann::json(nullptr)}});
        if (score > best) {
          best = score;
          chosen = configs[k];
        }
      }
      report["reg_grid"] = grid;
    }
  }
  report["model"] = chosen.to_json();
  report["training"] = cfg.training.to_json();

  auto result = train::fit(d, cfg.preprocessing, chosen, settings, plan);
  const auto& log = result.fit.log;
  std::ostringstream log_csv;
  log.write_csv(log_csv);
  write_text(out_dir / "training_log.csv", log_csv.str());
  if (log.aborted) throw TrainingError(log.diagnostic);

  ModelBundle bundle;
  bundle.preprocessor = result.preprocessor;
  bundle.model = result.fit.model;
  bundle.species_names = d.species_names;
  auto& meta = bundle.metadata;
  meta.seed = cfg.seed;
  meta.epochs_run = static_cast<int>(log.epochs.size());
  meta.best_epoch = log.best_epoch;
  for (const auto& e : log.epochs) {
    if (e.epoch == log.best_epoch) {
      meta.final_train = {e.recon, e.kl, e.reg};
      meta.final_valid_total = e.valid_total;
    }
  }
  for (auto r : plan.train_rows) meta.train_sites.push_back(d.site_ids[r]);
  for (auto r : plan.valid_rows) meta.valid_sites.push_back(d.site_ids[r]);

  const auto& valid = plan.valid_rows.empty() ? plan.train_rows : plan.valid_rows;
  const Eigen::MatrixXd valid_scores = bundle.predict_raw(take_rows(d.covariates, valid));
  const Eigen::MatrixXd valid_labels = take_rows(d.community, valid);
  meta.thresholds = select_thresholds(valid_scores, valid_labels);
  bundle.save(out_dir / "model.json");

  const auto metrics = eval::evaluate("MTEC", valid_scores, valid_labels, d.species_names, meta.thresholds);
  report["best_epoch"] = log.best_epoch;
  report["epochs_run"] = meta.epochs_run;
  report["final_loss"] = {{"recon", meta.final_train.recon},
                          {"kl", meta.final_train.kl},
                          {"reg", meta.final_train.reg},
                          {"valid_total", meta.final_valid_total}};
  report["validation"] = summary_json(metrics);
  write_text(out_dir / "report.json", report.dump(2) + "\n");

  out << "fit: best epoch " << log.best_epoch << " of " << meta.epochs_run << "; wrote model.json, training_log.csv, report.json to "
      << out_dir.generic_string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  if (a.sample_prior < 0) throw ConfigError("--sample-prior must be >= 0");
  const auto bundle = ModelBundle::load(a.model);
  data::LoadOptions lo;
  lo.allow_unknown_levels = true;
  const auto table = data::load_covariates(a.covariates, bundle.preprocessor.schema(), lo);
  if (a.dry_run) {
    out << "predict: inputs valid (" << table.site_ids.size() << " sites, " << bundle.species_names.size()
        << " species); nothing written\n";
    return 0;
  }
  if (table.unknown_level_cells > 0) {
    err << "predict: warning: " << table.unknown_level_cells << " cells hold categorical levels unseen in training\n";
  }
  PredictOptions po;
  if (a.sample_prior > 0) {
    po.mode = PredictOptions::Mode::prior_sample;
    po.n_draws = a.sample_prior;
    po.seed = derive(a.seed.value_or(0), kPrior);
  }
  const Eigen::MatrixXd p = bundle.predict_raw(table.values, po);
  std::vector<std::string> header{"site_id"};
  header.insert(header.end(), bundle.species_names.begin(), bundle.species_names.end());
  std::string text = matrix_csv("site_id", table.site_ids, bundle.species_names, p, 8);
  if (a.out) {
    write_text(*a.out, text);
    out << "predict: wrote " << p.rows() << " x " << p.cols() << " suitability table to " << a.out->generic_string() << "\n";
  } else {
    out << text;
  }
  return 0;
}

// ---------------------------------------------------------------- compare

namespace {

struct ScoredModel {
  std::string name;
  Eigen::MatrixXd scores;          // eval sites x overlap species
  std::vector<double> thresholds;  // for presence-only evaluation
};

std::string per_species_csv(const std::vector<eval::MetricReport>& reports) {
  std::vector<std::string> header{"target", "prevalence", "threshold"};
  for (const char* metric : {"tss", "roc_auc", "recall"})
    for (const auto& r : reports) header.push_back(std::string(metric) + "_" + r.model_name);
  std::string text = join_csv(header);

  const auto& first = reports.front().per_species;
  auto mean_of = [&](const eval::MetricReport& r, auto member) -> std::optional<double> {
    double s = 0.0;
    int n = 0;
    for (const auto& m : r.per_species) {
      if (const auto v = m.*member) {
        s += *v;
        ++n;
      }
    }
    if (!n) return std::nullopt;
    return s / n;
  };
  double prev = 0.0, thr = 0.0;
  for (const auto& m : first) {
    prev += m.prevalence;
    thr += m.threshold;
  }
  const double count = static_cast<double>(first.size());
  std::vector<std::string> avg{"Average", csv::format_number(prev / count, 3), csv::format_number(thr / count, 3)};
  for (auto member : {&eval::SpeciesMetrics::tss, &eval::SpeciesMetrics::auc, &eval::SpeciesMetrics::recall})
    for (const auto& r : reports) avg.push_back(opt_number(mean_of(r, member)));
  text += join_csv(avg);

  for (std::size_t s = 0; s < first.size(); ++s) {
    std::vector<std::string> row{first[s].species, csv::format_number(first[s].prevalence, 3),
                                 csv::format_number(first[s].threshold, 3)};
    for (auto member : {&eval::SpeciesMetrics::tss, &eval::SpeciesMetrics::auc, &eval::SpeciesMetrics::recall})
      for (const auto& r : reports) row.push_back(opt_number(r.per_species[s].*member));
    text += join_csv(row);
  }
  return text;
}

std::string summary_csv(const std::vector<eval::MetricReport>& reports) {
  std::string text = join_csv({"Model", "TSS", "ROC AUC", "Recall (Evaluation)"});
  for (const auto& r : reports) {
    text += join_csv({r.model_name, eval::format_summary(r.tss()), eval::format_summary(r.auc()),
                      eval::format_summary(r.recall())});
  }
  return text;
}

std::vector<double> defined(const eval::MetricReport& r, std::optional<double> eval::SpeciesMetrics::*member) {
  std::vector<double> v;
  for (const auto& m : r.per_species)
    if (const auto x = m.*member) v.push_back(*x);
  return v;
}

}  // namespace

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream&) {
  if (a.glm == a.external_scores.has_value()) throw ConfigError("compare: give exactly one of --glm or --external-scores");
  const auto cfg = maybe_config(a.config);
  if (a.glm && !cfg) throw ConfigError("compare: --glm needs --config to locate the training data");
  const auto bundle = ModelBundle::load(a.model);
  const auto eval_table = data::load_community(a.eval);

  std::optional<fs::path> cov_path = a.covariates;
  if (!cov_path && cfg) cov_path = cfg->data.covariates;
  if (!cov_path) throw ConfigError("compare: evaluation covariates needed (--covariates or --config)");
  data::LoadOptions lo;
  lo.allow_unknown_levels = true;
  const auto cov = data::load_covariates(*cov_path, bundle.preprocessor.schema(), lo);
  const Eigen::MatrixXd raw_eval = take_rows(cov.values, locate(eval_table.site_ids, cov.site_ids, cov_path->generic_string()));

  std::optional<csv::Table> ext;
  if (a.external_scores) ext = csv::read(*a.external_scores);

  // Species present in the model, the evaluation file and the external scores.
  const auto model_idx = index_by_name(bundle.species_names);
  std::set<std::string> ext_species;
  if (ext) ext_species.insert(ext->header.begin(), ext->header.end());
  std::vector<std::string> species;
  std::vector<std::size_t> model_cols, eval_cols;
  for (std::size_t k = 0; k < eval_table.species_names.size(); ++k) {
    const auto& name = eval_table.species_names[k];
    const auto it = model_idx.find(name);
    if (it == model_idx.end() || (ext && !ext_species.count(name))) continue;
    species.push_back(name);
    model_cols.push_back(it->second);
    eval_cols.push_back(k);
  }
  if (species.empty()) throw ValidationError("compare: no species shared by the model and the evaluation file");
  const Eigen::MatrixXd labels = take_cols(eval_table.values, eval_cols);

  std::vector<ScoredModel> models;
  {
    ScoredModel m{"MTEC", take_cols(bundle.predict_raw(raw_eval), model_cols), {}};
    for (auto c : model_cols) m.thresholds.push_back(bundle.metadata.thresholds.empty() ? 0.5 : bundle.metadata.thresholds.at(c));
    models.push_back(std::move(m));
  }

  std::optional<data::Dataset> train_data;
  if (a.glm) train_data = data::load_dataset(cfg->data.community, cfg->data.covariates, cfg->data.schema);
  if (a.dry_run) {
    out << "compare: inputs valid (" << eval_table.site_ids.size() << " evaluation sites, " << species.size()
        << " shared species); nothing written\n";
    return 0;
  }

  if (a.glm) {
    const auto& d = *train_data;
    const auto data_cols = locate(species, d.species_names, "the training community");
    const Eigen::MatrixXd y = take_cols(d.community, data_cols);
    const Eigen::MatrixXd features = bundle.preprocessor.transform(d.covariates);
    std::vector<std::size_t> train_rows = locate(bundle.metadata.train_sites, d.site_ids, "the training data");
    std::vector<std::size_t> valid_rows = locate(bundle.metadata.valid_sites, d.site_ids, "the training data");
    baseline::GlmSettings gs;
    gs.link = parse_link(cfg->baseline.link);
    gs.lambda_lasso = cfg->baseline.lambda_lasso;
    gs.lambda_ridge = cfg->baseline.lambda_ridge;
    gs.max_iterations = cfg->baseline.max_iterations;
    const auto glms = baseline::fit_all(features, y, train_rows, gs);
    ScoredModel m{"GLM", baseline::stack(glms, bundle.preprocessor.transform(raw_eval)), {}};
    if (valid_rows.empty()) valid_rows = train_rows;
    const Eigen::MatrixXd vs = baseline::stack(glms, take_rows(features, valid_rows));
    m.thresholds = select_thresholds(vs, take_rows(y, valid_rows));
    models.push_back(std::move(m));
  } else {
    const auto& t = *ext;
    const int id_col = t.column("site_id");
    if (id_col < 0) throw SchemaError(a.external_scores->string() + ": missing site_id column");
    std::vector<std::string> ids;
    for (const auto& row : t.rows) ids.push_back(row.at(static_cast<std::size_t>(id_col)));
    const auto rows = locate(eval_table.site_ids, ids, a.external_scores->generic_string());
    ScoredModel m{a.external_name, Eigen::MatrixXd(labels.rows(), labels.cols()),
                  std::vector<double>(species.size(), a.external_threshold)};
    for (std::size_t s = 0; s < species.size(); ++s) {
      const auto col = static_cast<std::size_t>(t.column(species[s]));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& cell = t.rows[rows[i]].at(col);
        try {
          m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = std::stod(cell);
        } catch (const std::exception&) {
          throw ValidationError(a.external_scores->string() + ":" + std::to_string(t.lines[rows[i]]) + ": column '" +
                                species[s] + "' holds a non-numeric score '" + cell + "'");
        }
      }
    }
    models.push_back(std::move(m));
  }

  std::vector<eval::MetricReport> reports;
  for (const auto& m : models) {
    reports.push_back(a.presence_only ? eval::evaluate_presence_only(m.name, m.scores, labels, species, m.thresholds)
                                      : eval::evaluate(m.name, m.scores, labels, species));
  }

  const fs::path out_dir = a.out ? *a.out : fs::path("compare_out");
  write_text(out_dir / "per_species.csv", per_species_csv(reports));
  write_text(out_dir / "summary.csv", summary_csv(reports));

  std::string wilcoxon = join_csv({"metric", "model_a", "model_b", "n_a", "n_b", "u", "z", "p_value", "small_sample"});
  nlohmann::json tests = nlohmann::json::array();
  const std::pair<const char*, std::optional<double> eval::SpeciesMetrics::*> metrics[] = {
      {"tss", &eval::SpeciesMetrics::tss}, {"roc_auc", &eval::SpeciesMetrics::auc}, {"recall", &eval::SpeciesMetrics::recall}};
  for (const auto& [metric, member] : metrics) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      for (std::size_t j = i + 1; j < reports.size(); ++j) {
        const auto x = defined(reports[i], member), y = defined(reports[j], member);
        if (x.empty() || y.empty()) continue;
        const auto r = eval::wilcoxon_rank_sum(x, y);
        wilcoxon += join_csv({metric, reports[i].model_name, reports[j].model_name, std::to_string(x.size()),
                              std::to_string(y.size()), csv::format_number(r.u, 1), csv::format_number(r.z, 6),
                              csv::format_number(r.p_value, 6), r.small_sample ? "true" : "false"});
        tests.push_back({{"metric", metric},
                         {"model_a", reports[i].model_name},
                         {"model_b", reports[j].model_name},
                         {"u", r.u},
                         {"z", r.z},
                         {"p_value", r.p_value},
                         {"small_sample", r.small_sample}});
      }
    }
  }
  write_text(out_dir / "wilcoxon.csv", wilcoxon);

  nlohmann::json summary;
  summary["presence_only"] = a.presence_only;
  summary["evaluation_sites"] = eval_table.site_ids.size();
  summary["species"] = species;
  for (const auto& r : reports) summary["models"][r.model_name] = summary_json(r);
  summary["wilcoxon"] = tests;
  write_text(out_dir / "compare.json", summary.dump(2) + "\n");

  out << "compare: " << species.size() << " species; wrote per_species.csv, summary.csv, wilcoxon.csv, compare.json to "
      << out_dir.generic_string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- explain

int cmd_explain(const ExplainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.exact && a.samples) throw ConfigError("explain: --exact and --samples are exclusive");
  const auto cfg = maybe_config(a.config);
  const auto bundle = ModelBundle::load(a.model);
  std::optional<fs::path> cov_path = a.covariates;
  if (!cov_path && cfg) cov_path = cfg->data.covariates;
  if (!cov_path) throw ConfigError("explain: covariates needed (--covariates or --config)");
  data::LoadOptions lo;
  lo.allow_unknown_levels = true;
  const auto table = data::load_covariates(*cov_path, bundle.preprocessor.schema(), lo);
  std::optional<std::map<std::string, explain::Coordinates>> coords;
  if (cfg && cfg->data.coordinates) coords = load_coordinates(*cfg->data.coordinates);

  const ShapSettings shap_cfg = cfg ? cfg->shap : ShapSettings{};
  const int background_size = a.background.value_or(shap_cfg.background);
  const int max_sites = a.max_sites.value_or(shap_cfg.max_sites);
  if (background_size < 1) throw ConfigError("--background must be >= 1");
  if (max_sites < 0) throw ConfigError("--max-sites must be >= 0");
  if (a.samples && *a.samples < 2) throw ConfigError("--samples must be >= 2");

  explain::ShapOptions opts;
  opts.n_samples = a.samples.value_or(shap_cfg.samples);
  if (a.exact) {
    opts.mode = explain::ShapMode::exact;
  } else if (a.samples) {
    opts.mode = explain::ShapMode::sampled;
  } else {
    opts.mode = shap_cfg.mode == "exact" ? explain::ShapMode::exact
                : shap_cfg.mode == "sampled" ? explain::ShapMode::sampled
                                             : explain::ShapMode::automatic;
  }
  const std::uint64_t seed = pick_seed(a, cfg);
  opts.seed = derive(seed, kShap);

  const std::size_t n_sites =
      max_sites > 0 ? std::min<std::size_t>(static_cast<std::size_t>(max_sites), table.site_ids.size()) : table.site_ids.size();
  if (n_sites == 0) throw ValidationError("explain: covariates file has no sites");

  // Background: a seeded draw from the training sites when they are present.
  std::vector<std::size_t> pool;
  {
    const auto idx = index_by_name(table.site_ids);
    for (const auto& s : bundle.metadata.train_sites) {
      if (const auto it = idx.find(s); it != idx.end()) pool.push_back(it->second);
    }
    if (pool.empty()) {
      pool.resize(table.site_ids.size());
      for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    }
    std::sort(pool.begin(), pool.end());
    Rng rng(derive(seed, kBackground));
    rng.shuffle(pool);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(background_size)));
    std::sort(pool.begin(), pool.end());
  }

  if (a.dry_run) {
    out << "explain: inputs valid (" << n_sites << " sites, " << pool.size() << " background rows, "
        << bundle.preprocessor.schema().size() << " features); nothing written\n";
    return 0;
  }

  std::vector<std::size_t> site_rows(n_sites);
  for (std::size_t k = 0; k < n_sites; ++k) site_rows[k] = k;
  const Eigen::MatrixXd sites = take_rows(table.values, site_rows);
  const Eigen::MatrixXd background = take_rows(table.values, pool);
  const explain::PredictFn fn = [&](const Eigen::MatrixXd& raw) { return bundle.predict_raw(raw); };

  auto attr = explain::shap_explain(fn, sites, background, opts);
  attr.species_names = bundle.species_names;
  attr.site_ids.assign(table.site_ids.begin(), table.site_ids.begin() + static_cast<std::ptrdiff_t>(n_sites));
  for (const auto& col : bundle.preprocessor.schema().columns()) {
    attr.feature_names.push_back(col.name);
    attr.feature_groups[col.name] = col.group.empty() ? col.name : col.group;
  }

  const fs::path out_dir = a.out ? *a.out : a.model.parent_path() / "attribution";
  attr.save(out_dir);
  write_text(out_dir / "global_importance.csv",
             matrix_csv("species", attr.species_names, attr.feature_names, explain::global_importance(attr)));
  const auto groups = explain::group_importance(attr);
  write_text(out_dir / "group_importance.csv", matrix_csv("species", attr.species_names, groups.groups, groups.values));
  if (coords) {
    std::size_t skipped = 0;
    for (int s = 0; s < attr.n_species(); ++s) {
      const auto e = explain::export_local_attribution(attr, s, *coords);
      skipped = e.skipped_sites;
      std::ostringstream text;
      explain::write_local_csv(text, e);
      write_text(out_dir / "local" / (attr.species_names[static_cast<std::size_t>(s)] + ".csv"), text.str());
    }
    if (skipped) err << "explain: warning: " << skipped << " sites lack coordinates and were left out of local exports\n";
  }
  out << "explain: attributed " << attr.n_sites() << " sites x " << attr.n_features() << " features for "
      << attr.n_species() << " species; wrote " << out_dir.generic_string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- cluster

int cmd_cluster(const ClusterArgs& a, std::ostream& out, std::ostream&) {
  if (a.kmax < 1) throw ConfigError("--kmax must be >= 1");
  if (a.references < 10) throw ConfigError("--references must be >= 10");
  const auto attr = explain::ShapAttribution::load(a.attribution);
  const auto rm = groups::response_matrix(attr, a.group);
  if (a.dry_run) {
    out << "cluster: inputs valid (" << rm.species.size() << " species, group '" << a.group << "' with "
        << rm.features.size() << " features); nothing written\n";
    return 0;
  }
  groups::ClusterOptions opts;
  opts.k_max = a.kmax;
  opts.n_references = a.references;
  opts.seed = a.seed.value_or(0);
  opts.consensus = a.consensus;
  opts.standardize = a.standardize;
  const auto res = groups::build_response_groups(attr, a.group, opts);

  const fs::path out_dir = a.out ? *a.out : a.attribution / ("cluster_" + a.group);
  write_text(out_dir / "cluster.json", res.to_json().dump(2) + "\n");
  std::vector<std::string> header{"species", "cluster"};
  for (Eigen::Index c = 0; c < res.pca.scores.cols(); ++c) header.push_back("pc" + std::to_string(c + 1));
  std::string text = join_csv(header);
  for (std::size_t s = 0; s < res.species.size(); ++s) {
    std::vector<std::string> row{res.species[s], std::to_string(res.labels[s])};
    for (Eigen::Index c = 0; c < res.pca.scores.cols(); ++c)
      row.push_back(csv::format_number(res.pca.scores(static_cast<Eigen::Index>(s), c), 8));
    text += join_csv(row);
  }
  write_text(out_dir / "clusters.csv", text);
  out << "cluster: group '" << a.group << "' k=" << res.k << " (gap " << res.gap_k << ", elbow "
      << (res.elbow_k ? std::to_string(*res.elbow_k) : std::string("n/a")) << "); wrote " << out_dir.generic_string()
      << "\n";
  return 0;
}

// ---------------------------------------------------------------- network

int cmd_network(const NetworkArgs& a, std::ostream& out, std::ostream&) {
  if (!a.lambda_grid.empty() && !a.ebic) throw ConfigError("network: --lambda-grid requires --ebic");
  if (a.ebic && a.lambda_grid.empty()) throw ConfigError("network: --ebic requires --lambda-grid");
  const auto cfg = maybe_config(a.config);
  const auto bundle = ModelBundle::load(a.model);
  std::optional<fs::path> path = a.community;
  if (!path && cfg) path = cfg->data.community;
  if (!path) throw ConfigError("network: community data needed (--community or --config)");
  const auto table = data::load_community(*path);
  std::vector<std::size_t> cols;
  {
    const auto idx = index_by_name(table.species_names);
    for (const auto& s : bundle.species_names) {
      const auto it = idx.find(s);
      if (it == idx.end()) throw AlignmentError("species '" + s + "' missing from " + path->generic_string());
      cols.push_back(it->second);
    }
  }
  const Eigen::MatrixXd y = take_cols(table.values, cols);

  std::vector<double> lambdas = a.lambda_grid;
  if (lambdas.empty()) lambdas.push_back(a.lambda.value_or(cfg ? cfg->network.lambda : 0.01));
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("network: lambda values must be finite and >= 0");
  }
  if (a.dry_run) {
    out << "network: inputs valid (" << y.rows() << " sites, " << y.cols() << " species, " << lambdas.size()
        << " lambda values); nothing written\n";
    return 0;
  }
  assoc::GlassoOptions go;
  if (cfg) {
    go.max_iter = cfg->network.max_iter;
    go.tol = cfg->network.tol;
  }
  const auto stats = assoc::posterior_stats(bundle.model, y);
  const Eigen::MatrixXd sigma_r = assoc::residual_covariance(stats, bundle.model.params().loadings);
  const auto net = assoc::build_network(sigma_r, lambdas, static_cast<double>(y.rows()), go);

  const fs::path out_dir = a.out ? *a.out : a.model.parent_path() / "network";
  auto summary = net.summary_json(bundle.species_names);
  summary["sites"] = y.rows();
  write_text(out_dir / "network.json", summary.dump(2) + "\n");
  std::string edges = join_csv({"species_a", "species_b", "partial_correlation"});
  for (const auto& e : net.partial.edges) {
    edges += join_csv({bundle.species_names[static_cast<std::size_t>(e.i)], bundle.species_names[static_cast<std::size_t>(e.j)],
                       csv::format_number(e.strength, 8)});
  }
  write_text(out_dir / "edges.csv", edges);
  write_text(out_dir / "partial_correlations.csv",
             matrix_csv("species", bundle.species_names, bundle.species_names, net.partial.rho));
  write_text(out_dir / "residual_covariance.csv",
             matrix_csv("species", bundle.species_names, bundle.species_names, sigma_r));
  out << "network: lambda " << net.lambda << ", " << net.partial.edges.size() << " edges, " << net.n_components
      << " components; wrote " << out_dir.generic_string() << "\n";
  return 0;
}

}  // namespace mtec::cli
