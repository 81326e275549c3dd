#include "mtec/cli/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <ostream>

#include "commands.hpp"
#include "mtec/cli/run_config.hpp"
#include "mtec/error.hpp"

namespace mtec::cli {

namespace {

void add_common(CLI::App* cmd, CommonArgs& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Seed for every random draw of this command (default: config seed, else 0)");
  cmd->add_option("--out", c.out, out_help);
  cmd->add_flag("--dry-run", c.dry_run, "Validate inputs and configuration, compute and write nothing");
}

// Maps exceptions to the exit-code contract. Input problems are 2, training
// aborts 3; anything else is 3 for fit and 4 for the downstream commands.
int guarded(const std::string& module, int fallback, std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << module << ": error: " << e.what() << '\n';
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << module << ": error: malformed JSON input: " << e.what() << '\n';
    return kInputError;
  } catch (const TrainingError& e) {
    err << module << ": training aborted: " << e.what() << '\n';
    return kTrainingError;
  } catch (const std::exception& e) {
    err << module << ": error: " << e.what() << '\n';
    return fallback;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mtec: multi-taxa joint species distribution modelling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Train a model from a JSON run configuration");
  fit_cmd->add_option("--config", fit.config, "Run configuration JSON")->required();
  fit_cmd->add_flag("--cv5x2", fit.cv5x2, "Run 5x2 cross-validation (and select among --reg-grid values)");
  fit_cmd->add_option("--reg-grid", fit.reg_grid, "Comma-separated penalty values tried for both lasso and ridge")
      ->delimiter(',');
  add_common(fit_cmd, fit, "Output directory (default: config output_dir)");
  fit_cmd->footer(defaults_text());

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Habitat suitability for new covariates");
  pred_cmd->add_option("--model", pred.model, "Model JSON written by fit")->required();
  pred_cmd->add_option("--covariates", pred.covariates, "Covariates CSV (site_id + schema columns)")->required();
  pred_cmd->add_option("--sample-prior", pred.sample_prior,
                       "Average over N latent draws from the prior instead of using the prior mean")
      ->capture_default_str();
  add_common(pred_cmd, pred, "Output CSV (default: standard output)");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare the model against single-species baselines");
  cmp_cmd->add_option("--model", cmp.model, "Model JSON written by fit")->required();
  auto* glm_flag = cmp_cmd->add_flag("--glm", cmp.glm, "Fit stacked GLMs on the model's training sites");
  auto* ext_opt = cmp_cmd->add_option("--external-scores", cmp.external_scores, "CSV of site_id x species scores");
  glm_flag->excludes(ext_opt);
  cmp_cmd->add_option("--external-name", cmp.external_name, "Label for external scores")->capture_default_str();
  cmp_cmd->add_option("--external-threshold", cmp.external_threshold,
                      "Presence threshold for external scores in presence-only mode")
      ->capture_default_str();
  cmp_cmd->add_option("--eval", cmp.eval, "Evaluation community CSV (site_id + 0/1 species columns)")->required();
  cmp_cmd->add_flag("--presence-only", cmp.presence_only, "Evaluation file holds presences only: report recall");
  cmp_cmd->add_option("--config", cmp.config, "Run configuration (training data for --glm, covariates)");
  cmp_cmd->add_option("--covariates", cmp.covariates, "Covariates CSV for the evaluation sites");
  add_common(cmp_cmd, cmp, "Output directory (default: compare_out)");

  ExplainArgs exp;
  auto* exp_cmd = app.add_subcommand("explain", "Kernel SHAP attribution of predictions to covariates");
  exp_cmd->add_option("--model", exp.model, "Model JSON written by fit")->required();
  auto* exact_flag = exp_cmd->add_flag("--exact", exp.exact, "Enumerate every coalition");
  auto* samples_opt = exp_cmd->add_option("--samples", exp.samples, "Sampled coalitions per site (default 2048)");
  exact_flag->excludes(samples_opt);
  exp_cmd->add_option("--background", exp.background, "Background rows drawn from training sites (default 50)");
  exp_cmd->add_option("--max-sites", exp.max_sites, "Explain only the first N sites (default: all)");
  exp_cmd->add_option("--config", exp.config, "Run configuration (covariates, coordinates, SHAP defaults)");
  exp_cmd->add_option("--covariates", exp.covariates, "Covariates CSV of the sites to explain");
  add_common(exp_cmd, exp, "Output directory (default: <model dir>/attribution)");

  ClusterArgs clu;
  auto* clu_cmd = app.add_subcommand("cluster", "Group species by their responses to one feature group");
  clu_cmd->add_option("--attribution", clu.attribution, "Directory written by explain")->required();
  clu_cmd->add_option("--group", clu.group, "Feature group tag from the schema")->required();
  clu_cmd->add_option("--kmax", clu.kmax, "Largest number of clusters considered")->capture_default_str();
  clu_cmd->add_option("--references", clu.references, "Reference datasets for the GAP statistic")
      ->capture_default_str();
  clu_cmd->add_flag("--consensus", clu.consensus, "Use the rounded mean of the GAP and elbow choices");
  clu_cmd->add_flag("--standardize", clu.standardize, "Scale response columns to unit variance");
  add_common(clu_cmd, clu, "Output directory (default: <attribution>/cluster_<group>)");

  NetworkArgs net;
  auto* net_cmd = app.add_subcommand("network", "Species association network from the latent factors");
  net_cmd->add_option("--model", net.model, "Model JSON written by fit")->required();
  auto* lambda_opt = net_cmd->add_option("--lambda", net.lambda, "Graphical lasso penalty (default 0.01)");
  auto* grid_opt = net_cmd->add_option("--lambda-grid", net.lambda_grid, "Comma-separated penalties")->delimiter(',');
  lambda_opt->excludes(grid_opt);
  net_cmd->add_flag("--ebic", net.ebic, "Select the grid penalty by extended BIC (gamma 0.5)");
  net_cmd->add_option("--config", net.config, "Run configuration (community data, glasso settings)");
  net_cmd->add_option("--community", net.community, "Community CSV used for the posterior statistics");
  add_common(net_cmd, net, "Output directory (default: <model dir>/network)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "mtec: " << e.what() << '\n';
    return kInputError;
  }

  if (*fit_cmd) return guarded("fit", kTrainingError, err, [&] { return cmd_fit(fit, out, err); });
  if (*pred_cmd) return guarded("predict", kInputError, err, [&] { return cmd_predict(pred, out, err); });
  if (*cmp_cmd) return guarded("compare", kDownstreamError, err, [&] { return cmd_compare(cmp, out, err); });
  if (*exp_cmd) return guarded("explain", kDownstreamError, err, [&] { return cmd_explain(exp, out, err); });
  if (*clu_cmd) return guarded("cluster", kDownstreamError, err, [&] { return cmd_cluster(clu, out, err); });
  if (*net_cmd) return guarded("network", kDownstreamError, err, [&] { return cmd_network(net, out, err); });
  return kInputError;
}

}  // namespace mtec::cli
