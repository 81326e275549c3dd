#include "mtec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtec/csv.hpp"
#include "mtec/error.hpp"

namespace mtec::eval {

namespace {

void check_sizes(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ShapeError("metric: scores and labels differ in length");
}

// Midranks (1-based) of `values`.
std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t k = i;
    while (k + 1 < idx.size() && values[idx[k + 1]] == values[idx[i]]) ++k;
    const double r = 0.5 * static_cast<double>(i + k) + 1.0;
    for (std::size_t t = i; t <= k; ++t) ranks[idx[t]] = r;
    i = k + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> labels) {
  check_sizes(scores, labels);
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0) {
      rank_sum += ranks[i];
      ++pos;
    }
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double np = static_cast<double>(pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(neg));
}

std::optional<double> tss(std::span<const double> scores, std::span<const double> labels, double threshold) {
  check_sizes(scores, labels);
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1.0) (predicted ? tp : fn)++;
    else (predicted ? fp : tn)++;
  }
  if (tp + fn == 0 || tn + fp == 0) return std::nullopt;
  const double sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
  return sens + spec - 1.0;
}

std::optional<ThresholdChoice> select_threshold(std::span<const double> scores, std::span<const double> labels) {
  check_sizes(scores, labels);
  std::size_t pos = 0;
  for (double l : labels) pos += l == 1.0 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  // Sweep thresholds in increasing order over sorted scores. At candidate t,
  // positives predicted = those with score >= t.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Threshold at the smallest score predicts presence everywhere: TSS 0.
  ThresholdChoice best{scores[idx.front()], 0.0};
  std::size_t fn = 0, tn = 0;  // below threshold
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t k = i;
    while (k < idx.size() && scores[idx[k]] == scores[idx[i]]) {
      if (labels[idx[k]] == 1.0) ++fn;
      else ++tn;
      ++k;
    }
    if (k == idx.size()) break;
    const double t = 0.5 * (scores[idx[i]] + scores[idx[k]]);
    const double value = static_cast<double>(pos - fn) / static_cast<double>(pos) +
                         static_cast<double>(tn) / static_cast<double>(neg) - 1.0;
    if (value > best.tss) best = {t, value};
    i = k;
  }
  return best;
}

std::optional<double> recall_presence_only(std::span<const double> scores_at_occurrences, double threshold) {
  if (scores_at_occurrences.empty()) return std::nullopt;
  std::size_t hit = 0;
  for (double s : scores_at_occurrences) hit += s >= threshold ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(scores_at_occurrences.size());
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("wilcoxon_rank_sum: both samples need at least one value");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = midranks(all);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double ra = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ra += ranks[i];

  RankSumResult out;
  out.u = ra - na * (na + 1.0) / 2.0;
  out.small_sample = a.size() < 8 || b.size() < 8;

  // Tie correction: sum over tie groups of (t^3 - t).
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t k = i;
    while (k < sorted.size() && sorted[k] == sorted[i]) ++k;
    const double t = static_cast<double>(k - i);
    ties += t * t * t - t;
    i = k;
  }
  const double n = na + nb;
  const double mean = na * nb / 2.0;
  const double var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (!(var > 0.0)) {
    out.z = 0.0;
    out.p_value = 1.0;
    return out;
  }
  const double diff = out.u - mean;
  const double corrected = std::max(0.0, std::abs(diff) - 0.5);
  out.z = std::copysign(corrected / std::sqrt(var), diff);
  out.p_value = std::min(1.0, std::erfc(std::abs(out.z) / std::sqrt(2.0)));
  return out;
}

Summary summarize(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values)
    if (x && std::isfinite(*x)) v.push_back(*x);
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  s.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  if (v.size() >= 2) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  } else {
    s.sd = 0.0;
  }
  return s;
}

std::string format_summary(const Summary& s, int precision) {
  if (!s.median) return "n/a";
  return csv::format_number(*s.median, precision) + " ± " + csv::format_number(s.sd.value_or(0.0), precision);
}

Summary MetricReport::tss() const {
  std::vector<std::optional<double>> v;
  for (const auto& s : per_species) v.push_back(s.tss);
  return summarize(v);
}

Summary MetricReport::auc() const {
  std::vector<std::optional<double>> v;
  for (const auto& s : per_species) v.push_back(s.auc);
  return summarize(v);
}

Summary MetricReport::recall() const {
  std::vector<std::optional<double>> v;
  for (const auto& s : per_species) v.push_back(s.recall);
  return summarize(v);
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

MetricReport evaluate(const std::string& model_name, const Eigen::MatrixXd& scores,
                      const Eigen::MatrixXd& labels, const std::vector<std::string>& species,
                      const std::vector<double>& thresholds) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ShapeError("evaluate: scores and labels differ in shape");
  }
  if (static_cast<Eigen::Index>(species.size()) != scores.cols()) throw ShapeError("evaluate: one name per species");
  if (!thresholds.empty() && static_cast<Eigen::Index>(thresholds.size()) != scores.cols()) {
    throw ShapeError("evaluate: one threshold per species");
  }
  MetricReport report;
  report.model_name = model_name;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    SpeciesMetrics m;
    m.species = species[static_cast<std::size_t>(j)];
    m.prevalence = labels.col(j).mean();
    const auto sc = column(scores, j);
    const auto lb = column(labels, j);
    // Columns holding NaN come from models that could not be fitted.
    const bool defined = std::all_of(sc.begin(), sc.end(), [](double v) { return std::isfinite(v); });
    if (defined) {
      m.auc = roc_auc(sc, lb);
      if (thresholds.empty()) {
        if (auto c = select_threshold(sc, lb)) {
          m.threshold = c->threshold;
          m.tss = c->tss;
        }
      } else {
        m.threshold = thresholds[static_cast<std::size_t>(j)];
        m.tss = tss(sc, lb, m.threshold);
      }
      if (m.tss) {
        std::vector<double> occ;
        for (std::size_t i = 0; i < sc.size(); ++i)
          if (lb[i] == 1.0) occ.push_back(sc[i]);
        m.recall = recall_presence_only(occ, m.threshold);
      }
    }
    report.per_species.push_back(std::move(m));
  }
  return report;
}

MetricReport evaluate_presence_only(const std::string& model_name, const Eigen::MatrixXd& scores,
                                    const Eigen::MatrixXd& labels, const std::vector<std::string>& species,
                                    const std::vector<double>& thresholds) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ShapeError("evaluate: scores and labels differ in shape");
  }
  if (static_cast<Eigen::Index>(thresholds.size()) != scores.cols()) {
    throw ShapeError("evaluate_presence_only: one threshold per species");
  }
  MetricReport report;
  report.model_name = model_name;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    SpeciesMetrics m;
    m.species = species[static_cast<std::size_t>(j)];
    m.prevalence = labels.col(j).mean();
    m.threshold = thresholds[static_cast<std::size_t>(j)];
    std::vector<double> occ;
    bool defined = true;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      if (labels(i, j) == 1.0) {
        occ.push_back(scores(i, j));
        defined = defined && std::isfinite(scores(i, j));
      }
    }
    if (defined) m.recall = recall_presence_only(occ, m.threshold);
    report.per_species.push_back(std::move(m));
  }
  return report;
}

}  // namespace mtec::eval
