#include "mtec/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "mtec/csv.hpp"
#include "mtec/error.hpp"
#include "mtec/random.hpp"

namespace mtec::explain {

ShapAttribution::ShapAttribution(int n_species, int n_sites, int n_features)
    : n_species_(n_species), n_sites_(n_sites), n_features_(n_features),
      values_(static_cast<std::size_t>(n_species) * n_sites * n_features, 0.0) {
  base_values = Eigen::VectorXd::Zero(n_species);
}

Eigen::MatrixXd ShapAttribution::species_matrix(int species) const {
  Eigen::MatrixXd m(n_sites_, n_features_);
  for (int i = 0; i < n_sites_; ++i)
    for (int p = 0; p < n_features_; ++p) m(i, p) = (*this)(species, i, p);
  return m;
}

namespace {

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Coalition values v(S) for every row of `masks` (1 = feature taken from x).
// Returns coalitions x species.
Eigen::MatrixXd coalition_values(const PredictFn& model, const Eigen::RowVectorXd& x,
                                 const Eigen::MatrixXd& background, const Eigen::MatrixXd& masks) {
  const Eigen::Index nb = background.rows();
  const Eigen::Index nc = masks.rows();
  // Evaluate in chunks so the synthetic matrix stays bounded.
  const Eigen::Index chunk = std::max<Eigen::Index>(1, 65536 / std::max<Eigen::Index>(nb, 1));
  Eigen::MatrixXd values;
  for (Eigen::Index start = 0; start < nc; start += chunk) {
    const Eigen::Index len = std::min(chunk, nc - start);
    Eigen::MatrixXd synth(len * nb, x.size());
    for (Eigen::Index c = 0; c < len; ++c) {
      for (Eigen::Index b = 0; b < nb; ++b) {
        auto row = synth.row(c * nb + b);
        row = background.row(b);
        for (Eigen::Index p = 0; p < x.size(); ++p)
          if (masks(start + c, p) != 0.0) row(p) = x(p);
      }
    }
    const Eigen::MatrixXd pred = model(synth);
    if (values.size() == 0) values.resize(nc, pred.cols());
    for (Eigen::Index c = 0; c < len; ++c) {
      values.row(start + c) = pred.middleRows(c * nb, nb).colwise().mean();
    }
  }
  return values;
}

// Constrained weighted least squares: min sum_s w_s (y_s - z_s.phi)^2 with
// sum(phi) = total. Eliminates the last coordinate.
Eigen::VectorXd solve_constrained(const Eigen::MatrixXd& z, const Eigen::VectorXd& w,
                                  const Eigen::VectorXd& y, double total) {
  const Eigen::Index p = z.cols();
  if (p == 1) return Eigen::VectorXd::Constant(1, total);
  Eigen::MatrixXd a(z.rows(), p - 1);
  for (Eigen::Index k = 0; k < p - 1; ++k) a.col(k) = z.col(k) - z.col(p - 1);
  const Eigen::VectorXd rhs = y - z.col(p - 1) * total;
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd aw = sw.asDiagonal() * a;
  const Eigen::VectorXd bw = sw.cwiseProduct(rhs);
  const Eigen::VectorXd head = aw.colPivHouseholderQr().solve(bw);
  Eigen::VectorXd phi(p);
  phi.head(p - 1) = head;
  phi(p - 1) = total - head.sum();
  return phi;
}

}  // namespace

double shapley_kernel_weight(int n_features, int coalition_size) {
  if (coalition_size <= 0 || coalition_size >= n_features) return 0.0;
  return static_cast<double>(n_features - 1) /
         (binomial(n_features, coalition_size) * coalition_size * (n_features - coalition_size));
}

ShapAttribution shap_explain(const PredictFn& model, const Eigen::MatrixXd& sites,
                             const Eigen::MatrixXd& background, const ShapOptions& options) {
  if (background.rows() == 0) throw ConfigError("shap: background set is empty");
  const int p = static_cast<int>(sites.cols());
  if (background.cols() != p) throw ShapeError("shap: background width differs from site width");
  if (p == 0) throw ConfigError("shap: no features");

  const bool exact = options.mode == ShapMode::exact ||
                     (options.mode == ShapMode::automatic && p <= options.exact_max_features);
  if (exact && p > 24) throw ConfigError("shap: exact enumeration is limited to 24 features");
  if (!exact && options.n_samples < p + 2) {
    throw ConfigError("shap: n_samples must be at least P + 2 = " + std::to_string(p + 2));
  }

  // Coalition design shared by every site (interior coalitions only; the
  // empty and full coalitions enter through the constraint).
  Eigen::MatrixXd masks;
  Eigen::VectorXd weights;
  if (p > 1) {
    if (exact) {
      const Eigen::Index count = (Eigen::Index{1} << p) - 2;
      masks.resize(count, p);
      weights.resize(count);
      for (Eigen::Index s = 1; s <= count; ++s) {
        int size = 0;
        for (int k = 0; k < p; ++k) {
          const bool in = (s >> k) & 1;
          masks(s - 1, k) = in ? 1.0 : 0.0;
          size += in;
        }
        weights(s - 1) = shapley_kernel_weight(p, size);
      }
    } else {
      Rng rng(options.seed);
      // Size distribution: total kernel mass of each size.
      std::vector<double> cdf(static_cast<std::size_t>(p - 1));
      double acc = 0.0;
      for (int s = 1; s < p; ++s) {
        acc += 1.0 / (static_cast<double>(s) * (p - s));
        cdf[static_cast<std::size_t>(s - 1)] = acc;
      }
      const int pairs = (options.n_samples + 1) / 2;
      masks = Eigen::MatrixXd::Zero(2 * pairs, p);
      weights = Eigen::VectorXd::Ones(2 * pairs);
      std::vector<int> perm(static_cast<std::size_t>(p));
      for (int t = 0; t < pairs; ++t) {
        const double u = rng.uniform() * acc;
        const int size = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
        std::iota(perm.begin(), perm.end(), 0);
        for (int k = 0; k < size; ++k) {
          const int pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(p - k)));
          std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(pick)]);
          masks(2 * t, perm[static_cast<std::size_t>(k)]) = 1.0;
        }
        // Paired complement.
        masks.row(2 * t + 1) = (1.0 - masks.row(2 * t).array()).matrix();
      }
    }
  }

  const Eigen::MatrixXd base_pred = model(background);
  const Eigen::VectorXd base = base_pred.colwise().mean().transpose();
  const int m = static_cast<int>(base.size());
  ShapAttribution out(m, static_cast<int>(sites.rows()), p);
  out.base_values = base;

  const Eigen::MatrixXd full = model(sites);
  for (Eigen::Index i = 0; i < sites.rows(); ++i) {
    const Eigen::RowVectorXd x = sites.row(i);
    Eigen::MatrixXd v;
    if (p > 1) v = coalition_values(model, x, background, masks);
    for (int j = 0; j < m; ++j) {
      const double total = full(i, j) - base(j);
      Eigen::VectorXd phi;
      if (p == 1) {
        phi = Eigen::VectorXd::Constant(1, total);
      } else {
        phi = solve_constrained(masks, weights, v.col(j).array() - base(j), total);
      }
      for (int k = 0; k < p; ++k) out(j, static_cast<int>(i), k) = phi(k);
    }
  }
  return out;
}

Eigen::MatrixXd global_importance(const ShapAttribution& attr) {
  Eigen::MatrixXd imp = Eigen::MatrixXd::Zero(attr.n_species(), attr.n_features());
  if (attr.n_sites() == 0) return imp;
  for (int s = 0; s < attr.n_species(); ++s)
    for (int i = 0; i < attr.n_sites(); ++i)
      for (int p = 0; p < attr.n_features(); ++p) imp(s, p) += std::abs(attr(s, i, p));
  return imp / attr.n_sites();
}

GroupImportance group_importance(const ShapAttribution& attr) {
  std::vector<std::string> group_of(static_cast<std::size_t>(attr.n_features()));
  for (int p = 0; p < attr.n_features(); ++p) {
    const auto& name = attr.feature_names.at(static_cast<std::size_t>(p));
    const auto it = attr.feature_groups.find(name);
    if (it == attr.feature_groups.end() || it->second.empty()) {
      throw ConfigError("feature '" + name + "' is not assigned to a group");
    }
    group_of[static_cast<std::size_t>(p)] = it->second;
  }
  GroupImportance out;
  out.groups = group_of;
  std::sort(out.groups.begin(), out.groups.end());
  out.groups.erase(std::unique(out.groups.begin(), out.groups.end()), out.groups.end());
  const Eigen::MatrixXd imp = global_importance(attr);
  out.values = Eigen::MatrixXd::Zero(attr.n_species(), static_cast<Eigen::Index>(out.groups.size()));
  for (int p = 0; p < attr.n_features(); ++p) {
    const auto g = std::lower_bound(out.groups.begin(), out.groups.end(), group_of[static_cast<std::size_t>(p)]) -
                   out.groups.begin();
    out.values.col(g) += imp.col(p);
  }
  for (Eigen::Index s = 0; s < out.values.rows(); ++s) {
    const double total = out.values.row(s).sum();
    if (total > 0.0) out.values.row(s) /= total;
  }
  return out;
}

std::vector<int> importance_order(const Eigen::MatrixXd& importance) {
  const Eigen::VectorXd mean = importance.colwise().mean().transpose();
  std::vector<int> order(static_cast<std::size_t>(importance.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean(a) > mean(b); });
  return order;
}

LocalExport export_local_attribution(const ShapAttribution& attr, int species,
                                     const std::map<std::string, Coordinates>& coordinates) {
  if (species < 0 || species >= attr.n_species()) throw ConfigError("export: species index out of range");
  LocalExport out;
  for (int i = 0; i < attr.n_sites(); ++i) {
    const auto& id = attr.site_ids.at(static_cast<std::size_t>(i));
    const auto it = coordinates.find(id);
    if (it == coordinates.end()) {
      ++out.skipped_sites;
      continue;
    }
    for (int p = 0; p < attr.n_features(); ++p) {
      out.records.push_back({id, it->second.x, it->second.y, attr.feature_names.at(static_cast<std::size_t>(p)),
                             attr(species, i, p)});
    }
  }
  return out;
}

void write_local_csv(std::ostream& out, const LocalExport& e) {
  out << "site_id,x,y,feature,phi\n";
  for (const auto& r : e.records) {
    out << csv::escape(r.site_id) << ',' << full_precision(r.x) << ',' << full_precision(r.y) << ','
        << csv::escape(r.feature) << ',' << full_precision(r.phi) << '\n';
  }
}

void ShapAttribution::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "phi");
  nlohmann::json meta;
  meta["species"] = species_names;
  meta["sites"] = site_ids;
  meta["features"] = feature_names;
  meta["base_values"] = std::vector<double>(base_values.data(), base_values.data() + base_values.size());
  meta["feature_groups"] = feature_groups;
  nlohmann::json parts = nlohmann::json::array();
  for (int s = 0; s < n_species_; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "part-%04d.csv", s);
    parts.push_back(std::string("phi/") + name);
    std::ofstream out(dir / "phi" / name);
    if (!out) throw ValidationError("cannot write " + (dir / "phi" / name).string());
    out << "species,site_id,feature,phi\n";
    for (int i = 0; i < n_sites_; ++i)
      for (int p = 0; p < n_features_; ++p)
        out << csv::escape(species_names.at(static_cast<std::size_t>(s))) << ','
            << csv::escape(site_ids.at(static_cast<std::size_t>(i))) << ','
            << csv::escape(feature_names.at(static_cast<std::size_t>(p))) << ',' << full_precision((*this)(s, i, p))
            << '\n';
  }
  meta["partitions"] = parts;
  std::ofstream out(dir / "attribution.json");
  if (!out) throw ValidationError("cannot write " + (dir / "attribution.json").string());
  out << meta.dump(1) << '\n';
}

ShapAttribution ShapAttribution::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "attribution.json");
  if (!in) throw ValidationError("no attribution.json in " + dir.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("attribution.json: " + std::string(e.what()));
  }
  const auto species = meta.at("species").get<std::vector<std::string>>();
  const auto sites = meta.at("sites").get<std::vector<std::string>>();
  const auto features = meta.at("features").get<std::vector<std::string>>();
  ShapAttribution a(static_cast<int>(species.size()), static_cast<int>(sites.size()),
                    static_cast<int>(features.size()));
  a.species_names = species;
  a.site_ids = sites;
  a.feature_names = features;
  const auto base = meta.at("base_values").get<std::vector<double>>();
  a.base_values = Eigen::Map<const Eigen::VectorXd>(base.data(), static_cast<Eigen::Index>(base.size()));
  a.feature_groups = meta.at("feature_groups").get<std::map<std::string, std::string>>();
  std::map<std::string, int> sp, si, fe;
  for (std::size_t k = 0; k < species.size(); ++k) sp[species[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < sites.size(); ++k) si[sites[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < features.size(); ++k) fe[features[k]] = static_cast<int>(k);
  for (const auto& part : meta.at("partitions")) {
    const auto table = csv::read(dir / part.get<std::string>());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      if (row.size() != 4) throw ValidationError("attribution partition: expected 4 columns");
      const auto s = sp.find(row[0]);
      const auto i = si.find(row[1]);
      const auto p = fe.find(row[2]);
      if (s == sp.end() || i == si.end() || p == fe.end()) {
        throw ValidationError("attribution partition " + part.get<std::string>() + ":" +
                              std::to_string(table.lines[r]) + ": unknown key");
      }
      a(s->second, i->second, p->second) = std::strtod(row[3].c_str(), nullptr);
    }
  }
  return a;
}

}  // namespace mtec::explain
