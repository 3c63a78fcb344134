#include "hirrr/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hirrr/errors.hpp"
#include "hirrr/io.hpp"
#include "hirrr/metrics.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::VectorXd;

FactorDirection parse_direction(const std::string& name) {
  if (name == "risk") return FactorDirection::Risk;
  if (name == "protective") return FactorDirection::Protective;
  throw ConfigError("direction must be 'risk' or 'protective'");
}

std::vector<FactorRow> rank_factors(const std::vector<ModelParams>& fits, const std::vector<VectorXd>& feature_sds,
                                    FactorDirection direction, Index top_k,
                                    const std::vector<std::string>& feature_names) {
  if (fits.empty()) throw ArgumentError("rank_factors: no fits");
  if (feature_sds.size() != 1 && feature_sds.size() != fits.size()) {
    throw ArgumentError("rank_factors: need one feature_sd vector or one per fit");
  }
  const Index p = fits[0].A.rows();
  std::vector<VectorXd> coefs;
  for (std::size_t f = 0; f < fits.size(); ++f) {
    if (fits[f].A.rows() != p) throw ArgumentError("rank_factors: fits have different feature spaces");
    const VectorXd& sd = feature_sds[feature_sds.size() == 1 ? 0 : f];
    coefs.push_back(standardized_coefficients(fits[f], sd).col(0));
  }
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != p) {
    throw ArgumentError("rank_factors: feature_names length must equal p");
  }
  const auto m = static_cast<double>(fits.size());
  std::vector<FactorRow> rows;
  for (Index j = 0; j < p; ++j) {
    FactorRow r;
    r.feature = j;
    r.name = feature_names.empty() ? "x" + std::to_string(j + 1) : feature_names[static_cast<std::size_t>(j)];
    double s = 0.0;
    for (const auto& c : coefs) s += c(j);
    r.mean = s / m;
    double ss = 0.0;
    for (const auto& c : coefs) ss += (c(j) - r.mean) * (c(j) - r.mean);
    r.sd = fits.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [direction](const FactorRow& a, const FactorRow& b) {
    return direction == FactorDirection::Risk ? a.mean > b.mean : a.mean < b.mean;
  });
  if (top_k >= 0 && static_cast<std::size_t>(top_k) < rows.size()) rows.resize(static_cast<std::size_t>(top_k));
  return rows;
}

std::string factors_csv(const std::vector<FactorRow>& rows) {
  std::ostringstream os;
  os << "rank,feature,mean,sd\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << i + 1 << ',' << csv_escape(rows[i].name) << ',' << format_number(rows[i].mean) << ','
       << format_number(rows[i].sd) << '\n';
  }
  return os.str();
}

std::vector<Index> top_flagged(const VectorXd& scores, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("top fraction must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(scores.size());
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  k = std::min(k, n);
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return scores(a) > scores(b); });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

UniqueCaseTable compare_unique_cases(const VectorXd& scores_a, const VectorXd& scores_b, const Eigen::VectorXi& labels,
                                     const Eigen::MatrixXd& features, double top_fraction,
                                     const std::vector<std::string>& feature_names) {
  const Index n = labels.size();
  if (scores_a.size() != n || scores_b.size() != n || features.rows() != n) {
    throw ArgumentError("compare_unique_cases: inputs differ in length");
  }
  for (Index i = 0; i < n; ++i) {
    if (labels(i) != 0 && labels(i) != 1) throw DomainError("compare_unique_cases: labels must be 0 or 1");
  }
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != features.cols()) {
    throw ArgumentError("compare_unique_cases: feature_names length must equal feature count");
  }
  const auto fa = top_flagged(scores_a, top_fraction);
  const auto fb = top_flagged(scores_b, top_fraction);
  std::vector<char> in_a(static_cast<std::size_t>(n), 0);
  for (Index i : fa) in_a[static_cast<std::size_t>(i)] = 1;

  UniqueCaseTable t;
  t.flagged_per_model = fa.size();
  std::vector<Index> both;
  std::vector<Index> only_b;
  for (Index i : fb) {
    if (labels(i) != 1) continue;
    (in_a[static_cast<std::size_t>(i)] ? both : only_b).push_back(i);
  }
  t.both_total = both.size();
  t.only_b_total = only_b.size();
  if (both.empty() || only_b.empty()) {
    t.message = both.empty() ? "no true positives flagged by both models" : "no true positives flagged only by model B";
    return t;
  }

  std::vector<double> pvals;
  for (Index j = 0; j < features.cols(); ++j) {
    UniqueCaseRow r;
    r.feature = j;
    r.name = feature_names.empty() ? "x" + std::to_string(j + 1) : feature_names[static_cast<std::size_t>(j)];
    for (Index i : both) r.both_count += features(i, j) != 0.0;
    for (Index i : only_b) r.only_b_count += features(i, j) != 0.0;
    const long a = r.both_count;
    const long b = static_cast<long>(t.both_total) - a;
    const long c = r.only_b_count;
    const long d = static_cast<long>(t.only_b_total) - c;
    r.p_value = (a + c == 0 || b + d == 0) ? 1.0 : fisher_exact(a, b, c, d);
    pvals.push_back(r.p_value);
    t.rows.push_back(std::move(r));
  }
  const auto adj = bh_adjust(pvals);
  for (std::size_t j = 0; j < t.rows.size(); ++j) t.rows[j].p_adjusted = adj[j];
  std::stable_sort(t.rows.begin(), t.rows.end(),
                   [](const UniqueCaseRow& x, const UniqueCaseRow& y) { return x.p_value < y.p_value; });
  return t;
}

std::string unique_cases_csv(const UniqueCaseTable& table) {
  std::ostringstream os;
  os << "feature,both_count,both_total,only_b_count,only_b_total,p_value,p_adjusted\n";
  for (const auto& r : table.rows) {
    os << csv_escape(r.name) << ',' << r.both_count << ',' << table.both_total << ',' << r.only_b_count << ','
       << table.only_b_total << ',' << format_number(r.p_value) << ',' << format_number(r.p_adjusted) << '\n';
  }
  return os.str();
}

}  // namespace hirrr
