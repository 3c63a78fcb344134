#include "hirrr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hirrr/errors.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

const std::vector<std::string>& MetricsReport::field_names() {
  static const std::vector<std::string> names = {"auc",   "prauc", "sens_at_90", "ppv_at_90", "sens_at_95",
                                                 "ppv_at_95", "er_beta", "er_c", "er_u", "er_v",
                                                 "er_d",  "pred_beta", "pred_c"};
  return names;
}

namespace {

template <class Report>
auto fields(Report& r) {
  return std::array{&r.auc,   &r.prauc, &r.sens_at_90, &r.ppv_at_90, &r.sens_at_95, &r.ppv_at_95, &r.er_beta,
                    &r.er_c,  &r.er_u,  &r.er_v,       &r.er_d,      &r.pred_beta,  &r.pred_c};
}

std::size_t field_index(const std::string& name) {
  const auto& names = MetricsReport::field_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ArgumentError("unknown metric '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

struct ClassCounts {
  Index pos = 0;
  Index neg = 0;
};

ClassCounts check_labels(const VectorXd& scores, const VectorXi& labels) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  ClassCounts c;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1) {
      ++c.pos;
    } else if (labels(i) == 0) {
      ++c.neg;
    } else {
      throw DomainError("labels must be 0 or 1");
    }
    if (std::isnan(scores(i))) throw DomainError("scores must not be NaN");
  }
  return c;
}

std::vector<Index> order_by_score(const VectorXd& scores) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return scores(a) < scores(b); });
  return idx;
}

}  // namespace

std::vector<double> MetricsReport::values() const {
  std::vector<double> out;
  for (const auto* f : fields(*this)) out.push_back(f->value_or(std::numeric_limits<double>::quiet_NaN()));
  return out;
}

std::optional<double> MetricsReport::get(const std::string& name) const { return *fields(*this)[field_index(name)]; }

void MetricsReport::set(const std::string& name, double value) { *fields(*this)[field_index(name)] = value; }

double auc(const VectorXd& scores, const VectorXi& labels) {
  const ClassCounts c = check_labels(scores, labels);
  if (c.pos == 0 || c.neg == 0) throw UndefinedMetricError("AUC needs both classes");
  // Mann-Whitney form: average ranks over tie groups give the 1/2 credit.
  const auto idx = order_by_score(scores);
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores(idx[j + 1]) == scores(idx[i])) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels(idx[k]) == 1) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const auto np = static_cast<double>(c.pos);
  const auto nn = static_cast<double>(c.neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double prauc(const VectorXd& scores, const VectorXi& labels) {
  const ClassCounts c = check_labels(scores, labels);
  if (c.pos == 0) throw UndefinedMetricError("PRAUC needs at least one positive");
  auto idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  double ap = 0.0;
  Index tp = 0;
  Index called = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    // Consume the whole tie group at this threshold.
    Index tp_group = 0;
    std::size_t j = i;
    while (j < idx.size() && scores(idx[j]) == scores(idx[i])) {
      if (labels(idx[j]) == 1) ++tp_group;
      ++j;
    }
    tp += tp_group;
    called += static_cast<Index>(j - i);
    if (tp_group > 0) {
      ap += (static_cast<double>(tp_group) / static_cast<double>(c.pos)) *
            (static_cast<double>(tp) / static_cast<double>(called));
    }
    i = j;
  }
  return ap;
}

ThresholdMetrics sensitivity_ppv_at_specificity(const VectorXd& scores, const VectorXi& labels, double specificity) {
  const ClassCounts c = check_labels(scores, labels);
  if (c.pos == 0 || c.neg == 0) throw UndefinedMetricError("sensitivity/PPV need both classes");
  if (!(specificity > 0.0 && specificity < 1.0)) throw ArgumentError("specificity must lie in (0, 1)");

  const auto idx = order_by_score(scores);
  const double need = specificity * static_cast<double>(c.neg) - 1e-9;
  // Walk thresholds upward; negatives strictly below the current distinct value.
  double threshold = std::numeric_limits<double>::infinity();
  Index neg_below = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double t = scores(idx[i]);
    if (static_cast<double>(neg_below) >= need) {
      threshold = t;
      break;
    }
    while (i < idx.size() && scores(idx[i]) == t) {
      if (labels(idx[i]) == 0) ++neg_below;
      ++i;
    }
  }

  // Raising the cut up to the lowest positive at or above it keeps the
  // sensitivity and drops negatives that would otherwise be called.
  double lifted = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < scores.size(); ++k) {
    if (labels(k) == 1 && scores(k) >= threshold) lifted = std::min(lifted, scores(k));
  }
  threshold = lifted;

  ThresholdMetrics out;
  out.threshold = threshold;
  Index tp = 0;
  Index called = 0;
  for (Index k = 0; k < scores.size(); ++k) {
    if (scores(k) >= threshold) {
      ++called;
      if (labels(k) == 1) ++tp;
    }
  }
  out.sensitivity = static_cast<double>(tp) / static_cast<double>(c.pos);
  out.ppv = called > 0 ? static_cast<double>(tp) / static_cast<double>(called)
                       : std::numeric_limits<double>::quiet_NaN();
  return out;
}

void classification_metrics(MetricsReport& report, const VectorXd& scores, const VectorXi& labels) {
  report.auc = auc(scores, labels);
  report.prauc = prauc(scores, labels);
  const auto s90 = sensitivity_ppv_at_specificity(scores, labels, 0.90);
  const auto s95 = sensitivity_ppv_at_specificity(scores, labels, 0.95);
  report.sens_at_90 = s90.sensitivity;
  report.sens_at_95 = s95.sensitivity;
  if (!std::isnan(s90.ppv)) report.ppv_at_90 = s90.ppv;
  if (!std::isnan(s95.ppv)) report.ppv_at_95 = s95.ppv;
}

double subspace_error(const MatrixXd& U_hat, const MatrixXd& U) {
  if (U_hat.rows() != U.rows() || U_hat.cols() != U.cols()) throw ArgumentError("subspace_error: shape mismatch");
  const auto r = static_cast<double>(U.cols());
  return (U_hat * U_hat.transpose() - U * U.transpose()).squaredNorm() / r;
}

EstimationErrors estimation_errors(const MatrixXd& C_hat, const MatrixXd& C_true, Index r) {
  if (C_hat.rows() != C_true.rows() || C_hat.cols() != C_true.cols()) {
    throw ArgumentError("estimation_errors: C_hat and C_true differ in shape");
  }
  const Index p = C_true.rows();
  const Index q = C_true.cols();
  if (r < 1 || r > std::min(p, q)) throw ArgumentError("estimation_errors: need 1 <= r <= min(p, q)");

  Eigen::JacobiSVD<MatrixXd> sh(C_hat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::JacobiSVD<MatrixXd> st(C_true, Eigen::ComputeThinU | Eigen::ComputeThinV);
  EstimationErrors e;
  e.er_beta = (C_hat.col(0) - C_true.col(0)).squaredNorm() / static_cast<double>(p);
  e.er_c = (C_hat - C_true).squaredNorm() / static_cast<double>(p * q);
  e.er_u = subspace_error(sh.matrixU().leftCols(r), st.matrixU().leftCols(r));
  e.er_v = subspace_error(sh.matrixV().leftCols(r), st.matrixV().leftCols(r));
  e.er_d = (sh.singularValues().head(r) - st.singularValues().head(r)).squaredNorm() / static_cast<double>(r);
  return e;
}

PredictionErrors prediction_errors(const MatrixXd& X, const MatrixXd& C_hat, const MatrixXd& C_true) {
  if (C_hat.rows() != C_true.rows() || C_hat.cols() != C_true.cols() || X.cols() != C_true.rows()) {
    throw ArgumentError("prediction_errors: dimension mismatch");
  }
  const auto n = static_cast<double>(X.rows());
  const MatrixXd D = X * (C_true - C_hat);
  PredictionErrors out;
  out.pred_beta = D.col(0).squaredNorm() / n;
  out.pred_c = D.squaredNorm() / (n * static_cast<double>(C_true.cols()));
  return out;
}

TrimmedStats trimmed_mean_se(std::vector<double> values, double trim) {
  if (!(trim >= 0.0 && trim < 0.5)) throw ArgumentError("trim must lie in [0, 0.5)");
  const std::size_t m = values.size();
  const auto k = static_cast<std::size_t>(std::floor(trim * static_cast<double>(m) + 1e-9));
  if (m < 2 * k + 3) throw ArgumentError("trimmed_mean_se: need at least 3 values after trimming");
  std::sort(values.begin(), values.end());
  const std::size_t kept = m - 2 * k;
  double sum = 0.0;
  for (std::size_t i = k; i < m - k; ++i) sum += values[i];
  TrimmedStats out;
  out.kept = kept;
  out.mean = sum / static_cast<double>(kept);
  double ss = 0.0;
  for (std::size_t i = k; i < m - k; ++i) ss += (values[i] - out.mean) * (values[i] - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(kept - 1));
  out.se = out.sd / std::sqrt(static_cast<double>(kept));
  return out;
}

double fisher_exact(long a, long b, long c, long d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw ArgumentError("fisher_exact: negative cell count");
  // Row swaps, column swaps and transposition leave the p-value unchanged; fix an
  // orientation so equivalent tables give bit-identical results.
  if (a + b > c + d) {
    std::swap(a, c);
    std::swap(b, d);
  }
  if (a + c > b + d) {
    std::swap(a, b);
    std::swap(c, d);
  }
  if (a + b > a + c) std::swap(b, c);
  const long r1 = a + b;
  const long r2 = c + d;
  const long c1 = a + c;
  const long c2 = b + d;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) throw UndefinedMetricError("fisher_exact: a margin is zero");
  const auto lchoose = [](long nn, long kk) {
    return std::lgamma(static_cast<double>(nn) + 1.0) - std::lgamma(static_cast<double>(kk) + 1.0) -
           std::lgamma(static_cast<double>(nn - kk) + 1.0);
  };
  const auto logp = [&](long x) { return lchoose(r1, x) + lchoose(r2, c1 - x); };
  const double lobs = logp(a);
  const long lo = std::max(0L, c1 - r2);
  const long hi = std::min(r1, c1);
  // Normalizing by the summed mass cancels the rounding in lden, and a table
  // whose every outcome is at least as extreme gets exactly 1.
  double lmax = lobs;
  for (long x = lo; x <= hi; ++x) lmax = std::max(lmax, logp(x));
  const double cut = lobs + std::log1p(1e-7);
  double p = 0.0;
  double total = 0.0;
  for (long x = lo; x <= hi; ++x) {
    const double lx = logp(x);
    const double px = std::exp(lx - lmax);
    total += px;
    if (lx <= cut) p += px;
  }
  return p == total ? 1.0 : std::min(p / total, 1.0);
}

std::vector<double> bh_adjust(const std::vector<double>& p_values) {
  const std::size_t m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bh_adjust: p-values must lie in [0, 1]");
  }
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const double v = p_values[idx[k]] * static_cast<double>(m) / static_cast<double>(k + 1);
    running = std::min(running, v);
    out[idx[k]] = std::max(std::min(running, 1.0), p_values[idx[k]]);
  }
  return out;
}

}  // namespace hirrr
