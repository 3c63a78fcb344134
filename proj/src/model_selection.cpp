#include "hirrr/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>

#include "hirrr/cohort.hpp"
#include "hirrr/errors.hpp"
#include "hirrr/io.hpp"
#include "hirrr/parallel.hpp"
#include "hirrr/random.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

std::string to_string(CvCriterion c) {
  return c == CvCriterion::TargetAUC ? "target_auc" : "heldout_loglik";
}

CvCriterion parse_criterion(const std::string& name) {
  if (name == "heldout_loglik" || name == "HeldOutWeightedLoglik") return CvCriterion::HeldOutWeightedLoglik;
  if (name == "target_auc" || name == "TargetAUC") return CvCriterion::TargetAUC;
  throw ConfigError("unknown CV criterion '" + name + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Glm:
      return "glm";
    case ModelKind::Rrr:
      return "rrr";
    case ModelKind::Hirrr:
      return "hirrr";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "glm") return ModelKind::Glm;
  if (name == "rrr") return ModelKind::Rrr;
  if (name == "hirrr") return ModelKind::Hirrr;
  throw ConfigError("unknown model kind '" + name + "'");
}

void CvGrid::validate() const {
  if (ranks.empty() || lambdas.empty()) throw ConfigError("CV grid must be non-empty");
  if (folds < 2) throw ConfigError("CV needs at least 2 folds");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw ConfigError("lambda values must be non-negative");
  }
  for (Index r : ranks) {
    if (r < 1) throw ConfigError("ranks must be positive");
  }
}

void SplitPlan::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (repeats < 1) throw ConfigError("repeats must be positive");
}

namespace {

bool is_binary(const VectorXd& v) {
  return (v.array() == 0.0 || v.array() == 1.0).all();
}

VectorXi as_labels(const VectorXd& v) { return v.cast<int>(); }

// Strata: the two classes of a binary primary outcome, otherwise one stratum.
std::vector<std::vector<Index>> strata_of(const VectorXd& primary) {
  std::vector<std::vector<Index>> strata;
  if (is_binary(primary)) {
    strata.resize(2);
    for (Index i = 0; i < primary.size(); ++i) strata[primary(i) == 1.0 ? 1 : 0].push_back(i);
  } else {
    strata.resize(1);
    for (Index i = 0; i < primary.size(); ++i) strata[0].push_back(i);
  }
  return strata;
}

Dataset restrict_features(const Dataset& ds, const std::vector<Index>& cols) {
  Dataset out = ds;
  out.X.resize(ds.n(), static_cast<Index>(cols.size()));
  out.feature_names.clear();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.X.col(static_cast<Index>(j)) = ds.X.col(cols[j]);
    if (!ds.feature_names.empty()) out.feature_names.push_back(ds.feature_names[static_cast<std::size_t>(cols[j])]);
  }
  return out;
}

FitResult fit_kind(ModelKind kind, const Dataset& ds, const FitConfig& cfg) {
  switch (kind) {
    case ModelKind::Glm:
      return fit_glm(ds.without_single_records(), cfg);
    case ModelKind::Rrr:
      return fit_rrr(ds, cfg);
    case ModelKind::Hirrr:
      return fit_hirrr(ds, cfg);
  }
  throw ArgumentError("unknown model kind");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<int> stratified_folds(const VectorXd& primary, int folds, std::uint64_t seed) {
  if (folds < 2) throw ArgumentError("need at least 2 folds");
  if (primary.size() < folds) throw ArgumentError("fewer rows than folds");
  Rng rng(seed);
  std::vector<int> fold_of(static_cast<std::size_t>(primary.size()), 0);
  int pos = 0;
  for (auto& s : strata_of(primary)) {
    std::shuffle(s.begin(), s.end(), rng);
    // Continue the round-robin across strata so fold sizes differ by at most one.
    for (Index i : s) fold_of[static_cast<std::size_t>(i)] = pos++ % folds;
  }
  return fold_of;
}

CvResult cross_validate(const Dataset& ds, const CvGrid& grid, ModelKind kind, unsigned threads,
                        const FitConfig& base) {
  grid.validate();
  if (kind == ModelKind::Glm) throw ArgumentError("cross_validate: GLM has no (rank, lambda) grid");
  const VectorXd primary = ds.Y.col(0);
  const bool auc_crit = grid.criterion == CvCriterion::TargetAUC;
  if (auc_crit && ds.families[0].kind != FamilyKind::Bernoulli) {
    throw ArgumentError("TargetAUC needs a binary primary outcome");
  }

  CvResult res;
  bool ok = false;
  for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
    res.fold_of = stratified_folds(primary, grid.folds, derive_seed(grid.seed, {0xF01D, static_cast<std::uint64_t>(attempt)}));
    ok = true;
    if (!auc_crit) break;
    for (int f = 0; f < grid.folds && ok; ++f) {
      bool has0 = false;
      bool has1 = false;
      for (Index i = 0; i < primary.size(); ++i) {
        if (res.fold_of[static_cast<std::size_t>(i)] != f) continue;
        (primary(i) == 1.0 ? has1 : has0) = true;
      }
      ok = has0 && has1;
    }
  }
  if (!ok) throw DegenerateInputError("cross_validate: could not build folds with both classes");

  std::vector<std::vector<Index>> train_rows(static_cast<std::size_t>(grid.folds));
  std::vector<std::vector<Index>> val_rows(static_cast<std::size_t>(grid.folds));
  for (Index i = 0; i < ds.n(); ++i) {
    const int f = res.fold_of[static_cast<std::size_t>(i)];
    for (int g = 0; g < grid.folds; ++g) (g == f ? val_rows : train_rows)[static_cast<std::size_t>(g)].push_back(i);
  }

  for (Index r : grid.ranks) {
    for (double l : grid.lambdas) res.cells.push_back({r, l, std::vector<double>(static_cast<std::size_t>(grid.folds)), 0.0});
  }
  const std::size_t n_tasks = res.cells.size() * static_cast<std::size_t>(grid.folds);
  parallel_for(n_tasks, threads, [&](std::size_t task) {
    CvCell& cell = res.cells[task / static_cast<std::size_t>(grid.folds)];
    const std::size_t f = task % static_cast<std::size_t>(grid.folds);
    const Dataset train = ds.select_rows(train_rows[f]);
    const Dataset val = ds.select_rows(val_rows[f]);
    FitConfig cfg = base;
    cfg.rank = cell.rank;
    cfg.lambda = cell.lambda;
    double score = -std::numeric_limits<double>::infinity();
    try {
      const FitResult fit = fit_kind(kind, train, cfg);
      if (auc_crit) {
        const Prediction pr = predict(fit.params, val.X, val.families);
        score = auc(pr.means.col(0), as_labels(val.Y.col(0)));
      } else {
        const MatrixXd theta = fit.params.theta(val.X);
        score = -expfam::weighted_negloglik(val.Y, theta, std::span<const Family>(val.families), fit.params.phi,
                                             MatrixXd()) /
                static_cast<double>(val.n());
      }
    } catch (const Error&) {
      // A failed fit (rank too large, divergence) simply loses the comparison.
    }
    cell.fold_scores[f] = score;
  });

  const CvCell* best = nullptr;
  for (CvCell& c : res.cells) {
    c.mean = mean_of(c.fold_scores);
    if (std::isnan(c.mean)) c.mean = -std::numeric_limits<double>::infinity();
    const bool better = best == nullptr || c.mean > best->mean ||
                        (c.mean == best->mean && (c.rank < best->rank || (c.rank == best->rank && c.lambda < best->lambda)));
    if (better) best = &c;
  }
  if (best == nullptr || !std::isfinite(best->mean)) throw DegenerateInputError("cross_validate: every grid cell failed");
  res.best_rank = best->rank;
  res.best_lambda = best->lambda;
  return res;
}

std::string cv_scores_csv(const CvResult& result) {
  std::ostringstream os;
  os << "rank,lambda,fold,criterion_value\n";
  for (const CvCell& c : result.cells) {
    for (std::size_t f = 0; f < c.fold_scores.size(); ++f) {
      os << c.rank << ',' << format_number(c.lambda) << ',' << f << ',' << format_number(c.fold_scores[f]) << '\n';
    }
  }
  return os.str();
}

FittedModel fit_model(const ModelConfig& model, const Dataset& train, std::uint64_t seed, unsigned threads) {
  FittedModel out;
  std::vector<Index> cols = model.features;
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(train.p()));
    std::iota(cols.begin(), cols.end(), Index{0});
  }
  for (Index c : cols) {
    if (c < 0 || c >= train.p()) throw ConfigError("model '" + model.name + "': feature index out of range");
  }
  if (model.screen_top_k) {
    if (!is_binary(train.Y.col(0))) throw ArgumentError("screening needs a binary primary outcome");
    std::vector<Index> keep;
    std::vector<Index> binary_cols;
    for (Index c : cols) (is_binary(train.X.col(c)) ? binary_cols : keep).push_back(c);
    MatrixXd Xb(train.n(), static_cast<Index>(binary_cols.size()));
    for (std::size_t j = 0; j < binary_cols.size(); ++j) Xb.col(static_cast<Index>(j)) = train.X.col(binary_cols[j]);
    for (Index j : fisher_screen(Xb, train.Y.col(0), *model.screen_top_k)) keep.push_back(binary_cols[static_cast<std::size_t>(j)]);
    std::sort(keep.begin(), keep.end());
    cols = keep;
  }
  out.used_features = cols;
  const Dataset sub = restrict_features(train, cols);

  FitConfig cfg;
  cfg.rank = model.rank;
  cfg.lambda = model.kind == ModelKind::Hirrr ? model.lambda : 0.0;
  cfg.tolerance = model.tolerance;
  cfg.max_iters = model.max_iters;
  cfg.ltilde_ridge = model.ltilde_ridge;
  cfg.shared_dispersion = model.shared_dispersion;
  cfg.seed = seed;
  if (model.cv && model.kind != ModelKind::Glm) {
    CvGrid grid = *model.cv;
    grid.seed = derive_seed(seed, {0xC5});
    if (model.kind == ModelKind::Rrr) grid.lambdas = {0.0};
    const CvResult cv = cross_validate(sub, grid, model.kind, threads, cfg);
    cfg.rank = cv.best_rank;
    cfg.lambda = cv.best_lambda;
  }
  if (model.kind == ModelKind::Glm) cfg.rank = sub.q();
  out.rank = cfg.rank;
  out.lambda = cfg.lambda;
  out.fit = fit_kind(model.kind, sub, cfg);

  // Expand coefficients back to the full feature space.
  MatrixXd A = MatrixXd::Zero(train.p(), out.fit.params.A.cols());
  for (std::size_t j = 0; j < cols.size(); ++j) A.row(cols[j]) = out.fit.params.A.row(static_cast<Index>(j));
  out.fit.params.A = std::move(A);
  return out;
}

std::pair<std::vector<Index>, std::vector<Index>> stratified_split(const VectorXd& primary, double train_fraction,
                                                                   std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ArgumentError("train_fraction must lie in (0, 1)");
  Rng rng(seed);
  std::vector<Index> train;
  std::vector<Index> test;
  for (auto& s : strata_of(primary)) {
    std::shuffle(s.begin(), s.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(s.size())));
    if (n_test == 0 && s.size() >= 2) n_test = 1;
    if (n_test >= s.size() && !s.empty()) n_test = s.size() - 1;
    test.insert(test.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), s.begin() + static_cast<std::ptrdiff_t>(n_test), s.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

SplitResults run_random_splits(const Dataset& ds, const SplitPlan& plan, const std::vector<ModelConfig>& models,
                               unsigned threads) {
  plan.validate();
  if (models.empty()) throw ConfigError("no models configured");
  if (ds.families[0].kind != FamilyKind::Bernoulli) throw ArgumentError("random splits need a binary primary outcome");
  const VectorXd primary = ds.Y.col(0);

  SplitResults res;
  for (const auto& m : models) res.model_names.push_back(m.name);
  res.repeats.resize(static_cast<std::size_t>(plan.repeats));
  const auto both_classes = [&](const std::vector<Index>& rows) {
    bool has0 = false;
    bool has1 = false;
    for (Index i : rows) (primary(i) == 1.0 ? has1 : has0) = true;
    return has0 && has1;
  };
  for (int r = 0; r < plan.repeats; ++r) {
    SplitRepeat& rep = res.repeats[static_cast<std::size_t>(r)];
    auto split = stratified_split(primary, plan.train_fraction, derive_seed(plan.seed, {static_cast<std::uint64_t>(r)}));
    if (!both_classes(split.second)) {
      split = stratified_split(primary, plan.train_fraction, derive_seed(plan.seed, {static_cast<std::uint64_t>(r), 1}));
      rep.flagged = !both_classes(split.second);
    }
    rep.train_rows = std::move(split.first);
    rep.test_rows = std::move(split.second);
    rep.reports.resize(models.size());
    rep.test_scores.resize(models.size());
    rep.fits.resize(models.size());
  }

  const Dataset base = plan.include_all_single_records_in_training ? ds : ds.without_single_records();
  parallel_for(static_cast<std::size_t>(plan.repeats) * models.size(), threads, [&](std::size_t task) {
    const std::size_t r = task / models.size();
    const std::size_t m = task % models.size();
    SplitRepeat& rep = res.repeats[r];
    const Dataset train = base.select_rows(rep.train_rows);
    const Dataset test = ds.select_rows(rep.test_rows);
    rep.fits[m] = fit_model(models[m], train, derive_seed(plan.seed, {r, 1000 + m}), 1);
    const Prediction pr = predict(rep.fits[m].fit.params, test.X, test.families);
    rep.test_scores[m] = pr.means.col(0);
    if (!rep.flagged) classification_metrics(rep.reports[m], rep.test_scores[m], as_labels(test.Y.col(0)));
  });
  return res;
}

MetricsReport SplitResults::mean(std::size_t model) const {
  MetricsReport out;
  for (const auto& name : MetricsReport::field_names()) {
    std::vector<double> v;
    for (const auto& rep : repeats) {
      if (auto x = rep.reports[model].get(name)) v.push_back(*x);
    }
    if (!v.empty()) out.set(name, mean_of(v));
  }
  return out;
}

MetricsReport SplitResults::sd(std::size_t model) const {
  MetricsReport out;
  for (const auto& name : MetricsReport::field_names()) {
    std::vector<double> v;
    for (const auto& rep : repeats) {
      if (auto x = rep.reports[model].get(name)) v.push_back(*x);
    }
    if (v.size() < 2) {
      if (!v.empty()) out.set(name, 0.0);
      continue;
    }
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    out.set(name, std::sqrt(ss / static_cast<double>(v.size() - 1)));
  }
  return out;
}

std::string split_results_csv(const SplitResults& results) {
  std::ostringstream os;
  os << "model,repeat";
  for (const auto& f : MetricsReport::field_names()) os << ',' << f;
  os << '\n';
  const auto row = [&](const std::string& model, const std::string& tag, const MetricsReport& rep) {
    os << model << ',' << tag;
    for (double v : rep.values()) os << ',' << format_number(v);
    os << '\n';
  };
  for (std::size_t m = 0; m < results.model_names.size(); ++m) {
    for (std::size_t r = 0; r < results.repeats.size(); ++r) {
      row(results.model_names[m], std::to_string(r), results.repeats[r].reports[m]);
    }
    row(results.model_names[m], "mean", results.mean(m));
    row(results.model_names[m], "sd", results.sd(m));
  }
  return os.str();
}

}  // namespace hirrr
