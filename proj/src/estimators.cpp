#include "hirrr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "hirrr/errors.hpp"

namespace hirrr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kClipProb = 1e-3;
constexpr double kPoissonThetaMax = 30.0;
constexpr int kMaxHalvings = 30;
constexpr double kPhiFloor = 1e-300;

bool is_unit(const MatrixXd& W) { return W.size() == 0 || (W.array() == 1.0).all(); }

void check_weights(const MatrixXd& W, Index rows, Index cols, const char* what) {
  if (W.size() == 0) return;
  if (W.rows() != rows || W.cols() != cols) {
    throw ArgumentError(std::string(what) + " is not conformable with its outcome block");
  }
  if (!W.allFinite() || (W.array() < 0.0).any()) {
    throw ArgumentError(std::string(what) + " must be finite and non-negative");
  }
}

void check_config(const Dataset& ds, const FitConfig& cfg) {
  if (cfg.rank < 1 || cfg.rank > std::min(ds.p(), ds.q())) {
    throw ArgumentError("rank must satisfy 1 <= r <= min(p, q)");
  }
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw ArgumentError("lambda must be finite and non-negative");
  }
  if (!(cfg.tolerance > 0.0)) throw ArgumentError("tolerance must be positive");
  if (cfg.max_iters < 0) throw ArgumentError("max_iters must be non-negative");
  if (!(cfg.ltilde_ridge >= 0.0) || !std::isfinite(cfg.ltilde_ridge)) {
    throw ArgumentError("ltilde_ridge must be finite and non-negative");
  }
  check_weights(cfg.W, ds.n(), ds.q(), "W");
  check_weights(cfg.Wtilde, ds.n1(), ds.q(), "Wtilde");
}

// The single-record block contributes only when it exists and lambda > 0;
// otherwise every lambda-term is skipped so lambda = 0 and n1 = 0 coincide.
bool uses_single(const Dataset& ds, const FitConfig& cfg) { return cfg.lambda > 0.0 && ds.n1() > 0; }

double weight_at(const MatrixXd& W, Index i, Index k) { return W.size() == 0 ? 1.0 : W(i, k); }

MatrixXd theta_of(const MatrixXd& XA, const MatrixXd& B, const VectorXd& mu) {
  MatrixXd T = XA * B.transpose();
  T.rowwise() += mu.transpose();
  return T;
}

double objective_of(const Dataset& ds, const FitConfig& cfg, bool single, const MatrixXd& Theta,
                    const MatrixXd& ThetaT, const VectorXd& phi, const MatrixXd& Lt) {
  std::span<const Family> fam(ds.families);
  double L = expfam::weighted_negloglik(ds.Y, Theta, fam, phi, cfg.W);
  if (single) {
    L += cfg.lambda * expfam::weighted_negloglik(ds.Ytilde, ThetaT, fam, phi, cfg.Wtilde);
    if (cfg.ltilde_ridge > 0.0) L += 0.5 * cfg.lambda * cfg.ltilde_ridge * Lt.squaredNorm();
  }
  return L;
}

// W o (Y - b'(Theta)) / a(phi): the gradient of the log-likelihood in Theta.
MatrixXd score_matrix(const MatrixXd& Y, const MatrixXd& Theta, const std::vector<Family>& fam,
                      const VectorXd& phi, const MatrixXd& W) {
  MatrixXd G(Y.rows(), Y.cols());
  for (Index k = 0; k < Y.cols(); ++k) {
    const Family& f = fam[static_cast<std::size_t>(k)];
    const double a = expfam::dispersion_scale(f, phi(k));
    for (Index i = 0; i < Y.rows(); ++i) {
      G(i, k) = weight_at(W, i, k) * (Y(i, k) - expfam::mean(f, Theta(i, k))) / a;
    }
  }
  return G;
}

double clip_prob(double m) { return std::clamp(m, kClipProb, 1.0 - kClipProb); }

double working_response(const Family& f, double y) {
  switch (f.kind) {
    case FamilyKind::Gaussian:
      return y;
    case FamilyKind::Bernoulli:
      return expfam::link(f, clip_prob(y));
    case FamilyKind::Poisson:
      return std::log(y + 0.5);
  }
  return y;
}

double marginal_link(const Family& f, double m) {
  switch (f.kind) {
    case FamilyKind::Gaussian:
      return m;
    case FamilyKind::Bernoulli:
      return expfam::link(f, clip_prob(m));
    case FamilyKind::Poisson:
      return std::log(std::max(m, kClipProb));
  }
  return m;
}

struct ClosedForm {
  MatrixXd A;
  OrthonormalFrame B;
  VectorXd mu;
  bool tie = false;
};

// Exact minimizer of ||Y - 1 mu^T - X A B^T||^2 + lambda ||Yt - 1 mu^T - Lt B^T||^2.
// Profiling out mu and Lt leaves trace(B^T M B) with
// M = Yc^T P Yc + lambda Ytc^T Ytc, P the projector onto [1, X] and Yc, Ytc
// centered by the pooled column mean.
ClosedForm closed_form(const MatrixXd& X, const MatrixXd& Y, const MatrixXd& Yt, double lambda,
                       bool single, Index r) {
  const Index n = X.rows();
  const Index p = X.cols();
  VectorXd ybar = Y.colwise().sum().transpose();
  double denom = static_cast<double>(n);
  if (single) {
    ybar += lambda * Yt.colwise().sum().transpose();
    denom += lambda * static_cast<double>(Yt.rows());
  }
  ybar /= denom;

  MatrixXd X1(n, p + 1);
  X1.col(0).setOnes();
  X1.rightCols(p) = X;
  const ColumnSpaceProjector proj(X1);

  const MatrixXd Yc = Y.rowwise() - ybar.transpose();
  const MatrixXd PY = proj.apply(Yc);
  MatrixXd M = PY.transpose() * PY;
  if (single) {
    const MatrixXd Ytc = Yt.rowwise() - ybar.transpose();
    M += lambda * (Ytc.transpose() * Ytc);
  }
  const EigenResult eig = top_eigenvectors(M, r);
  const MatrixXd& B = eig.vectors.cols();
  const MatrixXd coef = proj.solve(Yc * B);

  ClosedForm out;
  out.A = coef.bottomRows(p);
  out.mu = ybar + B * coef.row(0).transpose();
  out.B = eig.vectors;
  out.tie = eig.tie_at_cutoff;
  return out;
}

MatrixXd transform_block(const MatrixXd& Y, const std::vector<Family>& fam) {
  MatrixXd Z(Y.rows(), Y.cols());
  for (Index k = 0; k < Y.cols(); ++k) {
    for (Index i = 0; i < Y.rows(); ++i) Z(i, k) = working_response(fam[static_cast<std::size_t>(k)], Y(i, k));
  }
  return Z;
}

void check_poisson_growth(const MatrixXd& Theta, const std::vector<Family>& fam) {
  for (Index k = 0; k < Theta.cols(); ++k) {
    if (fam[static_cast<std::size_t>(k)].kind != FamilyKind::Poisson) continue;
    if (Theta.col(k).cwiseAbs().maxCoeff() > kPoissonThetaMax) {
      throw DivergenceError("Poisson linear predictor exceeded |theta| <= 30");
    }
  }
}

bool converged_step(double L_old, double L_new, double eps) {
  return std::abs(L_new - L_old) / (std::abs(L_old) + eps) < eps;
}

// Tries t = 1, 1/2, 1/4, ...; `trial(t)` stages a candidate and returns its
// objective, `commit()` adopts the staged candidate. Returns true on accept.
template <class Trial, class Commit>
bool backtrack(double& L, Trial&& trial, Commit&& commit) {
  double t = 1.0;
  for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
    const double cand = trial(t);
    if (std::isfinite(cand) && cand <= L) {
      L = cand;
      commit();
      return true;
    }
  }
  return false;
}

void require_family(const Dataset& ds, FamilyKind kind, const char* who) {
  if (!ds.all_families(kind)) {
    throw ArgumentError(std::string(who) + ": all outcome families must be " + to_string(kind));
  }
}

ModelParams finish_single_scores(ModelParams params, const Dataset& ds, bool single) {
  // With the single-record block switched off, L~ carries no information for
  // the objective; report the encoder scores of the working responses.
  if (!single) {
    const MatrixXd Zt = transform_block(ds.Ytilde, ds.families);
    params.Ltilde = (Zt.rowwise() - params.mu.transpose()) * params.B.cols();
  }
  return params;
}

}  // namespace

void Dataset::validate() {
  const Index nq = Y.cols();
  if (X.rows() != Y.rows()) throw ArgumentError("X and Y must have the same number of rows");
  if (X.rows() < 1) throw ArgumentError("need at least one multi-record row");
  if (nq < 1) throw ArgumentError("need at least one outcome column");
  if (Ytilde.size() == 0) Ytilde.resize(0, nq);
  if (Ytilde.cols() != nq) throw ArgumentError("Y and Ytilde must have the same column count");
  if (static_cast<Index>(families.size()) != nq) throw ArgumentError("families length must equal q");
  if (q0 < 1 || q0 > nq) throw ArgumentError("q0 must satisfy 1 <= q0 <= q");
  if (!X.allFinite()) throw DomainError("X contains non-finite values");
  for (Index k = 0; k < nq; ++k) {
    const Family& f = families[static_cast<std::size_t>(k)];
    for (Index i = 0; i < Y.rows(); ++i) expfam::check_support(f, Y(i, k));
    for (Index i = 0; i < Ytilde.rows(); ++i) expfam::check_support(f, Ytilde(i, k));
  }
  if (feature_names.empty()) {
    for (Index j = 0; j < X.cols(); ++j) feature_names.push_back("x" + std::to_string(j + 1));
  }
  if (outcome_names.empty()) {
    for (Index k = 0; k < nq; ++k) outcome_names.push_back("y" + std::to_string(k + 1));
  }
  if (static_cast<Index>(feature_names.size()) != X.cols()) throw ArgumentError("feature_names length must equal p");
  if (static_cast<Index>(outcome_names.size()) != nq) throw ArgumentError("outcome_names length must equal q");
}

bool Dataset::all_families(FamilyKind kind) const {
  return std::all_of(families.begin(), families.end(), [kind](const Family& f) { return f.kind == kind; });
}

Dataset Dataset::select_rows(const std::vector<Index>& rows) const {
  Dataset out = *this;
  out.X.resize(static_cast<Index>(rows.size()), X.cols());
  out.Y.resize(static_cast<Index>(rows.size()), Y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n()) throw ArgumentError("select_rows: index out of range");
    out.X.row(static_cast<Index>(i)) = X.row(rows[i]);
    out.Y.row(static_cast<Index>(i)) = Y.row(rows[i]);
  }
  return out;
}

Dataset Dataset::without_single_records() const {
  Dataset out = *this;
  out.Ytilde.resize(0, Y.cols());
  return out;
}

MatrixXd ModelParams::theta(const MatrixXd& X) const {
  if (X.cols() != A.rows()) throw ArgumentError("feature count does not match the fitted model");
  return theta_of(X * A, B.cols(), mu);
}

MatrixXd ModelParams::theta_tilde() const { return theta_of(Ltilde, B.cols(), mu); }

double hirrr_objective(const Dataset& ds, const FitConfig& cfg, const ModelParams& params) {
  const bool single = uses_single(ds, cfg);
  const MatrixXd Theta = params.theta(ds.X);
  const MatrixXd ThetaT = single ? params.theta_tilde() : MatrixXd(0, ds.q());
  return objective_of(ds, cfg, single, Theta, ThetaT, params.phi, params.Ltilde);
}

ModelParams initialize_params(const Dataset& ds, const FitConfig& cfg) {
  check_config(ds, cfg);
  const bool single = uses_single(ds, cfg);
  const Index q = ds.q();

  ModelParams init;
  init.mu.resize(q);
  for (Index k = 0; k < q; ++k) {
    double num = 0.0;
    double den = 0.0;
    for (Index i = 0; i < ds.n(); ++i) {
      num += weight_at(cfg.W, i, k) * ds.Y(i, k);
      den += weight_at(cfg.W, i, k);
    }
    if (single) {
      for (Index i = 0; i < ds.n1(); ++i) {
        num += cfg.lambda * weight_at(cfg.Wtilde, i, k) * ds.Ytilde(i, k);
        den += cfg.lambda * weight_at(cfg.Wtilde, i, k);
      }
    }
    init.mu(k) = marginal_link(ds.families[static_cast<std::size_t>(k)], den > 0.0 ? num / den : 0.0);
  }

  const MatrixXd Z = transform_block(ds.Y, ds.families);
  const MatrixXd Zt = transform_block(ds.Ytilde, ds.families);
  const ClosedForm cf = closed_form(ds.X, Z, Zt, cfg.lambda, single, cfg.rank);
  init.A = cf.A;
  init.B = cf.B;
  init.Ltilde = (Zt.rowwise() - init.mu.transpose()) * cf.B.cols();
  init.phi = VectorXd::Ones(q);
  return init;
}

FitResult fit_hirrr_gaussian(const Dataset& ds, const FitConfig& cfg) {
  require_family(ds, FamilyKind::Gaussian, "fit_hirrr_gaussian");
  check_config(ds, cfg);
  if (!is_unit(cfg.W) || !is_unit(cfg.Wtilde)) {
    throw ArgumentError("fit_hirrr_gaussian: weighted fits go through fit_hirrr_general");
  }
  if (cfg.ltilde_ridge != 0.0) throw ArgumentError("fit_hirrr_gaussian: ridge on L~ goes through fit_hirrr_general");
  const bool single = uses_single(ds, cfg);
  const ClosedForm cf = closed_form(ds.X, ds.Y, ds.Ytilde, cfg.lambda, single, cfg.rank);

  FitResult res;
  res.method = "hirrr-gaussian-closed-form";
  ModelParams& P = res.params;
  P.A = cf.A;
  P.B = cf.B;
  P.mu = cf.mu;
  P.Ltilde = (ds.Ytilde.rowwise() - P.mu.transpose()) * P.B.cols();

  // Dispersion: per-column mean squared residual pooled over both parts.
  const MatrixXd R = ds.Y - P.theta(ds.X);
  VectorXd ss = R.colwise().squaredNorm().transpose();
  double cnt = static_cast<double>(ds.n());
  if (single) {
    const MatrixXd Rt = ds.Ytilde - P.theta_tilde();
    ss += cfg.lambda * Rt.colwise().squaredNorm().transpose();
    cnt += cfg.lambda * static_cast<double>(ds.n1());
  }
  P.phi = (ss / cnt).cwiseMax(kPhiFloor);
  if (cfg.shared_dispersion) P.phi.setConstant(std::max(ss.sum() / (cnt * static_cast<double>(ds.q())), kPhiFloor));
  P.objective_trace.push_back(hirrr_objective(ds, cfg, P));
  res.converged = true;
  res.eigen_tie = cf.tie;
  return res;
}

FitResult fit_hirrr_binary(const Dataset& ds, const FitConfig& cfg, const std::optional<ModelParams>& init) {
  require_family(ds, FamilyKind::Bernoulli, "fit_hirrr_binary");
  check_config(ds, cfg);
  if (!is_unit(cfg.W) || !is_unit(cfg.Wtilde)) {
    throw ArgumentError("fit_hirrr_binary: weighted fits go through fit_hirrr_general");
  }
  const bool single = uses_single(ds, cfg);
  const double lam = cfg.lambda;
  const MatrixXd& X = ds.X;
  const MatrixXd& Y = ds.Y;
  const MatrixXd& Yt = ds.Ytilde;
  const auto n = static_cast<double>(ds.n());
  const auto n1 = static_cast<double>(ds.n1());

  FitResult res;
  res.method = "hirrr-binary";
  ModelParams P = init ? *init : initialize_params(ds, cfg);
  P.phi = VectorXd::Ones(ds.q());
  const MatrixXd XtX_pinv = ColumnSpaceProjector(X).gram_pinv();
  const auto plogis = [](const MatrixXd& T) { return T.unaryExpr([](double t) { return expfam::plogis(t); }); };
  const auto obj = [&](const MatrixXd& A, const MatrixXd& B, const VectorXd& mu, const MatrixXd& Lt) {
    const MatrixXd Th = theta_of(X * A, B, mu);
    return objective_of(ds, cfg, single, Th, single ? theta_of(Lt, B, mu) : MatrixXd(0, ds.q()), P.phi, Lt);
  };

  MatrixXd B = P.B.cols();
  double L = obj(P.A, B, P.mu, P.Ltilde);
  P.objective_trace.push_back(L);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const double L_old = L;

    // A-step: A + 4 (X^T X)^+ X^T [Y - plogis(Theta)] B
    {
      const MatrixXd R = Y - plogis(theta_of(X * P.A, B, P.mu));
      const MatrixXd dA = 4.0 * XtX_pinv * (X.transpose() * (R * B));
      MatrixXd cand;
      backtrack(
          L, [&](double t) { cand = P.A + t * dA; return obj(cand, B, P.mu, P.Ltilde); },
          [&] { P.A = cand; });
    }

    // B-step: Procrustes on E*^T XA + lambda Et*^T Lt.
    {
      const MatrixXd XA = X * P.A;
      const MatrixXd R = Y - plogis(theta_of(XA, B, P.mu));
      MatrixXd Rt;
      if (single) Rt = Yt - plogis(theta_of(P.Ltilde, B, P.mu));
      double step = 4.0;
      for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
        const MatrixXd E = XA * B.transpose() + step * R;
        MatrixXd T = E.transpose() * XA;
        if (single) {
          const MatrixXd Et = P.Ltilde * B.transpose() + step * Rt;
          T += lam * (Et.transpose() * P.Ltilde);
        }
        const ProcrustesResult pr = procrustes_solve(T);
        const double cand = obj(P.A, pr.frame.cols(), P.mu, P.Ltilde);
        if (std::isfinite(cand) && cand <= L) {
          L = cand;
          B = pr.frame.cols();
          res.degenerate_procrustes = res.degenerate_procrustes || pr.degenerate_rank;
          break;
        }
      }
    }

    // mu-step: mu + 4 (R^T 1 + lambda Rt^T 1) / (n + lambda n1)
    {
      const MatrixXd R = Y - plogis(theta_of(X * P.A, B, P.mu));
      VectorXd g = R.colwise().sum().transpose();
      double cnt = n;
      if (single) {
        g += lam * (Yt - plogis(theta_of(P.Ltilde, B, P.mu))).colwise().sum().transpose();
        cnt += lam * n1;
      }
      const VectorXd dmu = 4.0 * g / cnt;
      VectorXd cand;
      backtrack(
          L, [&](double t) { cand = P.mu + t * dmu; return obj(P.A, B, cand, P.Ltilde); },
          [&] { P.mu = cand; });
    }

    // Lt-step: Lt + 4 [Yt - plogis(Theta~)] B, damped by the ridge term when present.
    if (single) {
      const double gam = cfg.ltilde_ridge;
      const MatrixXd dL =
          ((Yt - plogis(theta_of(P.Ltilde, B, P.mu))) * B - gam * P.Ltilde) / (0.25 + gam);
      MatrixXd cand;
      backtrack(
          L, [&](double t) { cand = P.Ltilde + t * dL; return obj(P.A, B, P.mu, cand); },
          [&] { P.Ltilde = cand; });
    }

    P.objective_trace.push_back(L);
    res.iterations = it + 1;
    if (converged_step(L_old, L, cfg.tolerance)) {
      res.converged = true;
      break;
    }
  }
  if (cfg.max_iters == 0) res.converged = false;
  P.B = OrthonormalFrame::trusted(B);
  res.params = finish_single_scores(std::move(P), ds, single);
  return res;
}

FitResult fit_hirrr_general(const Dataset& ds, const FitConfig& cfg, const std::optional<ModelParams>& init) {
  check_config(ds, cfg);
  const bool single = uses_single(ds, cfg);
  const double lam = cfg.lambda;
  const MatrixXd& X = ds.X;
  const MatrixXd& Y = ds.Y;
  const MatrixXd& Yt = ds.Ytilde;
  const auto& fam = ds.families;
  const Index q = ds.q();
  const Index n = ds.n();
  const Index n1 = ds.n1();

  FitResult res;
  res.method = "hirrr-general";
  ModelParams P = init ? *init : initialize_params(ds, cfg);
  MatrixXd B = P.B.cols();

  VectorXd row_w(n);
  for (Index i = 0; i < n; ++i) row_w(i) = cfg.W.size() == 0 ? 1.0 : cfg.W.row(i).maxCoeff();
  const MatrixXd gram_pinv = weighted_gram_pinv(X, row_w);
  VectorXd col_w = VectorXd::Zero(q);   // sum_i w_ik (+ lambda sum_i w~_ik)
  VectorXd col_wY = VectorXd::Zero(q);  // max_i w_ik
  VectorXd col_wT = VectorXd::Zero(q);  // max_i w~_ik
  for (Index k = 0; k < q; ++k) {
    for (Index i = 0; i < n; ++i) {
      col_w(k) += weight_at(cfg.W, i, k);
      col_wY(k) = std::max(col_wY(k), weight_at(cfg.W, i, k));
    }
    if (single) {
      for (Index i = 0; i < n1; ++i) {
        col_w(k) += lam * weight_at(cfg.Wtilde, i, k);
        col_wT(k) = std::max(col_wT(k), weight_at(cfg.Wtilde, i, k));
      }
    }
  }

  const auto thetas = [&](const MatrixXd& A, const MatrixXd& Bm, const VectorXd& mu, const MatrixXd& Lt) {
    return std::pair<MatrixXd, MatrixXd>(theta_of(X * A, Bm, mu),
                                         single ? theta_of(Lt, Bm, mu) : MatrixXd(0, q));
  };
  const auto obj = [&](const MatrixXd& A, const MatrixXd& Bm, const VectorXd& mu, const MatrixXd& Lt) {
    const auto [Th, ThT] = thetas(A, Bm, mu, Lt);
    return objective_of(ds, cfg, single, Th, ThT, P.phi, Lt);
  };
  // Per-column curvature bound of -log f in theta.
  const auto curvature = [&](const MatrixXd& Th, const MatrixXd& ThT) {
    VectorXd kap(q);
    for (Index k = 0; k < q; ++k) {
      const Family& f = fam[static_cast<std::size_t>(k)];
      switch (f.kind) {
        case FamilyKind::Gaussian:
          kap(k) = 1.0 / P.phi(k);
          break;
        case FamilyKind::Bernoulli:
          kap(k) = 0.25;
          break;
        case FamilyKind::Poisson: {
          double tmax = -kPoissonThetaMax;
          for (Index i = 0; i < n; ++i) {
            if (weight_at(cfg.W, i, k) > 0.0) tmax = std::max(tmax, Th(i, k));
          }
          for (Index i = 0; i < ThT.rows(); ++i) {
            if (weight_at(cfg.Wtilde, i, k) > 0.0) tmax = std::max(tmax, ThT(i, k));
          }
          kap(k) = std::exp(std::min(tmax, kPoissonThetaMax));
          break;
        }
      }
    }
    return kap;
  };
  const auto phi_step = [&] {
    const auto [Th, ThT] = thetas(P.A, B, P.mu, P.Ltilde);
    double pooled_ss = 0.0;
    double pooled_w = 0.0;
    for (Index k = 0; k < q; ++k) {
      if (!fam[static_cast<std::size_t>(k)].dispersion_free()) {
        P.phi(k) = 1.0;
        continue;
      }
      double ss = 0.0;
      for (Index i = 0; i < n; ++i) ss += weight_at(cfg.W, i, k) * std::pow(Y(i, k) - Th(i, k), 2);
      if (single) {
        for (Index i = 0; i < n1; ++i) ss += lam * weight_at(cfg.Wtilde, i, k) * std::pow(Yt(i, k) - ThT(i, k), 2);
      }
      P.phi(k) = col_w(k) > 0.0 ? std::max(ss / col_w(k), kPhiFloor) : 1.0;
      pooled_ss += ss;
      pooled_w += col_w(k);
    }
    if (cfg.shared_dispersion && pooled_w > 0.0) {
      const double shared = std::max(pooled_ss / pooled_w, kPhiFloor);
      for (Index k = 0; k < q; ++k) {
        if (fam[static_cast<std::size_t>(k)].dispersion_free()) P.phi(k) = shared;
      }
    }
  };

  if (P.phi.size() != q) P.phi = VectorXd::Ones(q);
  if (!init) phi_step();
  double L = obj(P.A, B, P.mu, P.Ltilde);
  if (!std::isfinite(L)) throw DivergenceError("initial objective is not finite");
  P.objective_trace.push_back(L);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const double L_old = L;

    // A-step: majorize with kappa_max * diag(max_k w_ik) and take a scaled
    // Newton-type step through (X^T D X)^+.
    {
      const auto [Th, ThT] = thetas(P.A, B, P.mu, P.Ltilde);
      const VectorXd kap = curvature(Th, ThT);
      double kA = 0.0;
      for (Index k = 0; k < q; ++k) kA = std::max(kA, kap(k));
      const MatrixXd G = score_matrix(Y, Th, fam, P.phi, cfg.W);
      const MatrixXd dA = (gram_pinv * (X.transpose() * (G * B))) / kA;
      MatrixXd cand;
      backtrack(
          L, [&](double t) { cand = P.A + t * dA; return obj(cand, B, P.mu, P.Ltilde); },
          [&] { P.A = cand; });
    }

    // B-step: uniform-curvature majorizer, then Procrustes.
    {
      const auto [Th, ThT] = thetas(P.A, B, P.mu, P.Ltilde);
      const VectorXd kap = curvature(Th, ThT);
      double c = 0.0;
      double ct = 0.0;
      for (Index k = 0; k < q; ++k) {
        c = std::max(c, col_wY(k) * kap(k));
        ct = std::max(ct, col_wT(k) * kap(k));
      }
      const MatrixXd XA = X * P.A;
      const MatrixXd G = score_matrix(Y, Th, fam, P.phi, cfg.W);
      MatrixXd Gt;
      if (single) Gt = score_matrix(Yt, ThT, fam, P.phi, cfg.Wtilde);
      for (int h = 0; h <= kMaxHalvings; ++h, c *= 2.0, ct *= 2.0) {
        MatrixXd T = (c * (XA * B.transpose()) + G).transpose() * XA;
        if (single) T += lam * ((ct * (P.Ltilde * B.transpose()) + Gt).transpose() * P.Ltilde);
        const ProcrustesResult pr = procrustes_solve(T);
        const double cand = obj(P.A, pr.frame.cols(), P.mu, P.Ltilde);
        if (std::isfinite(cand) && cand <= L) {
          L = cand;
          B = pr.frame.cols();
          res.degenerate_procrustes = res.degenerate_procrustes || pr.degenerate_rank;
          break;
        }
      }
    }

    // mu-step: per-column Newton-type step with the curvature bound.
    {
      const auto [Th, ThT] = thetas(P.A, B, P.mu, P.Ltilde);
      const VectorXd kap = curvature(Th, ThT);
      VectorXd g = score_matrix(Y, Th, fam, P.phi, cfg.W).colwise().sum().transpose();
      if (single) g += lam * score_matrix(Yt, ThT, fam, P.phi, cfg.Wtilde).colwise().sum().transpose();
      VectorXd dmu(q);
      for (Index k = 0; k < q; ++k) {
        const double h = kap(k) * col_w(k);
        dmu(k) = h > 0.0 ? g(k) / h : 0.0;
      }
      VectorXd cand;
      backtrack(
          L, [&](double t) { cand = P.mu + t * dmu; return obj(P.A, B, cand, P.Ltilde); },
          [&] { P.mu = cand; });
    }

    // Lt-step: row-wise steps; lambda cancels between gradient and curvature.
    if (single) {
      const auto [Th, ThT] = thetas(P.A, B, P.mu, P.Ltilde);
      const VectorXd kap = curvature(Th, ThT);
      const MatrixXd Gt = score_matrix(Yt, ThT, fam, P.phi, cfg.Wtilde);
      const double gam = cfg.ltilde_ridge;
      MatrixXd dL = Gt * B - gam * P.Ltilde;
      for (Index i = 0; i < n1; ++i) {
        double d = gam;
        for (Index k = 0; k < q; ++k) d = std::max(d, weight_at(cfg.Wtilde, i, k) * kap(k) + gam);
        if (d > 0.0) {
          dL.row(i) /= d;
        } else {
          dL.row(i).setZero();
        }
      }
      MatrixXd cand;
      backtrack(
          L, [&](double t) { cand = P.Ltilde + t * dL; return obj(P.A, B, P.mu, cand); },
          [&] { P.Ltilde = cand; });
    }

    // phi-step: exact minimizer for Gaussian columns.
    {
      const VectorXd phi_old = P.phi;
      phi_step();
      const double cand = obj(P.A, B, P.mu, P.Ltilde);
      if (std::isfinite(cand) && cand <= L) {
        L = cand;
      } else {
        P.phi = phi_old;
      }
    }

    {
      const auto [Th, ThT] = thetas(P.A, B, P.mu, P.Ltilde);
      check_poisson_growth(Th, fam);
      check_poisson_growth(ThT, fam);
    }
    P.objective_trace.push_back(L);
    res.iterations = it + 1;
    if (converged_step(L_old, L, cfg.tolerance)) {
      res.converged = true;
      break;
    }
  }
  P.B = OrthonormalFrame::trusted(B);
  res.params = finish_single_scores(std::move(P), ds, single);
  return res;
}

FitResult fit_hirrr(const Dataset& ds, const FitConfig& cfg) {
  const bool unit = is_unit(cfg.W) && is_unit(cfg.Wtilde);
  if (unit && cfg.ltilde_ridge == 0.0 && ds.all_families(FamilyKind::Gaussian)) return fit_hirrr_gaussian(ds, cfg);
  if (unit && ds.all_families(FamilyKind::Bernoulli)) return fit_hirrr_binary(ds, cfg);
  return fit_hirrr_general(ds, cfg);
}

FitResult fit_rrr(const Dataset& ds, const FitConfig& cfg) {
  const Dataset sup = ds.without_single_records();
  FitConfig c = cfg;
  c.lambda = 0.0;
  c.Wtilde.resize(0, 0);
  FitResult res = fit_hirrr(sup, c);
  res.method = "rrr";
  return res;
}

GlmFit fit_glm_irls(const Family& family, const MatrixXd& X, const VectorXd& y, int max_iters, double tolerance) {
  const Index n = X.rows();
  const Index p = X.cols();
  if (y.size() != n) throw ArgumentError("fit_glm: y length must equal rows of X");
  for (Index i = 0; i < n; ++i) expfam::check_support(family, y(i));
  if (family.kind == FamilyKind::Bernoulli) {
    const double s = y.sum();
    if (s == 0.0 || s == static_cast<double>(n)) throw DegenerateInputError("outcome has a single class");
  }

  // Constant columns duplicate the intercept; they keep a zero coefficient.
  std::vector<Index> keep;
  for (Index j = 0; j < p; ++j) {
    if (n > 0 && X.col(j).maxCoeff() > X.col(j).minCoeff()) keep.push_back(j);
  }
  const auto pk = static_cast<Index>(keep.size());
  MatrixXd X1(n, pk + 1);
  X1.col(0).setOnes();
  for (Index j = 0; j < pk; ++j) X1.col(j + 1) = X.col(keep[static_cast<std::size_t>(j)]);

  GlmFit out;
  VectorXd beta = VectorXd::Zero(pk + 1);
  if (family.kind == FamilyKind::Gaussian) {
    beta = ColumnSpaceProjector(X1).solve(y);
    out.converged = true;
  } else {
    beta(0) = marginal_link(family, y.mean());
    double dev_old = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iters; ++it) {
      const VectorXd eta = X1 * beta;
      VectorXd w(n);
      VectorXd z(n);
      for (Index i = 0; i < n; ++i) {
        const double v = std::max(expfam::variance(family, eta(i)), 1e-12);
        w(i) = v;
        z(i) = eta(i) + (y(i) - expfam::mean(family, eta(i))) / v;
      }
      const VectorXd sw = w.array().sqrt();
      const MatrixXd Xw = sw.asDiagonal() * X1;
      beta = Eigen::CompleteOrthogonalDecomposition<MatrixXd>(Xw).solve(VectorXd(sw.cwiseProduct(z)));
      out.iterations = it + 1;
      double dev = 0.0;
      const VectorXd eta_new = X1 * beta;
      for (Index i = 0; i < n; ++i) dev -= expfam::log_density(family, y(i), eta_new(i), 1.0);
      if (std::abs(dev - dev_old) <= tolerance * (std::abs(dev) + tolerance)) {
        out.converged = true;
        break;
      }
      dev_old = dev;
    }
    if (family.kind == FamilyKind::Bernoulli) {
      const VectorXd eta = X1 * beta;
      for (Index i = 0; i < n; ++i) {
        const double m = expfam::plogis(eta(i));
        if (m < 1e-8 || m > 1.0 - 1e-8) {
          out.separation = true;
          break;
        }
      }
      if (out.separation) out.converged = false;
    }
  }
  out.intercept = beta(0);
  out.beta = VectorXd::Zero(p);
  for (Index j = 0; j < pk; ++j) out.beta(keep[static_cast<std::size_t>(j)]) = beta(j + 1);
  return out;
}

GlmFit fit_glm_logistic(const MatrixXd& X, const VectorXd& y, int max_iters, double tolerance) {
  return fit_glm_irls(Family::bernoulli(), X, y, max_iters, tolerance);
}

FitResult fit_glm(const Dataset& ds, const FitConfig& cfg) {
  if (!is_unit(cfg.W)) throw ArgumentError("fit_glm: weights are not supported");
  const Index p = ds.p();
  const Index q = ds.q();
  FitResult res;
  res.method = "glm";
  res.converged = true;
  ModelParams& P = res.params;
  P.A.resize(p, q);
  P.mu.resize(q);
  P.phi = VectorXd::Ones(q);
  for (Index k = 0; k < q; ++k) {
    const Family& f = ds.families[static_cast<std::size_t>(k)];
    const GlmFit g = fit_glm_irls(f, ds.X, ds.Y.col(k));
    P.A.col(k) = g.beta;
    P.mu(k) = g.intercept;
    res.converged = res.converged && g.converged;
    res.iterations = std::max(res.iterations, g.iterations);
    if (f.dispersion_free()) {
      const VectorXd r = (ds.Y.col(k) - ds.X * g.beta).array() - g.intercept;
      P.phi(k) = std::max(r.squaredNorm() / static_cast<double>(ds.n()), kPhiFloor);
    }
  }
  P.B = OrthonormalFrame::trusted(MatrixXd::Identity(q, q));
  P.Ltilde = MatrixXd(0, q);
  FitConfig c = cfg;
  c.lambda = 0.0;
  P.objective_trace.push_back(hirrr_objective(ds.without_single_records(), c, P));
  return res;
}

Prediction predict(const ModelParams& params, const MatrixXd& Xnew, const std::vector<Family>& families) {
  if (static_cast<Index>(families.size()) != params.B.rows()) {
    throw ArgumentError("predict: families length does not match the model");
  }
  Prediction out;
  out.theta = params.theta(Xnew);
  out.means.resize(out.theta.rows(), out.theta.cols());
  for (Index k = 0; k < out.theta.cols(); ++k) {
    const Family& f = families[static_cast<std::size_t>(k)];
    for (Index i = 0; i < out.theta.rows(); ++i) out.means(i, k) = expfam::mean(f, out.theta(i, k));
  }
  return out;
}

MatrixXd standardized_coefficients(const ModelParams& params, const VectorXd& feature_sd) {
  if (feature_sd.size() != params.A.rows()) throw ArgumentError("feature_sd length must equal p");
  if ((feature_sd.array() < 0.0).any()) throw ArgumentError("feature_sd must be non-negative");
  return feature_sd.asDiagonal() * params.coefficients();
}

VectorXd column_sd(const MatrixXd& X) {
  const Index n = X.rows();
  if (n == 0) return VectorXd::Zero(X.cols());
  const Eigen::RowVectorXd m = X.colwise().mean();
  return ((X.rowwise() - m).colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
}

}  // namespace hirrr
