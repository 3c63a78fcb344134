#include "hirrr/matrix_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hirrr/errors.hpp"

namespace hirrr {

OrthonormalFrame::OrthonormalFrame(Eigen::MatrixXd cols, double tol) : cols_(std::move(cols)) {
  if (orthonormality_defect() > tol) {
    throw ArgumentError("OrthonormalFrame: columns are not orthonormal");
  }
}

OrthonormalFrame OrthonormalFrame::trusted(Eigen::MatrixXd cols) {
  OrthonormalFrame f;
  f.cols_ = std::move(cols);
  return f;
}

double OrthonormalFrame::orthonormality_defect() const {
  const auto r = cols_.cols();
  return (cols_.transpose() * cols_ - Eigen::MatrixXd::Identity(r, r)).norm();
}

ProcrustesResult procrustes_solve(const Eigen::MatrixXd& G) {
  const auto q = G.rows();
  const auto r = G.cols();
  if (q < r) throw ArgumentError("procrustes_solve: need rows >= cols");
  if (r == 0) return {OrthonormalFrame::trusted(Eigen::MatrixXd(q, 0)), false};

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double tol = static_cast<double>(q) * std::numeric_limits<double>::epsilon() *
                     std::max(s(0), std::numeric_limits<double>::min());
  ProcrustesResult out;
  out.degenerate_rank = s(r - 1) <= tol;
  // The thin SVD returns orthonormal U even for rank-deficient G, so U V^T is
  // still a valid frame.
  out.frame = OrthonormalFrame::trusted(svd.matrixU() * svd.matrixV().transpose());
  return out;
}

EigenResult top_eigenvectors(const Eigen::MatrixXd& M, Eigen::Index r) {
  const auto q = M.rows();
  if (M.cols() != q) throw ArgumentError("top_eigenvectors: matrix must be square");
  if (r < 1 || r > q) throw ArgumentError("top_eigenvectors: need 1 <= r <= q");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ArgumentError("top_eigenvectors: matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  // Eigen returns ascending eigenvalues.
  EigenResult out;
  Eigen::MatrixXd vecs(q, r);
  out.values.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    vecs.col(j) = es.eigenvectors().col(q - 1 - j);
    out.values(j) = es.eigenvalues()(q - 1 - j);
  }
  if (r < q) {
    const double next = es.eigenvalues()(q - 1 - r);
    out.tie_at_cutoff = std::abs(out.values(r - 1) - next) <= 1e-10 * std::max(1.0, std::abs(next));
  }
  out.vectors = OrthonormalFrame::trusted(std::move(vecs));
  return out;
}

ColumnSpaceProjector::ColumnSpaceProjector(const Eigen::MatrixXd& X) : n_(X.rows()), p_(X.cols()) {
  if (n_ < 1) throw ArgumentError("project_columnspace: need at least one row");
  if (p_ == 0) {
    U_.resize(n_, 0);
    V_.resize(0, 0);
    return;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = static_cast<double>(std::max(n_, p_)) *
                        std::numeric_limits<double>::epsilon() * s(0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > cutoff) ++rank;
  U_ = svd.matrixU().leftCols(rank);
  V_ = svd.matrixV().leftCols(rank);
  s_ = s.head(rank);
}

Eigen::MatrixXd ColumnSpaceProjector::apply(const Eigen::MatrixXd& V) const {
  if (V.rows() != n_) throw ArgumentError("ColumnSpaceProjector::apply: row mismatch");
  return U_ * (U_.transpose() * V);
}

Eigen::MatrixXd ColumnSpaceProjector::solve(const Eigen::MatrixXd& Y) const {
  if (Y.rows() != n_) throw ArgumentError("ColumnSpaceProjector::solve: row mismatch");
  if (rank() == 0) return Eigen::MatrixXd::Zero(p_, Y.cols());
  return V_ * (s_.cwiseInverse().asDiagonal() * (U_.transpose() * Y));
}

Eigen::MatrixXd ColumnSpaceProjector::gram_pinv() const {
  if (rank() == 0) return Eigen::MatrixXd::Zero(p_, p_);
  return V_ * s_.array().square().inverse().matrix().asDiagonal() * V_.transpose();
}

Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& M) {
  const auto p = M.rows();
  if (M.cols() != p) throw ArgumentError("psd_pinv: matrix must be square");
  if (p == 0) return M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const double cutoff = static_cast<double>(p) * std::numeric_limits<double>::epsilon() * top;
  Eigen::VectorXd inv(p);
  for (Eigen::Index i = 0; i < p; ++i) inv(i) = ev(i) > cutoff ? 1.0 / ev(i) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd weighted_gram_pinv(const Eigen::MatrixXd& X, const Eigen::VectorXd& d) {
  if (d.size() != X.rows()) throw ArgumentError("weighted_gram_pinv: weight length mismatch");
  if ((d.array() < 0.0).any()) throw ArgumentError("weighted_gram_pinv: negative weight");
  if (X.rows() == 0) return Eigen::MatrixXd::Zero(X.cols(), X.cols());
  const Eigen::MatrixXd Xd = d.array().sqrt().matrix().asDiagonal() * X;
  return ColumnSpaceProjector(Xd).gram_pinv();
}

}  // namespace hirrr
