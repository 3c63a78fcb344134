#pragma once

#include <Eigen/Dense>

namespace hirrr {

/// q x r matrix with orthonormal columns.
class OrthonormalFrame {
 public:
  OrthonormalFrame() = default;
  /// Checks cols^T cols = I within `tol` (Frobenius); throws ArgumentError otherwise.
  explicit OrthonormalFrame(Eigen::MatrixXd cols, double tol = 1e-8);

  /// Skips the orthonormality check. For producers that construct the frame from an SVD/eigen basis.
  static OrthonormalFrame trusted(Eigen::MatrixXd cols);

  [[nodiscard]] const Eigen::MatrixXd& cols() const { return cols_; }
  [[nodiscard]] Eigen::Index rows() const { return cols_.rows(); }
  [[nodiscard]] Eigen::Index rank() const { return cols_.cols(); }
  /// || cols^T cols - I ||_F
  [[nodiscard]] double orthonormality_defect() const;
  [[nodiscard]] Eigen::MatrixXd projector() const { return cols_ * cols_.transpose(); }

 private:
  Eigen::MatrixXd cols_;
};

struct ProcrustesResult {
  OrthonormalFrame frame;
  bool degenerate_rank = false;  // target had rank < r; frame still valid
};

/// argmax_{B^T B = I} trace(B^T G) = U V^T from the thin SVD of G (q x r, q >= r).
ProcrustesResult procrustes_solve(const Eigen::MatrixXd& G);

struct EigenResult {
  OrthonormalFrame vectors;
  Eigen::VectorXd values;  // descending, length r
  bool tie_at_cutoff = false;  // lambda_r == lambda_{r+1} within 1e-10
};

/// Eigenvectors of the r largest eigenvalues of symmetric M.
EigenResult top_eigenvectors(const Eigen::MatrixXd& M, Eigen::Index r);

/// Thin, rank-thresholded SVD of a design matrix. Provides the projector onto
/// its column space, the minimum-norm least-squares solve, and (X^T X)^+.
/// Singular values below max(n,p) * eps * sigma_max are treated as zero.
class ColumnSpaceProjector {
 public:
  explicit ColumnSpaceProjector(const Eigen::MatrixXd& X);

  [[nodiscard]] Eigen::Index rank() const { return U_.cols(); }
  [[nodiscard]] Eigen::Index n() const { return n_; }
  [[nodiscard]] Eigen::Index p() const { return p_; }

  /// P_X * V for an n x k block V.
  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& V) const;
  /// X^+ * Y = (X^T X)^+ X^T Y.
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& Y) const;
  /// (X^T X)^+ as an explicit p x p matrix.
  [[nodiscard]] Eigen::MatrixXd gram_pinv() const;
  /// Orthonormal basis of the column space (n x rank).
  [[nodiscard]] const Eigen::MatrixXd& basis() const { return U_; }

 private:
  Eigen::Index n_ = 0;
  Eigen::Index p_ = 0;
  Eigen::MatrixXd U_;
  Eigen::VectorXd s_;
  Eigen::MatrixXd V_;
};

inline ColumnSpaceProjector project_columnspace(const Eigen::MatrixXd& X) {
  return ColumnSpaceProjector(X);
}

/// Moore-Penrose inverse of a symmetric positive semi-definite matrix.
Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& M);

/// (X^T diag(d) X)^+ for non-negative row weights d.
Eigen::MatrixXd weighted_gram_pinv(const Eigen::MatrixXd& X, const Eigen::VectorXd& d);

}  // namespace hirrr
