#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace agewise {

using Matrix = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using ColVec = Eigen::VectorXd;

namespace linalg {

// Largest-modulus eigenvalue.  The matrices checked here are small and
// dense, and some are nilpotent (power iteration would stall on those), so
// the full eigensolver is the right tool.
inline double spectral_radius(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  return a.eigenvalues().cwiseAbs().maxCoeff();
}

// Solves x * m = rhs for a row vector x (i.e. m^T x^T = rhs^T) by dense LU.
// Warns on std::cerr when the estimated condition number exceeds 1e12 and
// throws if the matrix is singular to working precision.
inline RowVec solve_left(const Matrix& m, const RowVec& rhs) {
  Eigen::PartialPivLU<Matrix> lu(m.transpose());
  double rcond = lu.rcond();
  if (rcond == 0.0 || !std::isfinite(rcond)) {
    throw std::runtime_error("linalg: singular system in solve_left");
  }
  if (rcond < 1e-12) {
    std::cerr << "agewise: warning: ill-conditioned solve (cond ~ "
              << 1.0 / rcond << ")\n";
  }
  return lu.solve(rhs.transpose()).transpose();
}

// Solves m * x = rhs for a column vector x, with the same diagnostics.
inline ColVec solve_right(const Matrix& m, const ColVec& rhs) {
  Eigen::PartialPivLU<Matrix> lu(m);
  double rcond = lu.rcond();
  if (rcond == 0.0 || !std::isfinite(rcond)) {
    throw std::runtime_error("linalg: singular system in solve_right");
  }
  if (rcond < 1e-12) {
    std::cerr << "agewise: warning: ill-conditioned solve (cond ~ "
              << 1.0 / rcond << ")\n";
  }
  return lu.solve(rhs);
}

// Matrix right-hand-side variant of solve_right.
inline Matrix solve_right_mat(const Matrix& m, const Matrix& rhs) {
  Eigen::PartialPivLU<Matrix> lu(m);
  double rcond = lu.rcond();
  if (rcond == 0.0 || !std::isfinite(rcond)) {
    throw std::runtime_error("linalg: singular system in solve_right_mat");
  }
  if (rcond < 1e-12) {
    std::cerr << "agewise: warning: ill-conditioned solve (cond ~ "
              << 1.0 / rcond << ")\n";
  }
  return lu.solve(rhs);
}

// m^e by repeated multiplication (exponents here are bounded by the largest
// policy threshold, so there is no need for anything cleverer).
inline Matrix power(const Matrix& m, long long e) {
  if (e < 0) throw std::invalid_argument("linalg: negative matrix power");
  Matrix r = Matrix::Identity(m.rows(), m.cols());
  for (long long i = 0; i < e; ++i) r = r * m;
  return r;
}

inline bool is_probability_row(const RowVec& v, double tol = 1e-12) {
  if ((v.array() < -tol).any()) return false;
  return std::abs(v.sum() - 1.0) <= tol * std::max<double>(1.0, v.size());
}

inline bool is_substochastic(const Matrix& a, double tol = 1e-12) {
  if ((a.array() < -tol).any()) return false;
  return (a.rowwise().sum().array() <= 1.0 + tol).all();
}

}  // namespace linalg
}  // namespace agewise
