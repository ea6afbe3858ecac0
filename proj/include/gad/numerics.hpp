#pragma once

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gad/error.hpp"
#include "gad/graph.hpp"

namespace gad {

struct EigenDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // column i pairs with eigenvalues(i)
};

inline double inf_norm(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Index of the largest-magnitude entry. Entries within a relative 1e-9 of
/// the maximum count as tied and the lowest index wins, so the choice is
/// stable under rounding noise and under negation of `v`.
template <typename Derived>
int dominant_index(const Eigen::MatrixBase<Derived>& v) {
  const double peak = v.cwiseAbs().maxCoeff();
  const double cutoff = peak * (1.0 - 1e-9);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= cutoff) return static_cast<int>(i);
  }
  return 0;
}

/// Flips `v` in place so its dominant entry is positive.
template <typename Derived>
void fix_sign(Eigen::MatrixBase<Derived>&& v) {
  if (v.size() == 0) return;
  if (v(dominant_index(v)) < 0) v = -v;
}

template <typename Derived>
void fix_sign(Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) return;
  if (v(dominant_index(v)) < 0) v = -v;
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Backed by Eigen's tridiagonal QR solver. Eigenvalues come back in
/// ascending order and every eigenvector is sign-fixed with fix_sign().
inline EigenDecomposition sym_eig(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw Error(ErrorKind::NotSymmetric, "sym_eig needs a non-empty square matrix");
  }
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::NotSymmetric, "matrix is not symmetric");
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::ConvergenceFailure, "symmetric eigensolver did not converge");
  }
  EigenDecomposition out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < out.eigenvectors.cols(); ++c) fix_sign(out.eigenvectors.col(c));
  return out;
}

/// Cholesky factorization of an SPD matrix, reusable across right-hand sides.
class SpdFactor {
 public:
  explicit SpdFactor(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw Error(ErrorKind::NotPositiveDefinite, "spd factorization needs a square matrix");
    }
    llt_.compute(m);
    if (llt_.info() != Eigen::Success) {
      throw Error(ErrorKind::NotPositiveDefinite, "nonpositive pivot during Cholesky");
    }
  }

  template <typename Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    return llt_.solve(rhs);
  }

 private:
  Eigen::LLT<Matrix> llt_;
};

inline Matrix spd_solve(const Matrix& m, const Matrix& rhs) {
  if (rhs.rows() != m.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "rhs row count does not match matrix");
  }
  return SpdFactor(m).solve(rhs);
}

/// exp(m) by scaling and squaring a truncated Taylor series.
///
/// Test oracle for the heat operator; deliberately shares nothing with the
/// eigen-based code paths.
inline Matrix expm_oracle(const Matrix& m) {
  constexpr Eigen::Index kMaxDim = 32;
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "expm_oracle needs a square matrix");
  }
  if (m.rows() > kMaxDim) {
    throw Error(ErrorKind::DimensionTooLarge,
                "expm_oracle limited to dimension " + std::to_string(kMaxDim));
  }
  const Eigen::Index n = m.rows();
  const double norm = inf_norm(m);
  int squarings = 0;
  if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
  const Matrix scaled = m / std::ldexp(1.0, squarings);

  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int j = 1; j <= 30; ++j) {
    term = term * scaled / static_cast<double>(j);
    result += term;
    if (inf_norm(term) <= 1e-18 * inf_norm(result)) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

}  // namespace gad
