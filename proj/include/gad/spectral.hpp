#pragma once

#include <string>
#include <utility>

#include "gad/error.hpp"
#include "gad/graph.hpp"
#include "gad/numerics.hpp"

namespace gad {

/// Leading generalized eigenpairs of L phi = lambda D phi.
///
/// Columns of `eigenvectors` are D-orthonormal (Phi^T D Phi = I) and each is
/// sign-fixed so its dominant entry is positive.
class SpectralDecomposition {
 public:
  SpectralDecomposition(Vector eigenvalues, Matrix eigenvectors)
      : eigenvalues_(std::move(eigenvalues)), eigenvectors_(std::move(eigenvectors)) {}

  int bandwidth() const noexcept { return static_cast<int>(eigenvalues_.size()); }
  int node_count() const noexcept { return static_cast<int>(eigenvectors_.rows()); }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& eigenvectors() const noexcept { return eigenvectors_; }

  /// First non-constant eigenvector; requires bandwidth >= 2.
  Vector fiedler() const {
    if (bandwidth() < 2) {
      throw Error(ErrorKind::BandwidthOutOfRange,
                  "the Fiedler vector needs bandwidth >= 2, got " + std::to_string(bandwidth()));
    }
    return eigenvectors_.col(1);
  }

 private:
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

inline SpectralDecomposition decompose(const Graph& g, const StructuralMatrices& sm, int k) {
  const int n = g.node_count();
  if (k < 1 || k > n) {
    throw Error(ErrorKind::BandwidthOutOfRange,
                "bandwidth " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  if (!is_connected(g)) {
    throw Error(ErrorKind::DisconnectedGraph, "spectral decomposition needs a connected graph");
  }
  const Vector inv_sqrt_deg = sm.degree_vector.cwiseSqrt().cwiseInverse();
  const Matrix l_sym = inv_sqrt_deg.asDiagonal() * sm.laplacian * inv_sqrt_deg.asDiagonal();
  const EigenDecomposition eig = sym_eig(l_sym);

  Matrix phi = inv_sqrt_deg.asDiagonal() * eig.eigenvectors.leftCols(k);
  for (int c = 0; c < k; ++c) fix_sign(phi.col(c));
  return SpectralDecomposition(eig.eigenvalues.head(k), std::move(phi));
}

inline SpectralDecomposition decompose(const Graph& g, int k) {
  return decompose(g, structural_matrices(g), k);
}

inline Vector fiedler_vector(const Graph& g) { return decompose(g, 2).fiedler(); }

}  // namespace gad
