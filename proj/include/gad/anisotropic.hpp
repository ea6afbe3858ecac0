#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gad/error.hpp"
#include "gad/graph.hpp"

namespace gad {

/// Fiedler-gradient field and the directional aggregation matrices built from it.
struct AnisotropicOperators {
  Matrix field;             // F = A .* (phi_i - phi_j)
  Matrix field_normalized;  // F with each row scaled to unit L1 norm
  Matrix b_av;              // |F_hat|
  Matrix b_dx;              // F_hat - diag(row sums of F_hat)
};

/// Field differences below `relative_tolerance * max|phi|` are treated as
/// exact zeros, so nodes that are symmetric under the Fiedler vector do not
/// pick up a direction from rounding noise.
inline AnisotropicOperators build_operators(const Graph& g, const Vector& phi,
                                            double relative_tolerance = 1e-10) {
  const int n = g.node_count();
  if (phi.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "Fiedler vector length " +
                                                  std::to_string(phi.size()) + " != node count " +
                                                  std::to_string(n));
  }
  const double cutoff = relative_tolerance * (n > 0 ? phi.cwiseAbs().maxCoeff() : 0.0);

  AnisotropicOperators ops;
  ops.field = Matrix::Zero(n, n);
  for (auto [u, v] : g.edges()) {
    const double diff = phi(u) - phi(v);
    if (std::abs(diff) <= cutoff) continue;
    ops.field(u, v) = diff;
    ops.field(v, u) = -diff;
  }

  ops.field_normalized = ops.field;
  for (int i = 0; i < n; ++i) {
    const double l1 = ops.field.row(i).cwiseAbs().sum();
    if (l1 > 0) ops.field_normalized.row(i) /= l1;
  }
  ops.b_av = ops.field_normalized.cwiseAbs();
  ops.b_dx = ops.field_normalized;
  ops.b_dx.diagonal() -= ops.field_normalized.rowwise().sum();
  return ops;
}

inline std::pair<Matrix, Matrix> apply_directional(const AnisotropicOperators& ops,
                                                   const Matrix& h) {
  if (h.rows() != ops.b_av.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "signal rows do not match operator size");
  }
  return {ops.b_av * h, ops.b_dx * h};
}

/// Entrywise neighbour statistics. `argmax`/`argmin` record the winning
/// neighbour per (node, channel), lowest index on ties, for the backward pass.
struct NeighborAggregates {
  Matrix mean;
  Matrix max;
  Matrix min;
  Eigen::MatrixXi argmax;
  Eigen::MatrixXi argmin;
};

inline NeighborAggregates neighbor_aggregators(const Graph& g, const Matrix& h) {
  const int n = g.node_count();
  if (h.rows() != n) {
    throw Error(ErrorKind::DimensionMismatch, "signal rows do not match graph size");
  }
  const Eigen::Index d = h.cols();
  NeighborAggregates out{Matrix(n, d), Matrix(n, d), Matrix(n, d), Eigen::MatrixXi(n, d),
                         Eigen::MatrixXi(n, d)};
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = g.neighbors(i);
    for (Eigen::Index c = 0; c < d; ++c) {
      double sum = 0.0;
      int best_hi = nbrs.front();
      int best_lo = nbrs.front();
      for (int j : nbrs) {
        const double value = h(j, c);
        sum += value;
        if (value > h(best_hi, c)) best_hi = j;
        if (value < h(best_lo, c)) best_lo = j;
      }
      out.mean(i, c) = sum / static_cast<double>(nbrs.size());
      out.max(i, c) = h(best_hi, c);
      out.min(i, c) = h(best_lo, c);
      out.argmax(i, c) = best_hi;
      out.argmin(i, c) = best_lo;
    }
  }
  return out;
}

/// Average of log(deg + 1) over every node of `graphs`.
template <typename GraphRange>
double average_log_degree(const GraphRange& graphs) {
  double total = 0.0;
  long long count = 0;
  for (const Graph& g : graphs) {
    for (int i = 0; i < g.node_count(); ++i) total += std::log(g.degree(i) + 1.0);
    count += g.node_count();
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

/// Per-node factor (log(deg_i + 1) / delta)^alpha.
inline Vector degree_scale_factors(const Graph& g, double delta, int alpha) {
  if (!(delta > 0) || !std::isfinite(delta)) {
    throw Error(ErrorKind::NonPositiveDelta, "degree scaler normalizer must be > 0");
  }
  Vector s(g.node_count());
  for (int i = 0; i < g.node_count(); ++i) {
    s(i) = std::pow(std::log(g.degree(i) + 1.0) / delta, alpha);
  }
  return s;
}

inline std::vector<Matrix> degree_scalers(const Graph& g, const Matrix& h, double delta,
                                          const std::vector<int>& alphas) {
  if (h.rows() != g.node_count()) {
    throw Error(ErrorKind::DimensionMismatch, "signal rows do not match graph size");
  }
  std::vector<Matrix> out;
  out.reserve(alphas.size());
  for (int alpha : alphas) {
    if (alpha < -1 || alpha > 1) {
      throw Error(ErrorKind::ConfigError, "degree scaler exponent must be -1, 0 or 1");
    }
    out.push_back(degree_scale_factors(g, delta, alpha).asDiagonal() * h);
  }
  return out;
}

}  // namespace gad
