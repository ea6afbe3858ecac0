#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gad/error.hpp"
#include "gad/graph.hpp"
#include "gad/numerics.hpp"
#include "gad/spectral.hpp"

namespace gad {

enum class Scheme { Implicit, Spectral };

inline std::string to_string(Scheme s) { return s == Scheme::Implicit ? "implicit" : "spectral"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "implicit") return Scheme::Implicit;
  if (s == "spectral") return Scheme::Spectral;
  throw Error(ErrorKind::ConfigError, "unknown scheme '" + s + "' (expected implicit|spectral)");
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
/// softplus^{-1}(1): raw time that maps to t = 1.
inline double unit_time_raw() { return std::log(std::exp(1.0) - 1.0); }

/// Forward result plus whatever the matching backward pass needs.
struct DiffusionOutput {
  Matrix values;
  Scheme scheme = Scheme::Implicit;
  Vector times;
  Vector degree;

  // Implicit: one factorization of D + t_c L per channel (empty at t_c = 0).
  std::vector<std::optional<SpdFactor>> factors;
  Matrix laplacian;

  // Spectral: Phi_k, Lambda_k and the coefficients Phi_k^T D x.
  Matrix basis;
  Vector eigenvalues;
  Matrix coefficients;
};

struct DiffusionGradients {
  Matrix grad_x;
  Vector grad_times;
  Vector grad_raw_times;
};

namespace detail {

inline void check_diffusion_inputs(const StructuralMatrices& sm, const Matrix& x,
                                   const Vector& times) {
  if (x.rows() != sm.degree_vector.size()) {
    throw Error(ErrorKind::GraphMismatch, "feature rows do not match graph size");
  }
  if (times.size() != x.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "need one diffusion time per channel");
  }
  if (!x.allFinite()) throw Error(ErrorKind::NonFiniteInput, "features contain NaN/Inf");
  for (Eigen::Index c = 0; c < times.size(); ++c) {
    if (!std::isfinite(times(c)) || times(c) < 0) {
      throw Error(ErrorKind::NonFiniteInput, "diffusion times must be finite and >= 0");
    }
  }
}

}  // namespace detail

/// One implicit Euler step per channel: (D + t_c L) h_c = D x_c.
inline DiffusionOutput diffuse_implicit(const StructuralMatrices& sm, const Matrix& x,
                                        const Vector& times) {
  detail::check_diffusion_inputs(sm, x, times);
  DiffusionOutput out;
  out.scheme = Scheme::Implicit;
  out.times = times;
  out.degree = sm.degree_vector;
  out.laplacian = sm.laplacian;
  out.values.resize(x.rows(), x.cols());
  out.factors.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (times(c) == 0.0) {
      out.values.col(c) = x.col(c);
      out.factors.emplace_back(std::nullopt);
      continue;
    }
    Matrix system = sm.laplacian * times(c);
    system.diagonal() += sm.degree_vector;
    try {
      out.factors.emplace_back(SpdFactor(system));
    } catch (const Error& e) {
      throw Error(ErrorKind::SolverFailure, e.what());
    }
    out.values.col(c) = out.factors.back()->solve(sm.degree_vector.cwiseProduct(x.col(c)));
  }
  return out;
}

/// Truncated heat operator per channel: Phi_k exp(-t_c Lambda_k) Phi_k^T D x_c.
inline DiffusionOutput diffuse_spectral(const SpectralDecomposition& sd,
                                        const StructuralMatrices& sm, const Matrix& x,
                                        const Vector& times) {
  if (sd.node_count() != sm.degree_vector.size()) {
    throw Error(ErrorKind::GraphMismatch, "decomposition and graph sizes disagree");
  }
  detail::check_diffusion_inputs(sm, x, times);
  DiffusionOutput out;
  out.scheme = Scheme::Spectral;
  out.times = times;
  out.degree = sm.degree_vector;
  out.basis = sd.eigenvectors();
  out.eigenvalues = sd.eigenvalues();
  out.coefficients = out.basis.transpose() * sm.degree_vector.asDiagonal() * x;
  Matrix damped = out.coefficients;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    damped.col(c).array() *= (-times(c) * out.eigenvalues.array()).exp();
  }
  out.values = out.basis * damped;
  return out;
}

/// Adjoint of diffuse_implicit / diffuse_spectral. `raw_times` are the
/// pre-softplus parameters; pass an empty vector to skip that chain step.
inline DiffusionGradients diffusion_backward(const DiffusionOutput& out, const Matrix& upstream,
                                             const Vector& raw_times = Vector()) {
  if (upstream.rows() != out.values.rows() || upstream.cols() != out.values.cols()) {
    throw Error(ErrorKind::StateMismatch, "upstream gradient shape does not match forward output");
  }
  if (raw_times.size() != 0 && raw_times.size() != out.times.size()) {
    throw Error(ErrorKind::StateMismatch, "raw time count does not match forward channels");
  }
  const Eigen::Index d = upstream.cols();
  DiffusionGradients grads;
  grads.grad_x.resize(upstream.rows(), d);
  grads.grad_times.resize(d);

  if (out.scheme == Scheme::Implicit) {
    if (static_cast<Eigen::Index>(out.factors.size()) != d) {
      throw Error(ErrorKind::StateMismatch, "implicit forward state is incomplete");
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto& factor = out.factors[static_cast<std::size_t>(c)];
      // y = (D + tL)^{-1} g; at t = 0 the system is D itself.
      Vector y = factor ? Vector(factor->solve(upstream.col(c)))
                        : Vector(upstream.col(c).cwiseQuotient(out.degree));
      grads.grad_x.col(c) = out.degree.cwiseProduct(y);
      grads.grad_times(c) = -y.dot(out.laplacian * out.values.col(c));
    }
  } else {
    const Matrix projected = out.basis.transpose() * upstream;
    Matrix damped = projected;
    for (Eigen::Index c = 0; c < d; ++c) {
      const Eigen::ArrayXd decay = (-out.times(c) * out.eigenvalues.array()).exp();
      damped.col(c).array() *= decay;
      grads.grad_times(c) = -(projected.col(c).array() * out.eigenvalues.array() * decay *
                              out.coefficients.col(c).array())
                                 .sum();
    }
    grads.grad_x = out.degree.asDiagonal() * (out.basis * damped);
  }

  if (raw_times.size() != 0) {
    grads.grad_raw_times.resize(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      grads.grad_raw_times(c) = grads.grad_times(c) * sigmoid(raw_times(c));
    }
  }
  return grads;
}

/// Learnable channel-wise diffusion: t_c = softplus(raw_times_c).
struct DiffusionLayer {
  Scheme scheme = Scheme::Implicit;
  Vector raw_times;
  int bandwidth = 20;

  Vector times() const { return raw_times.unaryExpr([](double r) { return softplus(r); }); }

  /// `sd` may be null for the implicit scheme.
  DiffusionOutput forward(const StructuralMatrices& sm, const SpectralDecomposition* sd,
                          const Matrix& x) const {
    if (raw_times.size() != x.cols()) {
      throw Error(ErrorKind::WidthMismatch, "diffusion layer has " +
                                                std::to_string(raw_times.size()) +
                                                " channels, input has " + std::to_string(x.cols()));
    }
    if (scheme == Scheme::Implicit) return diffuse_implicit(sm, x, times());
    if (sd == nullptr) {
      throw Error(ErrorKind::GraphMismatch, "spectral scheme needs a spectral decomposition");
    }
    return diffuse_spectral(*sd, sm, x, times());
  }

  DiffusionGradients backward(const DiffusionOutput& out, const Matrix& upstream) const {
    return diffusion_backward(out, upstream, raw_times);
  }
};

}  // namespace gad
