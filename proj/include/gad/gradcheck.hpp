#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gad/diffusion.hpp"
#include "gad/model.hpp"
#include "gad/prepared.hpp"

namespace gad {

/// Finite-difference comparison summary.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // label of the worst entry
};

/// |a - f| / max(|a|, |f|, floor). The floor keeps entries whose true
/// gradient is ~0 from reporting pure round-off as relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

constexpr double kFiniteDifferenceStep = 1e-5;

/// Random tree on `n` nodes plus `extra` random chords.
inline Graph random_connected_graph(int n, int extra, int feature_dim, std::mt19937_64& rng) {
  std::set<Edge> edges;
  for (int i = 1; i < n; ++i) edges.emplace(std::uniform_int_distribution<int>(0, i - 1)(rng), i);
  std::uniform_int_distribution<int> node(0, n - 1);
  for (int e = 0; e < extra; ++e) {
    const int u = node(rng);
    const int v = node(rng);
    if (u != v) edges.emplace(std::min(u, v), std::max(u, v));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, feature_dim);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal(rng);
  }
  return build_graph(n, std::vector<Edge>(edges.begin(), edges.end()), x);
}

/// Checks d/d(raw_times) and d/dx of sum(upstream .* h) for one scheme over
/// `trials` random graphs.
inline GradCheckReport check_diffusion_gradients(Scheme scheme, std::uint64_t seed,
                                                  int trials = 10) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GradCheckReport report;
  auto note = [&report](double err, const std::string& label) {
    ++report.entries;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = label;
    }
  };
  for (int trial = 0; trial < trials; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 12)(rng);
    const int d = std::uniform_int_distribution<int>(1, 4)(rng);
    const PreparedGraph pg = prepare_graph(random_connected_graph(n, n / 2, d, rng),
                                           std::uniform_int_distribution<int>(1, n)(rng));
    DiffusionLayer layer;
    layer.scheme = scheme;
    layer.raw_times.resize(d);
    for (int c = 0; c < d; ++c) layer.raw_times(c) = std::uniform_real_distribution<double>(-3.0, 2.0)(rng);
    const Matrix& x = pg.graph.node_features();
    Matrix upstream(n, d);
    for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
      for (Eigen::Index i = 0; i < upstream.rows(); ++i) upstream(i, j) = normal(rng);
    }
    const SpectralDecomposition* sd = scheme == Scheme::Spectral ? &pg.spectrum : nullptr;
    auto objective = [&](const DiffusionLayer& l, const Matrix& input) {
      return upstream.cwiseProduct(l.forward(pg.matrices, sd, input).values).sum();
    };
    const DiffusionOutput out = layer.forward(pg.matrices, sd, x);
    const DiffusionGradients grads = layer.backward(out, upstream);
    const std::string tag = "trial" + std::to_string(trial) + "." + to_string(scheme);

    for (int c = 0; c < d; ++c) {
      DiffusionLayer plus = layer;
      DiffusionLayer minus = layer;
      plus.raw_times(c) += kFiniteDifferenceStep;
      minus.raw_times(c) -= kFiniteDifferenceStep;
      const double fd = (objective(plus, x) - objective(minus, x)) / (2 * kFiniteDifferenceStep);
      note(relative_error(grads.grad_raw_times(c), fd), tag + ".raw_times[" + std::to_string(c) + "]");
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        Matrix xp = x;
        Matrix xm = x;
        xp(i, c) += kFiniteDifferenceStep;
        xm(i, c) -= kFiniteDifferenceStep;
        const double fd = (objective(layer, xp) - objective(layer, xm)) / (2 * kFiniteDifferenceStep);
        note(relative_error(grads.grad_x(i, c), fd),
             tag + ".x[" + std::to_string(i) + "," + std::to_string(c) + "]");
      }
    }
  }
  return report;
}

/// Small model used by the end-to-end gradient check: 2 blocks of width 4,
/// every aggregator and scaler enabled, non-trivial biases and times.
inline GadModel gradcheck_model(Scheme scheme, int input_dim, int target_dim, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.target_dim = target_dim;
  cfg.hidden_width = 4;
  cfg.num_layers = 2;
  cfg.scheme = scheme;
  cfg.bandwidth = 4;
  cfg.aggregators = {Aggregator::Mean, Aggregator::Max, Aggregator::Min, Aggregator::Av,
                     Aggregator::Dx};
  cfg.scalers = {0, 1, -1};
  GadModel model = GadModel::create(cfg, 0.9, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : model.parameters()) {
    if (p.name.find("bias") != std::string::npos || p.name.find("raw_times") != std::string::npos) {
      for (Eigen::Index i = 0; i < p.value->size(); ++i) p.value->data()[i] += u(rng);
    }
  }
  return model;
}

/// Central differences on every parameter entry of `model` for the scalar
/// loss r . prediction(graph).
inline GradCheckReport check_model_gradients(const GadModel& model, const PreparedGraph& pg,
                                             const Vector& r) {
  GradientTape tape;
  model_forward(model, pg, tape);
  const Gradients grads = model_backward(model, tape, r);
  GadModel probe = model;
  auto params = probe.parameters();
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = *params[p].value;
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + kFiniteDifferenceStep;
      const double up = r.dot(predict(probe, pg));
      value.data()[k] = saved - kFiniteDifferenceStep;
      const double down = r.dot(predict(probe, pg));
      value.data()[k] = saved;
      const double fd = (up - down) / (2 * kFiniteDifferenceStep);
      const double err = relative_error(grads[p].data()[k], fd);
      ++report.entries;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = params[p].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return report;
}

/// The full end-to-end check: a width-4, 2-block model on a random 5-node graph.
inline GradCheckReport check_model_gradients(Scheme scheme, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const PreparedGraph pg = prepare_graph(random_connected_graph(5, 2, 2, rng), 5);
  const GadModel model = gradcheck_model(scheme, 2, 2, seed);
  Vector r(2);
  r << 0.7, -1.3;
  return check_model_gradients(model, pg, r);
}

}  // namespace gad
