#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gad/anisotropic.hpp"
#include "gad/diffusion.hpp"
#include "gad/error.hpp"
#include "gad/prepared.hpp"
#include "gad/tape.hpp"

namespace gad {

enum class Aggregator { Mean, Max, Min, Av, Dx };
enum class Pooling { Sum, Mean };

inline std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::Mean: return "mean";
    case Aggregator::Max: return "max";
    case Aggregator::Min: return "min";
    case Aggregator::Av: return "av";
    case Aggregator::Dx: return "dx";
  }
  return "?";
}

inline Aggregator parse_aggregator(const std::string& s) {
  if (s == "mean") return Aggregator::Mean;
  if (s == "max") return Aggregator::Max;
  if (s == "min") return Aggregator::Min;
  if (s == "av" || s == "av1" || s == "b_av") return Aggregator::Av;
  if (s == "dx" || s == "dx1" || s == "b_dx") return Aggregator::Dx;
  throw Error(ErrorKind::ConfigError, "unknown aggregator '" + s + "'");
}

inline bool is_directional(Aggregator a) { return a == Aggregator::Av || a == Aggregator::Dx; }

inline std::string to_string(Pooling p) { return p == Pooling::Sum ? "sum" : "mean"; }
inline Pooling parse_pooling(const std::string& s) {
  if (s == "sum") return Pooling::Sum;
  if (s == "mean") return Pooling::Mean;
  throw Error(ErrorKind::ConfigError, "unknown pooling '" + s + "'");
}

struct ModelConfig {
  int input_dim = 1;
  int target_dim = 1;
  int hidden_width = 16;
  int num_layers = 4;
  Scheme scheme = Scheme::Spectral;
  int bandwidth = 20;
  std::vector<Aggregator> aggregators{Aggregator::Mean, Aggregator::Av, Aggregator::Dx};
  std::vector<int> scalers{0, 1, -1};
  /// Whether degree scalers also apply to the av/dx outputs.
  bool scale_directional = true;
  Pooling pooling = Pooling::Sum;
  int mlp_layers = 2;
  int readout_layers = 2;
  double dropout = 0.0;

  /// Width of the concatenation fed to each block MLP.
  int block_input_width() const {
    int copies = 1;
    for (Aggregator a : aggregators) {
      copies += (is_directional(a) && !scale_directional) ? 1 : static_cast<int>(scalers.size());
    }
    return hidden_width * copies;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
    if (input_dim < 1) fail("input_dim must be >= 1");
    if (target_dim < 1) fail("target_dim must be >= 1");
    if (hidden_width < 1) fail("hidden_width must be >= 1");
    if (num_layers < 0) fail("num_layers must be >= 0");
    if (bandwidth < 1) fail("bandwidth must be >= 1");
    if (mlp_layers < 1 || readout_layers < 1) fail("MLP depth must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
    if (!aggregators.empty() && scalers.empty()) fail("scaler set must not be empty");
    for (int a : scalers) {
      if (a < -1 || a > 1) fail("degree scaler exponents must be in {-1, 0, 1}");
    }
  }
};

struct BlockParams {
  Matrix raw_times;  // 1 x w, t_c = softplus(raw_times_c)
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
};

template <typename M>
struct ParamView {
  std::string name;
  M* value;
};

struct GadModel {
  ModelConfig config;
  /// Dataset average of log(deg + 1), the degree scaler normalizer.
  double degree_delta = 1.0;
  std::uint64_t seed = 0;

  Matrix embed_weight;
  Matrix embed_bias;
  std::vector<BlockParams> blocks;
  std::vector<Matrix> readout_weights;
  std::vector<Matrix> readout_biases;

  /// Every trainable tensor in a fixed order shared by gradients, optimizer
  /// state and checkpoints.
  std::vector<ParamView<Matrix>> parameters() { return collect<Matrix>(*this); }
  std::vector<ParamView<const Matrix>> parameters() const { return collect<const Matrix>(*this); }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters()) total += static_cast<std::size_t>(p.value->size());
    return total;
  }

  /// Zero-initialized model with the right shapes.
  static GadModel zeros(const ModelConfig& cfg, double delta) {
    cfg.validate();
    GadModel m;
    m.config = cfg;
    m.degree_delta = delta;
    const int w = cfg.hidden_width;
    m.embed_weight = Matrix::Zero(cfg.input_dim, w);
    m.embed_bias = Matrix::Zero(1, w);
    for (int b = 0; b < cfg.num_layers; ++b) {
      BlockParams bp;
      bp.raw_times = Matrix::Zero(1, w);
      int fan_in = cfg.block_input_width();
      for (int l = 0; l < cfg.mlp_layers; ++l) {
        bp.weights.push_back(Matrix::Zero(fan_in, w));
        bp.biases.push_back(Matrix::Zero(1, w));
        fan_in = w;
      }
      m.blocks.push_back(std::move(bp));
    }
    for (int l = 0; l < cfg.readout_layers; ++l) {
      const int out = (l + 1 == cfg.readout_layers) ? cfg.target_dim : w;
      m.readout_weights.push_back(Matrix::Zero(w, out));
      m.readout_biases.push_back(Matrix::Zero(1, out));
    }
    return m;
  }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero, t = 1 in every channel.
  static GadModel create(const ModelConfig& cfg, double delta, std::uint64_t seed) {
    GadModel m = zeros(cfg, delta);
    m.seed = seed;
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& w) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
      }
    };
    fill(m.embed_weight);
    for (auto& b : m.blocks) {
      b.raw_times.setConstant(unit_time_raw());
      for (auto& w : b.weights) fill(w);
    }
    for (auto& w : m.readout_weights) fill(w);
    return m;
  }

 private:
  template <typename M, typename Self>
  static std::vector<ParamView<M>> collect(Self& self) {
    std::vector<ParamView<M>> out;
    out.push_back({"embed.weight", &self.embed_weight});
    out.push_back({"embed.bias", &self.embed_bias});
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
      auto& blk = self.blocks[b];
      const std::string prefix = "block" + std::to_string(b) + ".";
      out.push_back({prefix + "raw_times", &blk.raw_times});
      for (std::size_t l = 0; l < blk.weights.size(); ++l) {
        out.push_back({prefix + "mlp" + std::to_string(l) + ".weight", &blk.weights[l]});
        out.push_back({prefix + "mlp" + std::to_string(l) + ".bias", &blk.biases[l]});
      }
    }
    for (std::size_t l = 0; l < self.readout_weights.size(); ++l) {
      out.push_back({"readout.mlp" + std::to_string(l) + ".weight", &self.readout_weights[l]});
      out.push_back({"readout.mlp" + std::to_string(l) + ".bias", &self.readout_biases[l]});
    }
    return out;
  }
};

/// One gradient tensor per entry of GadModel::parameters(), same order.
using Gradients = std::vector<Matrix>;

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
};

/// Tape handles of one block's parameters.
struct BlockVars {
  Var raw_times;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

namespace detail {

inline Var mlp(GradientTape& tape, Var x, const std::vector<Var>& weights,
               const std::vector<Var>& biases, double dropout, const ForwardOptions& opts) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    x = ops::add_bias(tape, ops::matmul(tape, x, weights[l]), biases[l]);
    if (l + 1 == weights.size()) break;
    x = ops::relu(tape, x);
    if (opts.training && dropout > 0.0) {
      if (opts.rng == nullptr) {
        throw Error(ErrorKind::ConfigError, "dropout during training needs an RNG");
      }
      const Matrix& v = tape.value(x);
      Matrix keep(v.rows(), v.cols());
      std::bernoulli_distribution coin(1.0 - dropout);
      const double scale = 1.0 / (1.0 - dropout);
      for (Eigen::Index j = 0; j < keep.cols(); ++j) {
        for (Eigen::Index i = 0; i < keep.rows(); ++i) keep(i, j) = coin(*opts.rng) ? scale : 0.0;
      }
      x = ops::mask(tape, x, std::move(keep));
    }
  }
  return x;
}

}  // namespace detail

/// One block: diffuse, ReLU, aggregate, concatenate with the diffused
/// signal, MLP, then add the block input back.
inline Var block_forward(const ModelConfig& cfg, double degree_delta, const BlockVars& params,
                         const PreparedGraph& pg, Var h_in, GradientTape& tape,
                         const ForwardOptions& opts = {}) {
  const Matrix& input = tape.value(h_in);
  if (input.cols() != cfg.hidden_width || input.rows() != pg.graph.node_count()) {
    throw Error(ErrorKind::WidthMismatch, "block input is " + std::to_string(input.rows()) + "x" +
                                              std::to_string(input.cols()) + ", expected width " +
                                              std::to_string(cfg.hidden_width));
  }
  if (tape.value(params.weights.front()).rows() != cfg.block_input_width()) {
    throw Error(ErrorKind::WidthMismatch, "block MLP input width does not match aggregators");
  }

  const SpectralDecomposition* sd = cfg.scheme == Scheme::Spectral ? &pg.spectrum : nullptr;
  Var diffused = ops::diffuse(tape, cfg.scheme, pg.matrices, sd, h_in, params.raw_times);
  Var active = ops::relu(tape, diffused);

  std::vector<Var> parts{diffused};
  if (!cfg.aggregators.empty()) {
    std::vector<Vector> scale_factors;
    for (int alpha : cfg.scalers) {
      scale_factors.push_back(degree_scale_factors(pg.graph, degree_delta, alpha));
    }
    std::optional<ops::NeighborVars> nbr;
    for (Aggregator a : cfg.aggregators) {
      Var agg;
      switch (a) {
        case Aggregator::Mean:
        case Aggregator::Max:
        case Aggregator::Min:
          if (!nbr) nbr = ops::neighbor_stats(tape, pg.graph, active);
          agg = a == Aggregator::Mean ? nbr->mean : (a == Aggregator::Max ? nbr->max : nbr->min);
          break;
        case Aggregator::Av: agg = ops::left_multiply(tape, pg.b_av, active); break;
        case Aggregator::Dx: agg = ops::left_multiply(tape, pg.b_dx, active); break;
      }
      if (is_directional(a) && !cfg.scale_directional) {
        parts.push_back(agg);
        continue;
      }
      for (std::size_t s = 0; s < cfg.scalers.size(); ++s) {
        parts.push_back(cfg.scalers[s] == 0 ? agg : ops::scale_rows(tape, scale_factors[s], agg));
      }
    }
  }
  Var concat = parts.size() == 1 ? parts.front() : ops::concat_cols(tape, parts);
  Var update = detail::mlp(tape, concat, params.weights, params.biases, cfg.dropout, opts);
  Var out = ops::add(tape, update, h_in);
  if (!tape.value(out).allFinite()) {
    throw Error(ErrorKind::NonFiniteActivation, "block produced NaN/Inf activations");
  }
  return out;
}

/// Records the full forward pass, binds every parameter to its slot and
/// marks the prediction (1 x target_dim) as the tape output.
inline Vector model_forward(const GadModel& model, const PreparedGraph& pg, GradientTape& tape,
                            const ForwardOptions& opts = {}) {
  const ModelConfig& cfg = model.config;
  if (pg.graph.feature_dim() != cfg.input_dim) {
    throw Error(ErrorKind::WidthMismatch, "graph has " + std::to_string(pg.graph.feature_dim()) +
                                              " features, model expects " +
                                              std::to_string(cfg.input_dim));
  }
  std::size_t slot = 0;
  auto bind = [&](const Matrix& m) { return tape.parameter(slot++, m); };

  Var embed_w = bind(model.embed_weight);
  Var embed_b = bind(model.embed_bias);
  Var x = tape.constant(pg.graph.node_features());
  Var h = ops::add_bias(tape, ops::matmul(tape, x, embed_w), embed_b);

  for (const BlockParams& bp : model.blocks) {
    BlockVars vars;
    vars.raw_times = bind(bp.raw_times);
    for (std::size_t l = 0; l < bp.weights.size(); ++l) {
      vars.weights.push_back(bind(bp.weights[l]));
      vars.biases.push_back(bind(bp.biases[l]));
    }
    h = block_forward(cfg, model.degree_delta, vars, pg, h, tape, opts);
  }

  Var pooled = cfg.pooling == Pooling::Sum ? ops::sum_rows(tape, h) : ops::mean_rows(tape, h);
  std::vector<Var> rw, rb;
  for (std::size_t l = 0; l < model.readout_weights.size(); ++l) {
    rw.push_back(bind(model.readout_weights[l]));
    rb.push_back(bind(model.readout_biases[l]));
  }
  ForwardOptions readout_opts = opts;
  Var pred = detail::mlp(tape, pooled, rw, rb, 0.0, readout_opts);
  tape.set_output(pred);
  return tape.value(pred).row(0).transpose();
}

/// Back-propagates dLoss/dPrediction through the tape recorded by model_forward.
inline Gradients model_backward(const GadModel& model, GradientTape& tape,
                                const Vector& loss_grad) {
  tape.backward(tape.output(), loss_grad.transpose());
  const auto params = model.parameters();
  Gradients grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads[i] = Matrix::Zero(params[i].value->rows(), params[i].value->cols());
  }
  for (auto [slot, var] : tape.bindings()) grads.at(slot) = tape.gradient(var);
  return grads;
}

/// Forward-only prediction (no gradients kept beyond the local tape).
inline Vector predict(const GadModel& model, const PreparedGraph& pg) {
  GradientTape tape;
  return model_forward(model, pg, tape);
}

struct LossValue {
  double loss;
  Vector grad;
};

/// Mean absolute error; subgradient 0 where prediction equals target.
inline LossValue mae_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw Error(ErrorKind::LengthMismatch, "prediction length " + std::to_string(pred.size()) +
                                               " vs target length " +
                                               std::to_string(target.size()));
  }
  const double inv = 1.0 / static_cast<double>(pred.size());
  LossValue out{0.0, Vector(pred.size())};
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double diff = pred(i) - target(i);
    out.loss += std::abs(diff);
    out.grad(i) = diff > 0 ? inv : (diff < 0 ? -inv : 0.0);
  }
  out.loss *= inv;
  return out;
}

struct AdamHyper {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// Adam with decoupled weight decay: p <- p (1 - lr wd), then the
/// bias-corrected Adam step.
inline void optimizer_step(GadModel& model, const Gradients& grads, AdamState& state,
                           const AdamHyper& hyper) {
  auto params = model.parameters();
  if (grads.size() != params.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient count does not match parameter count");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      state.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].value;
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw Error(ErrorKind::DimensionMismatch, "gradient shape mismatch for " + params[i].name);
    }
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (hyper.weight_decay != 0.0) p *= (1.0 - hyper.lr * hyper.weight_decay);
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseAbs2();
    const Eigen::ArrayXXd m_hat = m.array() / c1;
    const Eigen::ArrayXXd v_hat = v.array() / c2;
    p.array() -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
  }
}

/// Per-block learned times softplus(raw_times), one row per block.
inline std::vector<Vector> learned_times(const GadModel& model) {
  std::vector<Vector> out;
  for (const auto& b : model.blocks) {
    out.push_back(b.raw_times.row(0).transpose().unaryExpr([](double r) { return softplus(r); }));
  }
  return out;
}

}  // namespace gad
