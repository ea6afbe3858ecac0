#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gad/anisotropic.hpp"
#include "gad/diffusion.hpp"
#include "gad/error.hpp"
#include "gad/graph.hpp"

namespace gad {

/// Handle to a value recorded on a GradientTape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over dense matrices.
///
/// Nodes are appended in execution order; backward() walks them in exact
/// reverse order and may run only once. Parameter leaves are bound to a slot
/// index so callers can read back one gradient per parameter.
class GradientTape {
 public:
  using Backward = std::function<void(GradientTape&, const Matrix&)>;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var parameter(std::size_t slot, Matrix value) {
    Var v = push(std::move(value), true, nullptr);
    bindings_.emplace_back(slot, v);
    return v;
  }

  /// Records an op. `inputs` decide whether the node needs a gradient at all.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(Var v, const Matrix& delta) {
    Node& node = nodes_[v.id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = delta;
    } else {
      node.grad += delta;
    }
  }

  void set_output(Var v) { output_ = v; has_output_ = true; }
  Var output() const {
    if (!has_output_) throw Error(ErrorKind::StateMismatch, "tape has no marked output");
    return output_;
  }

  bool consumed() const noexcept { return consumed_; }

  void backward(Var root, const Matrix& seed) {
    if (consumed_) throw Error(ErrorKind::TapeConsumed, "backward already ran on this tape");
    const Node& r = nodes_.at(root.id);
    if (seed.rows() != r.value.rows() || seed.cols() != r.value.cols()) {
      throw Error(ErrorKind::StateMismatch, "seed shape does not match root value");
    }
    consumed_ = true;
    accumulate(root, seed);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.size() == 0) continue;
      node.backward(*this, node.grad);
    }
  }

  /// Gradient of a node after backward(); zeros if nothing reached it.
  Matrix gradient(Var v) const {
    const Node& node = nodes_.at(v.id);
    if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  const std::vector<std::pair<std::size_t, Var>>& bindings() const noexcept { return bindings_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, Var>> bindings_;
  Var output_;
  bool has_output_ = false;
  bool consumed_ = false;
};

namespace ops {

inline Var matmul(GradientTape& tape, Var a, Var b) {
  return tape.record(tape.value(a) * tape.value(b), {a, b},
                     [a, b](GradientTape& t, const Matrix& g) {
                       if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
                       if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
                     });
}

inline Var add(GradientTape& tape, Var a, Var b) {
  return tape.record(tape.value(a) + tape.value(b), {a, b},
                     [a, b](GradientTape& t, const Matrix& g) {
                       t.accumulate(a, g);
                       t.accumulate(b, g);
                     });
}

/// x (n x w) plus a 1 x w bias broadcast over rows.
inline Var add_bias(GradientTape& tape, Var x, Var bias) {
  Matrix out = tape.value(x);
  out.rowwise() += tape.value(bias).row(0);
  return tape.record(std::move(out), {x, bias}, [x, bias](GradientTape& t, const Matrix& g) {
    t.accumulate(x, g);
    t.accumulate(bias, g.colwise().sum());
  });
}

inline Var relu(GradientTape& tape, Var x) {
  Matrix out = tape.value(x).cwiseMax(0.0);
  return tape.record(std::move(out), {x}, [x](GradientTape& t, const Matrix& g) {
    t.accumulate(x, (t.value(x).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

/// Elementwise product with a fixed mask (dropout).
inline Var mask(GradientTape& tape, Var x, Matrix keep) {
  Matrix out = tape.value(x).cwiseProduct(keep);
  auto shared = std::make_shared<Matrix>(std::move(keep));
  return tape.record(std::move(out), {x}, [x, shared](GradientTape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(*shared));
  });
}

inline Var concat_cols(GradientTape& tape, const std::vector<Var>& parts) {
  Eigen::Index rows = tape.value(parts.front()).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) cols += tape.value(p).cols();
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Matrix& v = tape.value(p);
    out.middleCols(offset, v.cols()) = v;
    offset += v.cols();
  }
  return tape.record(std::move(out), parts, [parts](GradientTape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (Var p : parts) {
      const Eigen::Index c = t.value(p).cols();
      t.accumulate(p, g.middleCols(off, c));
      off += c;
    }
  });
}

/// `m * x` for a constant matrix `m` (aggregation operators).
inline Var left_multiply(GradientTape& tape, std::shared_ptr<const Matrix> m, Var x) {
  return tape.record((*m) * tape.value(x), {x}, [m, x](GradientTape& t, const Matrix& g) {
    t.accumulate(x, m->transpose() * g);
  });
}

inline Var scale_rows(GradientTape& tape, const Vector& scale, Var x) {
  return tape.record(scale.asDiagonal() * tape.value(x), {x},
                     [scale, x](GradientTape& t, const Matrix& g) {
                       t.accumulate(x, scale.asDiagonal() * g);
                     });
}

inline Var sum_rows(GradientTape& tape, Var x) {
  const Eigen::Index rows = tape.value(x).rows();
  return tape.record(tape.value(x).colwise().sum(), {x},
                     [x, rows](GradientTape& t, const Matrix& g) {
                       t.accumulate(x, g.replicate(rows, 1));
                     });
}

inline Var mean_rows(GradientTape& tape, Var x) {
  const Eigen::Index rows = tape.value(x).rows();
  const double inv = 1.0 / static_cast<double>(rows);
  return tape.record(tape.value(x).colwise().sum() * inv, {x},
                     [x, rows, inv](GradientTape& t, const Matrix& g) {
                       t.accumulate(x, g.replicate(rows, 1) * inv);
                     });
}

struct NeighborVars {
  Var mean;
  Var max;
  Var min;
};

/// Records mean/max/min neighbour aggregation of `x`. `g` must outlive the tape.
inline NeighborVars neighbor_stats(GradientTape& tape, const Graph& g, Var x) {
  auto agg = std::make_shared<NeighborAggregates>(neighbor_aggregators(g, tape.value(x)));
  const Graph* graph = &g;
  NeighborVars out;
  out.mean = tape.record(agg->mean, {x}, [graph, x](GradientTape& t, const Matrix& grad) {
    Matrix dx = Matrix::Zero(grad.rows(), grad.cols());
    for (int i = 0; i < graph->node_count(); ++i) {
      const auto& nbrs = graph->neighbors(i);
      const double inv = 1.0 / static_cast<double>(nbrs.size());
      for (int j : nbrs) dx.row(j) += grad.row(i) * inv;
    }
    t.accumulate(x, dx);
  });
  auto routed = [agg, x](bool use_max) {
    return [agg, x, use_max](GradientTape& t, const Matrix& grad) {
      const Eigen::MatrixXi& arg = use_max ? agg->argmax : agg->argmin;
      Matrix dx = Matrix::Zero(grad.rows(), grad.cols());
      for (Eigen::Index i = 0; i < grad.rows(); ++i) {
        for (Eigen::Index c = 0; c < grad.cols(); ++c) dx(arg(i, c), c) += grad(i, c);
      }
      t.accumulate(x, dx);
    };
  };
  out.max = tape.record(agg->max, {x}, routed(true));
  out.min = tape.record(agg->min, {x}, routed(false));
  return out;
}

/// Channel-wise diffusion of `x` with times softplus(raw_times); raw_times is 1 x w.
inline Var diffuse(GradientTape& tape, Scheme scheme, const StructuralMatrices& sm,
                   const SpectralDecomposition* sd, Var x, Var raw_times) {
  DiffusionLayer layer;
  layer.scheme = scheme;
  layer.raw_times = tape.value(raw_times).row(0).transpose();
  auto out = std::make_shared<DiffusionOutput>(layer.forward(sm, sd, tape.value(x)));
  Matrix values = out->values;
  return tape.record(std::move(values), {x, raw_times},
                     [out, layer, x, raw_times](GradientTape& t, const Matrix& g) {
                       DiffusionGradients grads = layer.backward(*out, g);
                       t.accumulate(x, grads.grad_x);
                       t.accumulate(raw_times, grads.grad_raw_times.transpose());
                     });
}

}  // namespace ops
}  // namespace gad
