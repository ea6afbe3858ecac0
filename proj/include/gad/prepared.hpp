#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <utility>

#include "gad/anisotropic.hpp"
#include "gad/graph.hpp"
#include "gad/spectral.hpp"

namespace gad {

/// A graph with everything that depends only on its structure precomputed:
/// structural matrices, the truncated eigenbasis, the Fiedler vector and the
/// directional operators. Built once per graph and shared read-only across
/// layers, epochs and tapes.
struct PreparedGraph {
  Graph graph;
  StructuralMatrices matrices;
  SpectralDecomposition spectrum;
  Vector fiedler;
  std::shared_ptr<const Matrix> b_av;
  std::shared_ptr<const Matrix> b_dx;
  AnisotropicOperators operators;
};

/// `bandwidth` is clamped to [1, node_count]. Pass `fiedler_override` to build the
/// directional operators from a caller-chosen field instead.
inline PreparedGraph prepare_graph(Graph g, int bandwidth,
                                   std::optional<Vector> fiedler_override = std::nullopt) {
  StructuralMatrices sm = structural_matrices(g);
  const int k = std::clamp(bandwidth, 1, g.node_count());
  SpectralDecomposition sd = decompose(g, sm, k);
  Vector phi;
  if (fiedler_override) {
    phi = *fiedler_override;
  } else {
    phi = k >= 2 ? sd.fiedler() : decompose(g, sm, 2).fiedler();
  }
  AnisotropicOperators ops = build_operators(g, phi);
  auto av = std::make_shared<const Matrix>(ops.b_av);
  auto dx = std::make_shared<const Matrix>(ops.b_dx);
  return PreparedGraph{std::move(g), std::move(sm), std::move(sd), std::move(phi),
                       std::move(av), std::move(dx), std::move(ops)};
}

}  // namespace gad
