#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gad/error.hpp"

namespace gad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Undirected edge stored with `first < second`.
using Edge = std::pair<int, int>;

/// Immutable undirected graph with dense node features.
///
/// Construction goes through build_graph(), which deduplicates and
/// symmetrizes the edge list and rejects self-loops, out-of-range endpoints
/// and isolated nodes. Once built, the adjacency lists are sorted so every
/// derived quantity is independent of the input edge order.
class Graph {
 public:
  int node_count() const noexcept { return node_count_; }
  int edge_count() const noexcept { return static_cast<int>(edges_.size()); }
  int feature_dim() const noexcept { return static_cast<int>(features_.cols()); }

  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Matrix& node_features() const noexcept { return features_; }
  const std::vector<int>& neighbors(int node) const { return adjacency_.at(node); }
  int degree(int node) const { return static_cast<int>(adjacency_.at(node).size()); }

  friend Graph build_graph(int node_count, const std::vector<Edge>& edge_list,
                           const Matrix& features);

 private:
  Graph() = default;

  int node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  Matrix features_;
};

inline Graph build_graph(int node_count, const std::vector<Edge>& edge_list,
                         const Matrix& features) {
  if (node_count < 1) {
    throw Error(ErrorKind::FeatureShapeMismatch, "node_count must be >= 1");
  }
  if (features.rows() != node_count) {
    throw Error(ErrorKind::FeatureShapeMismatch,
                "features have " + std::to_string(features.rows()) + " rows, expected " +
                    std::to_string(node_count));
  }

  std::vector<Edge> edges;
  edges.reserve(edge_list.size());
  for (auto [u, v] : edge_list) {
    if (u < 0 || v < 0 || u >= node_count || v >= node_count) {
      throw Error(ErrorKind::IndexOutOfRange, "edge (" + std::to_string(u) + "," +
                                                  std::to_string(v) + ") outside [0, " +
                                                  std::to_string(node_count) + ")");
    }
    if (u == v) {
      throw Error(ErrorKind::SelfLoop, "self-loop at node " + std::to_string(u));
    }
    edges.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(node_count));
  for (auto [u, v] : edges) {
    adjacency[u].push_back(v);
    adjacency[v].push_back(u);
  }
  for (int i = 0; i < node_count; ++i) {
    if (adjacency[i].empty()) {
      throw Error(ErrorKind::IsolatedNode, "node " + std::to_string(i) + " has degree 0");
    }
    std::sort(adjacency[i].begin(), adjacency[i].end());
  }

  Graph g;
  g.node_count_ = node_count;
  g.edges_ = std::move(edges);
  g.adjacency_ = std::move(adjacency);
  g.features_ = features;
  return g;
}

struct StructuralMatrices {
  Matrix adjacency;
  Matrix degree;
  Matrix laplacian;
  /// Diagonal of `degree`, kept separately since most kernels only need it.
  Vector degree_vector;
};

inline StructuralMatrices structural_matrices(const Graph& g) {
  const int n = g.node_count();
  // Integer assembly first so L * 1 == 0 holds exactly after the cast.
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (auto [u, v] : g.edges()) {
    a(u, v) = 1;
    a(v, u) = 1;
  }
  Eigen::VectorXi deg = a.rowwise().sum();
  Eigen::MatrixXi l = -a;
  for (int i = 0; i < n; ++i) l(i, i) = deg(i);

  StructuralMatrices sm;
  sm.adjacency = a.cast<double>();
  sm.degree_vector = deg.cast<double>();
  sm.degree = sm.degree_vector.asDiagonal();
  sm.laplacian = l.cast<double>();
  return sm;
}

/// Components ordered by their smallest node index; members sorted.
inline std::vector<std::vector<int>> connected_components(const Graph& g) {
  const int n = g.node_count();
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  std::vector<std::vector<int>> components;
  std::vector<int> stack;
  for (int root = 0; root < n; ++root) {
    if (label[root] >= 0) continue;
    const int id = static_cast<int>(components.size());
    components.emplace_back();
    label[root] = id;
    stack.push_back(root);
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      components.back().push_back(u);
      for (int v : g.neighbors(u)) {
        if (label[v] < 0) {
          label[v] = id;
          stack.push_back(v);
        }
      }
    }
    std::sort(components.back().begin(), components.back().end());
  }
  return components;
}

inline bool is_connected(const Graph& g) { return connected_components(g).size() == 1; }

/// Returns the graph with node `i` relabelled to `perm[i]`.
inline Graph permute_nodes(const Graph& g, const std::vector<int>& perm) {
  const int n = g.node_count();
  if (static_cast<int>(perm.size()) != n) {
    throw Error(ErrorKind::DimensionMismatch, "permutation size does not match node count");
  }
  std::vector<Edge> edges;
  edges.reserve(g.edges().size());
  for (auto [u, v] : g.edges()) edges.emplace_back(perm[u], perm[v]);
  Matrix features(n, g.feature_dim());
  for (int i = 0; i < n; ++i) features.row(perm[i]) = g.node_features().row(i);
  return build_graph(n, edges, features);
}

}  // namespace gad
