#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gad/anisotropic.hpp"
#include "gad/spectral.hpp"
#include "support/oracles.hpp"

using namespace gad;

namespace {

Graph path(int n, Matrix x = Matrix()) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return build_graph(n, e, x.size() ? x : Matrix::Ones(n, 1));
}

Matrix rows3(std::initializer_list<double> v) {
  Matrix m(3, 3);
  std::copy(v.begin(), v.end(), m.data());
  return m.transpose();  // written row-major above
}

Graph random_graph(std::mt19937_64& rng, int n) {
  const auto rg = oracle::connected_gnp(n, 0.3, rng);
  std::normal_distribution<double> normal;
  Matrix x(n, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return build_graph(n, rg.edges, x);
}

}  // namespace

TEST(Operators, P3Golden) {
  const Graph g = path(3);
  const Vector phi = fiedler_vector(g);
  const auto ops = build_operators(g, phi);
  EXPECT_LE((ops.field_normalized - rows3({0, 1, 0, -0.5, 0, 0.5, 0, -1, 0})).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((ops.b_av - rows3({0, 1, 0, 0.5, 0, 0.5, 0, 1, 0})).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((ops.b_dx - rows3({-1, 1, 0, -0.5, 0, 0.5, 0, -1, 1})).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((ops.b_dx * Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Operators, ConstantPhiGivesZeroField) {
  const Graph g = path(4);
  const auto ops = build_operators(g, Vector::Constant(4, 0.5));
  EXPECT_TRUE(ops.field.isZero(0.0));
  EXPECT_TRUE(ops.b_av.isZero(0.0));
  EXPECT_TRUE(ops.b_dx.isZero(0.0));
}

TEST(Operators, SignFlip) {
  std::mt19937_64 rng(101);
  for (int s = 0; s < 20; ++s) {
    const Graph g = random_graph(rng, 4 + s % 9);
    const Vector phi = fiedler_vector(g);
    const auto a = build_operators(g, phi);
    const auto b = build_operators(g, -phi);
    EXPECT_EQ(a.b_av, b.b_av);
    EXPECT_EQ(Matrix(-a.b_dx), b.b_dx);
  }
}

TEST(Operators, LengthMismatch) {
  try {
    build_operators(path(3), Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  const auto ops = build_operators(path(3), fiedler_vector(path(3)));
  EXPECT_THROW(apply_directional(ops, Matrix::Ones(4, 1)), Error);
}

TEST(Operators, StructuralPropertiesOnRandomGraphs) {
  std::mt19937_64 rng(103);
  for (int seed = 0; seed < 100; ++seed) {
    const int n = 2 + seed % 14;
    const auto rg = oracle::connected_gnp(n, 0.3, rng);
    const Graph g = build_graph(n, rg.edges, Matrix::Ones(n, 1));
    const auto sm = structural_matrices(g);
    const Vector phi = fiedler_vector(g);
    const auto ops = build_operators(g, phi);
    EXPECT_TRUE((ops.field + ops.field.transpose()).isZero(0.0));
    EXPECT_TRUE((ops.field.array() != 0 && sm.adjacency.array() == 0).count() == 0);
    EXPECT_TRUE((ops.b_av.array() >= 0).all());
    for (int i = 0; i < n; ++i) {
      const double row = ops.b_av.row(i).sum();
      if (ops.field.row(i).cwiseAbs().sum() > 0) {
        EXPECT_NEAR(row, 1.0, 1e-12);
      } else {
        EXPECT_EQ(row, 0.0);
      }
    }
    EXPECT_LE((ops.b_dx * Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix ref = oracle::normalized_field(sm.adjacency, phi);
    EXPECT_LE((ops.field_normalized - ref).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ApplyDirectional, Examples) {
  const Graph g = path(3);
  const Vector phi = fiedler_vector(g);
  const auto ops = build_operators(g, phi);
  const auto [av_c, dx_c] = apply_directional(ops, Matrix::Constant(3, 2, 4.0));
  EXPECT_LE(dx_c.cwiseAbs().maxCoeff(), 1e-12);
  const auto [av_phi, dx_phi] = apply_directional(ops, phi);
  EXPECT_NEAR(dx_phi(1, 0), -1.0 / std::sqrt(2.0), 1e-12);
  Matrix onehot = Matrix::Zero(3, 1);
  onehot(0, 0) = 1;
  const auto [av_1, dx_1] = apply_directional(ops, onehot);
  EXPECT_LE((av_1 - (Matrix(3, 1) << 0, 0.5, 0).finished()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NeighborAggregators, Examples) {
  const auto p2 = neighbor_aggregators(path(2), (Matrix(2, 1) << 1, 3).finished());
  const Matrix expected2 = (Matrix(2, 1) << 3, 1).finished();
  EXPECT_EQ(p2.mean, expected2);
  EXPECT_EQ(p2.max, expected2);
  EXPECT_EQ(p2.min, expected2);

  const auto p3 = neighbor_aggregators(path(3), (Matrix(3, 1) << 1, 2, 3).finished());
  EXPECT_EQ(p3.mean, (Matrix(3, 1) << 2, 2, 2).finished());
  EXPECT_EQ(p3.max, (Matrix(3, 1) << 2, 3, 2).finished());
  EXPECT_EQ(p3.min, (Matrix(3, 1) << 2, 1, 2).finished());

  const auto c = neighbor_aggregators(path(5), Matrix::Constant(5, 3, -2.5));
  EXPECT_TRUE((c.mean.array() == -2.5).all());
  EXPECT_TRUE((c.max.array() == -2.5).all());
  EXPECT_TRUE((c.min.array() == -2.5).all());
}

TEST(NeighborAggregators, TiesPickLowestIndex) {
  const Graph star = build_graph(4, {{0, 1}, {0, 2}, {0, 3}}, Matrix::Ones(4, 1));
  const auto agg = neighbor_aggregators(star, (Matrix(4, 1) << 0, 5, 5, 1).finished());
  EXPECT_EQ(agg.argmax(0, 0), 1);
  EXPECT_EQ(agg.argmin(0, 0), 3);
}

TEST(NeighborAggregators, PermutationEquivariant) {
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 10;
    const Graph g = random_graph(rng, n);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Graph p = permute_nodes(g, perm);
    const auto a = neighbor_aggregators(g, g.node_features());
    const auto b = neighbor_aggregators(p, p.node_features());
    for (int i = 0; i < n; ++i) {
      const int j = perm[static_cast<std::size_t>(i)];
      EXPECT_NEAR((a.mean.row(i) - b.mean.row(j)).cwiseAbs().maxCoeff(), 0.0, 1e-14);
      EXPECT_EQ(a.max.row(i), b.max.row(j));
      EXPECT_EQ(a.min.row(i), b.min.row(j));
    }
  }
}

TEST(DegreeScalers, Examples) {
  const Graph p3 = path(3);
  const Matrix h = (Matrix(3, 2) << 1, 2, 3, 4, 5, 6).finished();
  const auto same = degree_scalers(p3, h, 0.7, {0});
  EXPECT_EQ(same[0], h);

  const Graph c5 = build_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}}, Matrix::Ones(5, 1));
  const Matrix h5 = Matrix::Constant(5, 1, 2.0);
  for (const Matrix& m : degree_scalers(c5, h5, std::log(3.0), {-1, 0, 1})) {
    EXPECT_LE((m - h5).cwiseAbs().maxCoeff(), 1e-15);
  }

  const auto up = degree_scalers(p3, h, std::log(2.0), {1, -1});
  EXPECT_NEAR(up[0](1, 0) / h(1, 0), std::log(3.0) / std::log(2.0), 1e-14);
  EXPECT_NEAR(std::log(3.0) / std::log(2.0), 1.585, 1e-3);
  EXPECT_NEAR(up[1](1, 0) / h(1, 0), std::log(2.0) / std::log(3.0), 1e-14);
  EXPECT_NEAR(up[0](0, 0), h(0, 0), 1e-15);  // leaves: log 2 / log 2
}

TEST(DegreeScalers, Errors) {
  const Graph p3 = path(3);
  try {
    degree_scalers(p3, Matrix::Ones(3, 1), 0.0, {1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPositiveDelta);
  }
  EXPECT_THROW(degree_scalers(p3, Matrix::Ones(3, 1), -1.0, {0}), Error);
  EXPECT_THROW(degree_scalers(p3, Matrix::Ones(3, 1), 1.0, {2}), Error);
}

TEST(DegreeScalers, AverageLogDegree) {
  const std::vector<Graph> graphs{path(2), path(3)};
  const double expected = (2 * std::log(2.0) + 2 * std::log(2.0) + std::log(3.0)) / 5.0;
  EXPECT_NEAR(average_log_degree(graphs), expected, 1e-15);
}
