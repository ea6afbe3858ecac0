#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gad/anisotropic.hpp"
#include "gad/error.hpp"
#include "gad/graph.hpp"
#include "gad/prepared.hpp"

namespace gad {

using json = nlohmann::json;

struct Sample {
  Graph graph;
  Vector target;
};

// ---------------------------------------------------------------------------
// JSON graph records:
//   {"num_nodes": n, "edges": [[i, j], ...], "node_features": [[f, ...], ...],
//    "target": x | [x, ...]}
// A dataset file is a JSON array of records or one record per line.

inline Sample sample_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ValidationError, "graph record is not an object");
  auto require = [&j](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) {
      throw Error(ErrorKind::ValidationError, std::string("missing field '") + key + "'");
    }
    return *it;
  };
  try {
    const int n = require("num_nodes").get<int>();
    std::vector<Edge> edges;
    for (const json& e : require("edges")) {
      if (!e.is_array() || e.size() != 2) {
        throw Error(ErrorKind::ValidationError, "edge entries must be [i, j] pairs");
      }
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    const json& feats = require("node_features");
    if (!feats.is_array()) {
      throw Error(ErrorKind::ValidationError, "node_features must be an array");
    }
    Matrix x;
    if (!feats.empty() && feats.front().is_number()) {
      x.resize(static_cast<Eigen::Index>(feats.size()), 1);
      for (std::size_t i = 0; i < feats.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = feats[i].get<double>();
    } else {
      const std::size_t d = feats.empty() ? 0 : feats.front().size();
      x.resize(static_cast<Eigen::Index>(feats.size()), static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < feats.size(); ++i) {
        if (!feats[i].is_array() || feats[i].size() != d) {
          throw Error(ErrorKind::FeatureShapeMismatch, "ragged node_features");
        }
        for (std::size_t c = 0; c < d; ++c) {
          x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = feats[i][c].get<double>();
        }
      }
    }
    Vector target;
    if (auto it = j.find("target"); it != j.end()) {
      if (it->is_number()) {
        target = Vector::Constant(1, it->get<double>());
      } else {
        target.resize(static_cast<Eigen::Index>(it->size()));
        for (std::size_t i = 0; i < it->size(); ++i) target(static_cast<Eigen::Index>(i)) = (*it)[i].get<double>();
      }
    }
    return Sample{build_graph(n, edges, x), std::move(target)};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ValidationError, e.what());
  }
}

inline json sample_to_json(const Sample& s) {
  json j;
  j["num_nodes"] = s.graph.node_count();
  json edges = json::array();
  for (auto [u, v] : s.graph.edges()) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  json feats = json::array();
  const Matrix& x = s.graph.node_features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < x.cols(); ++c) row.push_back(x(i, c));
    feats.push_back(std::move(row));
  }
  j["node_features"] = std::move(feats);
  if (s.target.size() == 1) {
    j["target"] = s.target(0);
  } else {
    j["target"] = std::vector<double>(s.target.data(), s.target.data() + s.target.size());
  }
  return j;
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string parse_location(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col) + " (offset " +
         std::to_string(byte) + ")";
}

inline Sample indexed_sample(const json& j, std::size_t index) {
  try {
    return sample_from_json(j);
  } catch (const Error& e) {
    throw Error(ErrorKind::ValidationError, "graph " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace detail

/// Parses a dataset document (array, single object, or newline-delimited).
inline std::vector<Sample> parse_samples(const std::string& text) {
  std::vector<Sample> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return out;

  if (text[first] == '[') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::ParseError, detail::parse_location(text, e.byte) + ": " + e.what());
    }
    for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(detail::indexed_sample(doc[i], i));
    return out;
  }

  // A single (possibly pretty-printed) object, else one object per line.
  json doc = json::parse(text, nullptr, false);
  if (!doc.is_discarded()) {
    out.push_back(detail::indexed_sample(doc, 0));
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ", column " +
                                             std::to_string(e.byte) + ": " + e.what());
    }
    out.push_back(detail::indexed_sample(rec, out.size()));
  }
  return out;
}

inline std::vector<Sample> read_samples(const std::string& path) {
  return parse_samples(detail::read_file(path));
}

inline void write_samples(const std::string& path, const std::vector<Sample>& samples) {
  json doc = json::array();
  for (const Sample& s : samples) doc.push_back(sample_to_json(s));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write '" + path + "'");
  out << doc.dump() << '\n';
}

/// Graphs with their structure-only caches and targets.
struct Dataset {
  std::vector<PreparedGraph> graphs;
  std::vector<Vector> targets;

  std::size_t size() const noexcept { return graphs.size(); }
  int feature_dim() const { return graphs.empty() ? 0 : graphs.front().graph.feature_dim(); }
  int target_dim() const { return targets.empty() ? 0 : static_cast<int>(targets.front().size()); }
};

inline Dataset prepare_dataset(std::vector<Sample> samples, int bandwidth) {
  Dataset ds;
  ds.graphs.reserve(samples.size());
  const int feature_dim = samples.empty() ? 0 : samples.front().graph.feature_dim();
  const Eigen::Index target_dim = samples.empty() ? 0 : samples.front().target.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Sample& s = samples[i];
    if (s.graph.feature_dim() != feature_dim) {
      throw Error(ErrorKind::ValidationError,
                  "graph " + std::to_string(i) + ": feature dimension differs from graph 0");
    }
    if (s.target.size() == 0) {
      throw Error(ErrorKind::ValidationError, "graph " + std::to_string(i) + ": missing target");
    }
    if (s.target.size() != target_dim) {
      throw Error(ErrorKind::ValidationError,
                  "graph " + std::to_string(i) + ": target dimension differs from graph 0");
    }
    try {
      ds.graphs.push_back(prepare_graph(std::move(s.graph), bandwidth));
    } catch (const Error& e) {
      throw Error(ErrorKind::ValidationError, "graph " + std::to_string(i) + ": " + e.what());
    }
    ds.targets.push_back(std::move(s.target));
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, int bandwidth) {
  return prepare_dataset(read_samples(path), bandwidth);
}

inline bool same_cache(const PreparedGraph& a, const PreparedGraph& b) {
  return a.matrices.laplacian == b.matrices.laplacian &&
         a.spectrum.eigenvalues() == b.spectrum.eigenvalues() &&
         a.spectrum.eigenvectors() == b.spectrum.eigenvectors() && a.fiedler == b.fiedler &&
         a.operators.b_av == b.operators.b_av && a.operators.b_dx == b.operators.b_dx;
}

/// Recomputes the caches of a random `fraction` of graphs (at least one) and
/// returns the indices that disagreed with a fresh computation.
inline std::vector<std::size_t> spot_check_cache(const Dataset& ds, int bandwidth,
                                                 std::uint64_t seed, double fraction = 0.05) {
  std::vector<std::size_t> bad;
  if (ds.size() == 0) return bad;
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(ds.size())));
  for (std::size_t s = 0; s < count && s < idx.size(); ++s) {
    const PreparedGraph& cached = ds.graphs[idx[s]];
    if (!same_cache(cached, prepare_graph(cached.graph, bandwidth))) bad.push_back(idx[s]);
  }
  std::sort(bad.begin(), bad.end());
  return bad;
}

// ---------------------------------------------------------------------------
// Synthetic directional regression task.
//
// Each graph: n uniform in [6, 20]; a random recursive tree (node i attaches
// to a uniform earlier node) plus up to n/3 extra random edges; one scalar
// feature per node, uniform in [-1, 1]. Graphs whose Fiedler eigenvalue is
// within 1e-3 of the next one are redrawn so the field is unambiguous.
//
// target = sum_i sum_j Fhat_ij (x_i - x_j), with Fhat the row-normalized
// Fiedler field. Because Fhat is odd in the Fiedler vector, the target flips
// sign with the field and no isotropic aggregation can recover it.

inline double directional_statistic(const Matrix& field_normalized, const Vector& x) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < field_normalized.rows(); ++i) {
    for (Eigen::Index j = 0; j < field_normalized.cols(); ++j) {
      total += field_normalized(i, j) * (x(i) - x(j));
    }
  }
  return total;
}

struct SynthOptions {
  int min_nodes = 6;
  int max_nodes = 20;
  double min_spectral_gap = 1e-3;
};

inline std::vector<Sample> synth_directional_task(int num_graphs, std::uint64_t seed,
                                                  const SynthOptions& opts = {}) {
  if (num_graphs < 1) throw Error(ErrorKind::ConfigError, "num_graphs must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(num_graphs));
  std::uniform_real_distribution<double> feature(-1.0, 1.0);
  while (static_cast<int>(out.size()) < num_graphs) {
    const int n = std::uniform_int_distribution<int>(opts.min_nodes, opts.max_nodes)(rng);
    std::set<Edge> edges;
    for (int i = 1; i < n; ++i) {
      const int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
      edges.emplace(j, i);
    }
    const int extra = std::uniform_int_distribution<int>(0, n / 3)(rng);
    std::uniform_int_distribution<int> node(0, n - 1);
    for (int e = 0; e < extra; ++e) {
      int u = node(rng);
      int v = node(rng);
      if (u == v) continue;
      edges.emplace(std::min(u, v), std::max(u, v));
    }
    Matrix x(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = feature(rng);

    Graph g = build_graph(n, std::vector<Edge>(edges.begin(), edges.end()), x);
    const StructuralMatrices sm = structural_matrices(g);
    const SpectralDecomposition sd = decompose(g, sm, 3);
    if (sd.eigenvalues()(2) - sd.eigenvalues()(1) < opts.min_spectral_gap) continue;
    const AnisotropicOperators ops = build_operators(g, sd.fiedler());
    const double target = directional_statistic(ops.field_normalized, x.col(0));
    out.push_back(Sample{std::move(g), Vector::Constant(1, target)});
  }
  return out;
}

}  // namespace gad
