#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gad/error.hpp"
#include "gad/model.hpp"

namespace gad {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorKind::ParseError, "tensor data length does not match its shape");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[k++].get<double>();
  }
  return m;
}

inline json model_config_to_json(const ModelConfig& cfg) {
  std::vector<std::string> aggs;
  for (Aggregator a : cfg.aggregators) aggs.push_back(to_string(a));
  return json{{"input_dim", cfg.input_dim},
              {"target_dim", cfg.target_dim},
              {"hidden_width", cfg.hidden_width},
              {"num_layers", cfg.num_layers},
              {"scheme", to_string(cfg.scheme)},
              {"bandwidth", cfg.bandwidth},
              {"aggregators", aggs},
              {"scalers", cfg.scalers},
              {"scale_directional", cfg.scale_directional},
              {"pooling", to_string(cfg.pooling)},
              {"mlp_layers", cfg.mlp_layers},
              {"readout_layers", cfg.readout_layers},
              {"dropout", cfg.dropout}};
}

/// Missing keys keep the defaults of `base`.
inline ModelConfig model_config_from_json(const json& j, ModelConfig base = {}) {
  try {
    if (j.contains("input_dim")) base.input_dim = j["input_dim"].get<int>();
    if (j.contains("target_dim")) base.target_dim = j["target_dim"].get<int>();
    if (j.contains("hidden_width")) base.hidden_width = j["hidden_width"].get<int>();
    if (j.contains("num_layers")) base.num_layers = j["num_layers"].get<int>();
    if (j.contains("scheme")) base.scheme = parse_scheme(j["scheme"].get<std::string>());
    if (j.contains("bandwidth")) base.bandwidth = j["bandwidth"].get<int>();
    if (j.contains("aggregators")) {
      base.aggregators.clear();
      for (const auto& a : j["aggregators"]) base.aggregators.push_back(parse_aggregator(a.get<std::string>()));
    }
    if (j.contains("scalers")) base.scalers = j["scalers"].get<std::vector<int>>();
    if (j.contains("scale_directional")) base.scale_directional = j["scale_directional"].get<bool>();
    if (j.contains("pooling")) base.pooling = parse_pooling(j["pooling"].get<std::string>());
    if (j.contains("mlp_layers")) base.mlp_layers = j["mlp_layers"].get<int>();
    if (j.contains("readout_layers")) base.readout_layers = j["readout_layers"].get<int>();
    if (j.contains("dropout")) base.dropout = j["dropout"].get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return base;
}

inline json checkpoint_to_json(const GadModel& model) {
  json params = json::array();
  for (const auto& p : model.parameters()) {
    json t = matrix_to_json(*p.value);
    t["name"] = p.name;
    params.push_back(std::move(t));
  }
  return json{{"format", "gad-checkpoint"},
              {"version", 1},
              {"seed", model.seed},
              {"degree_delta", model.degree_delta},
              {"config", model_config_to_json(model.config)},
              {"parameters", std::move(params)}};
}

inline GadModel checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "gad-checkpoint") {
      throw Error(ErrorKind::ParseError, "not a gad checkpoint");
    }
    GadModel model =
        GadModel::zeros(model_config_from_json(j.at("config")), j.at("degree_delta").get<double>());
    model.seed = j.at("seed").get<std::uint64_t>();
    auto params = model.parameters();
    const json& stored = j.at("parameters");
    if (stored.size() != params.size()) {
      throw Error(ErrorKind::ConfigMismatch, "checkpoint parameter count does not match config");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (stored[i].at("name").get<std::string>() != params[i].name) {
        throw Error(ErrorKind::ConfigMismatch, "unexpected parameter " + stored[i].at("name").get<std::string>());
      }
      Matrix m = matrix_from_json(stored[i]);
      if (m.rows() != params[i].value->rows() || m.cols() != params[i].value->cols()) {
        throw Error(ErrorKind::ConfigMismatch, "shape mismatch for " + params[i].name);
      }
      *params[i].value = std::move(m);
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

inline void save_checkpoint(const std::string& path, const GadModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(model).dump(1) << '\n';
}

inline GadModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open checkpoint '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string("checkpoint: ") + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace gad
