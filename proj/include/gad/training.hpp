#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gad/checkpoint.hpp"
#include "gad/dataset.hpp"
#include "gad/error.hpp"
#include "gad/model.hpp"

namespace gad {

struct ExperimentConfig {
  ModelConfig model;
  double lr = 1e-3;
  double weight_decay = 3e-6;
  int batch_size = 32;
  int epochs = 200;
  std::optional<std::uint64_t> seed;
  std::string train_path;
  std::string val_path;
  std::string test_path;
  std::string output_dir;

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
    model.validate();
    if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (epochs < 0) fail("epochs must be >= 0");
    if (!seed) fail("a seed is required");
  }
};

inline json experiment_config_to_json(const ExperimentConfig& c) {
  json j = model_config_to_json(c.model);
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["train_path"] = c.train_path;
  j["val_path"] = c.val_path;
  j["test_path"] = c.test_path;
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  static const std::vector<std::string> known{
      "input_dim",  "target_dim", "hidden_width", "num_layers",     "scheme",  "bandwidth",
      "aggregators", "scalers",   "scale_directional", "pooling",   "mlp_layers",
      "readout_layers", "dropout", "lr", "weight_decay", "batch_size", "epochs", "seed",
      "train_path", "val_path",   "test_path",    "output_dir"};
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
    }
  }
  ExperimentConfig c;
  c.model = model_config_from_json(j);
  try {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
    c.train_path = j.value("train_path", std::string());
    c.val_path = j.value("val_path", std::string());
    c.test_path = j.value("test_path", std::string());
    c.output_dir = j.value("output_dir", std::string());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return c;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_mae;
  std::optional<double> test_mae;
  std::vector<Vector> times;  // learned t per block, per channel
};

struct MetricsLog {
  std::vector<EpochRecord> epochs;
  std::vector<double> wall_seconds;  // kept out of the JSON log
  int best_epoch = 0;
};

inline json metrics_to_json(const MetricsLog& log) {
  json epochs = json::array();
  for (const EpochRecord& r : log.epochs) {
    json times = json::array();
    for (const Vector& t : r.times) times.push_back(std::vector<double>(t.data(), t.data() + t.size()));
    epochs.push_back(json{{"epoch", r.epoch},
                          {"train_loss", r.train_loss},
                          {"val_mae", r.val_mae ? json(*r.val_mae) : json(nullptr)},
                          {"test_mae", r.test_mae ? json(*r.test_mae) : json(nullptr)},
                          {"times", std::move(times)}});
  }
  return json{{"best_epoch", log.best_epoch}, {"epochs", std::move(epochs)}};
}

inline json timing_to_json(const MetricsLog& log) {
  json t = json::array();
  for (std::size_t i = 0; i < log.wall_seconds.size(); ++i) {
    t.push_back(json{{"epoch", log.epochs.at(i).epoch}, {"wall_seconds", log.wall_seconds[i]}});
  }
  return json{{"epochs", std::move(t)}};
}

/// Mean over graphs of the per-graph MAE. Never mutates the model.
inline double evaluate(const GadModel& model, const Dataset& ds) {
  if (ds.size() == 0) throw Error(ErrorKind::ValidationError, "cannot evaluate an empty dataset");
  if (ds.feature_dim() != model.config.input_dim || ds.target_dim() != model.config.target_dim) {
    throw Error(ErrorKind::ConfigMismatch,
                "checkpoint expects " + std::to_string(model.config.input_dim) + " features / " +
                    std::to_string(model.config.target_dim) + " targets, dataset has " +
                    std::to_string(ds.feature_dim()) + " / " + std::to_string(ds.target_dim()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    total += mae_loss(predict(model, ds.graphs[i]), ds.targets[i]).loss;
  }
  return total / static_cast<double>(ds.size());
}

inline double dataset_degree_delta(const Dataset& ds) {
  double total = 0.0;
  long long count = 0;
  for (const PreparedGraph& pg : ds.graphs) {
    for (int i = 0; i < pg.graph.node_count(); ++i) total += std::log(pg.graph.degree(i) + 1.0);
    count += pg.graph.node_count();
  }
  return count > 0 ? total / static_cast<double>(count) : 1.0;
}

/// Accumulated gradient of the mean loss over `batch`, plus per-graph losses.
/// Per-graph gradients are summed in batch order and scaled once at the end.
struct BatchGradient {
  Gradients grads;
  std::vector<double> losses;
};

inline BatchGradient batch_gradient(const GadModel& model, const Dataset& ds,
                                    const std::vector<std::size_t>& batch,
                                    const ForwardOptions& opts = {}) {
  BatchGradient out;
  for (const auto& p : model.parameters()) {
    out.grads.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  for (std::size_t idx : batch) {
    GradientTape tape;
    const Vector pred = model_forward(model, ds.graphs[idx], tape, opts);
    const LossValue loss = mae_loss(pred, ds.targets[idx]);
    out.losses.push_back(loss.loss);
    const Gradients g = model_backward(model, tape, loss.grad);
    for (std::size_t i = 0; i < g.size(); ++i) out.grads[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (Matrix& g : out.grads) g *= inv;
  return out;
}

struct TrainResult {
  MetricsLog log;
  GadModel best_model;
  GadModel last_good_model;
  bool diverged = false;
  std::string divergence_message;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline bool all_finite(const GadModel& m) {
  for (const auto& p : m.parameters()) {
    if (!p.value->allFinite()) return false;
  }
  return true;
}

}  // namespace detail

/// Deterministic training loop over already-prepared datasets.
///
/// Epoch 0 records the initial parameters. Each later epoch shuffles the
/// training order, steps Adam once per batch, and evaluates val/test. The
/// logged train loss is the mean per-graph loss seen during the epoch,
/// summed in dataset order.
inline TrainResult train(const ExperimentConfig& raw_cfg, const Dataset& train_set,
                         const Dataset* val_set = nullptr, const Dataset* test_set = nullptr,
                         const EpochCallback& on_epoch = nullptr) {
  ExperimentConfig cfg = raw_cfg;
  if (train_set.size() == 0) throw Error(ErrorKind::ValidationError, "training set is empty");
  cfg.model.input_dim = train_set.feature_dim();
  cfg.model.target_dim = train_set.target_dim();
  cfg.validate();
  const std::uint64_t seed = *cfg.seed;

  const double delta = dataset_degree_delta(train_set);
  GadModel model = GadModel::create(cfg.model, delta, seed);
  AdamState adam;
  const AdamHyper hyper{cfg.lr, cfg.weight_decay};
  std::mt19937_64 order_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(seed ^ 0xd1b54a32d192ed03ULL);

  TrainResult result{MetricsLog{}, model, model, false, {}};
  double best_score = std::numeric_limits<double>::infinity();
  auto clock_start = std::chrono::steady_clock::now();

  auto record_epoch = [&](int epoch, double train_loss) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    if (val_set && val_set->size() > 0) rec.val_mae = evaluate(model, *val_set);
    if (test_set && test_set->size() > 0) rec.test_mae = evaluate(model, *test_set);
    rec.times = learned_times(model);
    const double score = rec.val_mae ? *rec.val_mae : rec.train_loss;
    if (score < best_score) {
      best_score = score;
      result.best_model = model;
      result.log.best_epoch = epoch;
    }
    result.log.epochs.push_back(rec);
    result.log.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count());
    if (on_epoch) on_epoch(rec);
  };

  record_epoch(0, evaluate(model, train_set));
  result.last_good_model = model;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const ForwardOptions opts{true, &dropout_rng};
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    std::vector<double> per_graph(train_set.size(), 0.0);
    try {
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::vector<std::size_t> batch(
            order.begin() + static_cast<std::ptrdiff_t>(start),
            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
        BatchGradient bg = batch_gradient(model, train_set, batch, opts);
        for (std::size_t b = 0; b < batch.size(); ++b) {
          if (!std::isfinite(bg.losses[b])) {
            throw Error(ErrorKind::DivergenceDetected,
                        "non-finite loss at epoch " + std::to_string(epoch));
          }
          per_graph[batch[b]] = bg.losses[b];
        }
        optimizer_step(model, bg.grads, adam, hyper);
        if (!detail::all_finite(model)) {
          throw Error(ErrorKind::DivergenceDetected,
                      "non-finite parameters at epoch " + std::to_string(epoch));
        }
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DivergenceDetected && e.kind() != ErrorKind::NonFiniteActivation) {
        throw;
      }
      result.diverged = true;
      result.divergence_message = e.what();
      return result;
    }
    double total = 0.0;
    for (double l : per_graph) total += l;
    record_epoch(epoch, total / static_cast<double>(per_graph.size()));
    result.last_good_model = model;
  }
  return result;
}

/// File-level entry point: loads datasets named in the config, trains, and
/// writes config.json, metrics.json, timing.json and checkpoint.json under
/// output_dir.
/// Throws DivergenceDetected after writing last_good_checkpoint.json.
inline TrainResult train(const ExperimentConfig& requested, const EpochCallback& on_epoch = nullptr,
                         const std::function<void(const ExperimentConfig&)>& on_config = nullptr) {
  requested.validate();
  if (requested.train_path.empty()) throw Error(ErrorKind::ConfigError, "train_path is required");
  ExperimentConfig cfg = requested;
  const Dataset train_set = load_dataset(cfg.train_path, cfg.model.bandwidth);
  if (train_set.size() == 0) throw Error(ErrorKind::ValidationError, "training set is empty");
  cfg.model.input_dim = train_set.feature_dim();
  cfg.model.target_dim = train_set.target_dim();
  std::optional<Dataset> val_set;
  std::optional<Dataset> test_set;
  if (!cfg.val_path.empty()) val_set = load_dataset(cfg.val_path, cfg.model.bandwidth);
  if (!cfg.test_path.empty()) test_set = load_dataset(cfg.test_path, cfg.model.bandwidth);

  const auto bad = spot_check_cache(train_set, cfg.model.bandwidth, *cfg.seed);
  if (!bad.empty()) {
    throw Error(ErrorKind::ValidationError,
                "precomputed cache of graph " + std::to_string(bad.front()) + " is stale");
  }

  namespace fs = std::filesystem;
  if (on_config) on_config(cfg);
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    std::ofstream(fs::path(cfg.output_dir) / "config.json", std::ios::binary)
        << experiment_config_to_json(cfg).dump(1) << '\n';
  }

  TrainResult result = train(cfg, train_set, val_set ? &*val_set : nullptr,
                             test_set ? &*test_set : nullptr, on_epoch);

  if (!cfg.output_dir.empty()) {
    const fs::path dir(cfg.output_dir);
    std::ofstream(dir / "metrics.json", std::ios::binary) << metrics_to_json(result.log).dump(1) << '\n';
    std::ofstream(dir / "timing.json", std::ios::binary) << timing_to_json(result.log).dump(1) << '\n';
    save_checkpoint((dir / "checkpoint.json").string(), result.best_model);
    if (result.diverged) {
      save_checkpoint((dir / "last_good_checkpoint.json").string(), result.last_good_model);
    }
  }
  if (result.diverged) throw Error(ErrorKind::DivergenceDetected, result.divergence_message);
  return result;
}

}  // namespace gad
