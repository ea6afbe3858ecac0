#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gad/checkpoint.hpp"
#include "gad/dataset.hpp"
#include "gad/training.hpp"
#include "support/oracles.hpp"

using namespace gad;
namespace fs = std::filesystem;

namespace {

const char* kP2 = R"({"num_nodes": 2, "edges": [[0, 1]], "node_features": [[1.0], [0.0]], "target": 0.5})";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gad_tests_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no gad::Error thrown";
  return ErrorKind::ConfigError;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.model.hidden_width = 4;
  cfg.model.num_layers = 2;
  cfg.model.bandwidth = 6;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.seed = 5;
  return cfg;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(Dataset, SingleGraph) {
  const auto samples = parse_samples(std::string("[") + kP2 + "]");
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].target(0), 0.5);
  EXPECT_EQ(samples[0].graph.node_count(), 2);
  EXPECT_EQ(parse_samples(kP2).size(), 1u);
}

TEST(Dataset, NewlineDelimited) {
  const std::string text = std::string(kP2) + "\n\n" + kP2 + "\n";
  EXPECT_EQ(parse_samples(text).size(), 2u);
}

TEST(Dataset, FlatFeatureListAndVectorTarget) {
  const auto s = parse_samples(R"({"num_nodes": 3, "edges": [[0,1],[1,2]], "node_features": [1, 2, 3], "target": [1, 2]})");
  EXPECT_EQ(s[0].graph.feature_dim(), 1);
  EXPECT_EQ(s[0].target.size(), 2);
}

TEST(Dataset, MalformedJsonReportsLocation) {
  try {
    parse_samples("[\n  {\"num_nodes\": 2,,}\n]");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  try {
    parse_samples(std::string(kP2) + "\n{oops\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Dataset, IsolatedNodeNamesGraphAndNode) {
  const std::string bad = R"({"num_nodes": 3, "edges": [[0, 1]], "node_features": [[0], [0], [0]], "target": 1})";
  try {
    parse_samples(std::string("[") + kP2 + "," + bad + "]");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ValidationError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("graph 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("node 2"), std::string::npos) << msg;
  }
}

TEST(Dataset, ValidationErrors) {
  EXPECT_EQ(kind_of([] { parse_samples(R"([{"num_nodes": 2, "edges": [[0, 1]]}])"); }), ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { parse_samples(R"([{"num_nodes": 2, "edges": [[0, 1, 2]], "node_features": [1, 2]}])"); }),
            ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { prepare_dataset(parse_samples(R"({"num_nodes": 2, "edges": [[0, 1]], "node_features": [1, 2]})"), 2); }),
            ErrorKind::ValidationError);
  const std::string two_dim = R"({"num_nodes": 2, "edges": [[0, 1]], "node_features": [[1, 1], [0, 0]], "target": 0})";
  EXPECT_EQ(kind_of([&] { prepare_dataset(parse_samples(std::string(kP2) + "\n" + two_dim), 2); }),
            ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { read_samples("/nonexistent/file.json"); }), ErrorKind::ParseError);
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto dir = scratch("roundtrip");
  const auto samples = synth_directional_task(5, 3);
  write_samples((dir / "d.json").string(), samples);
  const auto back = read_samples((dir / "d.json").string());
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].graph.edges(), samples[i].graph.edges());
    EXPECT_EQ(back[i].graph.node_features(), samples[i].graph.node_features());
    EXPECT_EQ(back[i].target, samples[i].target);
  }
}

TEST(Dataset, CacheMatchesFreshComputation) {
  const Dataset ds = prepare_dataset(synth_directional_task(40, 9), 20);
  EXPECT_TRUE(spot_check_cache(ds, 20, 1, 1.0).empty());
  Dataset stale = ds;
  stale.graphs[3] = prepare_graph(ds.graphs[4].graph, 20);
  stale.graphs[3].graph = ds.graphs[3].graph;
  const auto bad = spot_check_cache(stale, 20, 1, 1.0);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0], 3u);
}

TEST(Synth, Deterministic) {
  const auto a = synth_directional_task(20, 77);
  const auto b = synth_directional_task(20, 77);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(sample_to_json(a[i]).dump(), sample_to_json(b[i]).dump());
  }
  EXPECT_NE(sample_to_json(synth_directional_task(1, 78)[0]).dump(), sample_to_json(a[0]).dump());
}

TEST(Synth, ShapeOfGraphs) {
  for (const auto& s : synth_directional_task(100, 5)) {
    EXPECT_GE(s.graph.node_count(), 6);
    EXPECT_LE(s.graph.node_count(), 20);
    EXPECT_EQ(s.graph.feature_dim(), 1);
    EXPECT_TRUE(is_connected(s.graph));
  }
}

TEST(Synth, ConstantFeaturesGiveZeroTarget) {
  for (const auto& s : synth_directional_task(30, 6)) {
    const auto ops = build_operators(s.graph, fiedler_vector(s.graph));
    EXPECT_EQ(directional_statistic(ops.field_normalized, Vector::Constant(s.graph.node_count(), 0.7)), 0.0);
  }
}

TEST(Synth, TargetsMatchBruteForceFromJsonDump) {
  const auto dir = scratch("synth");
  write_samples((dir / "s.json").string(), synth_directional_task(200, 4242));
  std::ifstream in(dir / "s.json");
  const json doc = json::parse(in);
  for (const json& rec : doc) {
    const int n = rec["num_nodes"].get<int>();
    std::vector<std::pair<int, int>> edges;
    for (const json& e : rec["edges"]) edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = rec["node_features"][static_cast<std::size_t>(i)][0].get<double>();
    const double expected = oracle::directional_target(oracle::adjacency_of(n, edges), x);
    EXPECT_NEAR(rec["target"].get<double>(), expected, 1e-9);
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.target_dim = 2;
  cfg.hidden_width = 5;
  cfg.num_layers = 3;
  cfg.scheme = Scheme::Implicit;
  cfg.aggregators = {Aggregator::Max, Aggregator::Dx};
  cfg.scale_directional = false;
  cfg.pooling = Pooling::Mean;
  GadModel m = GadModel::create(cfg, 0.8123456789012345, 99);
  for (auto& p : m.parameters()) p.value->array() += std::sqrt(2.0) * 1e-3;  // awkward bit patterns
  const auto dir = scratch("ckpt");
  save_checkpoint((dir / "c.json").string(), m);
  const GadModel back = load_checkpoint((dir / "c.json").string());
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.degree_delta, m.degree_delta);
  EXPECT_EQ(model_config_to_json(back.config), model_config_to_json(cfg));
  const auto a = m.parameters();
  const auto b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(bitwise_equal(*a[i].value, *b[i].value)) << a[i].name;
  }
}

TEST(Checkpoint, Mismatches) {
  const GadModel m = GadModel::create(ModelConfig{}, 1.0, 1);
  json j = checkpoint_to_json(m);
  json dropped = j;
  dropped["parameters"].erase(dropped["parameters"].begin());
  EXPECT_EQ(kind_of([&] { checkpoint_from_json(dropped); }), ErrorKind::ConfigMismatch);
  json resized = j;
  resized["config"]["hidden_width"] = 7;
  EXPECT_EQ(kind_of([&] { checkpoint_from_json(resized); }), ErrorKind::ConfigMismatch);
  json wrong = j;
  wrong["format"] = "other";
  EXPECT_EQ(kind_of([&] { checkpoint_from_json(wrong); }), ErrorKind::ParseError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.model.aggregators = {Aggregator::Mean};
  cfg.train_path = "train.json";
  const ExperimentConfig back = experiment_config_from_json(experiment_config_to_json(cfg));
  EXPECT_EQ(experiment_config_to_json(back).dump(), experiment_config_to_json(cfg).dump());
  EXPECT_EQ(kind_of([] { experiment_config_from_json(json{{"learning_rate", 0.1}}); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { experiment_config_from_json(json{{"scheme", "euler"}}); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([] { experiment_config_from_json(json{{"epochs", "many"}}); }), ErrorKind::ConfigError);
  ExperimentConfig no_seed = tiny_experiment();
  no_seed.seed.reset();
  EXPECT_EQ(kind_of([&] { no_seed.validate(); }), ErrorKind::ConfigError);
}

TEST(Evaluate, Examples) {
  const Dataset ds = prepare_dataset(
      parse_samples(std::string(R"({"num_nodes": 2, "edges": [[0, 1]], "node_features": [[1], [0]], "target": 1})") + "\n" +
                    R"({"num_nodes": 3, "edges": [[0, 1], [1, 2]], "node_features": [[1], [0], [2]], "target": -1})"),
      2);
  ModelConfig cfg;
  cfg.hidden_width = 2;
  cfg.num_layers = 1;
  GadModel zero = GadModel::zeros(cfg, 1.0);
  EXPECT_EQ(evaluate(zero, ds), 1.0);
  EXPECT_EQ(evaluate(zero, ds), evaluate(zero, ds));

  GadModel exact = GadModel::zeros(cfg, 1.0);
  exact.readout_biases.back()(0, 0) = 1.0;
  const Dataset one = prepare_dataset(parse_samples(R"({"num_nodes": 2, "edges": [[0, 1]], "node_features": [[1], [0]], "target": 1})"), 2);
  EXPECT_EQ(evaluate(exact, one), 0.0);

  ModelConfig wide = cfg;
  wide.input_dim = 3;
  EXPECT_EQ(kind_of([&] { evaluate(GadModel::zeros(wide, 1.0), ds); }), ErrorKind::ConfigMismatch);
}

TEST(Training, BatchGradientIsAverageOfPerGraphGradients) {
  const Dataset ds = prepare_dataset(synth_directional_task(4, 12), 20);
  ModelConfig cfg;
  cfg.hidden_width = 4;
  cfg.num_layers = 2;
  const GadModel m = GadModel::create(cfg, dataset_degree_delta(ds), 3);
  const std::vector<std::size_t> batch{2, 0, 3, 1};
  const BatchGradient together = batch_gradient(m, ds, batch);
  std::vector<Gradients> singles;
  for (std::size_t idx : batch) singles.push_back(batch_gradient(m, ds, {idx}).grads);
  for (std::size_t p = 0; p < together.grads.size(); ++p) {
    Matrix sum = Matrix::Zero(together.grads[p].rows(), together.grads[p].cols());
    for (const auto& g : singles) sum += g[p];
    EXPECT_TRUE(bitwise_equal(together.grads[p], Matrix(sum * 0.25)));
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(together.losses[i], mae_loss(predict(m, ds.graphs[batch[i]]), ds.targets[batch[i]]).loss);
  }
}

TEST(Training, ZeroEpochsEvaluatesInitialModelOnly) {
  const Dataset ds = prepare_dataset(synth_directional_task(10, 1), 6);
  ExperimentConfig cfg = tiny_experiment();
  cfg.epochs = 0;
  const TrainResult r = train(cfg, ds, nullptr, &ds);
  ASSERT_EQ(r.log.epochs.size(), 1u);
  EXPECT_EQ(r.log.epochs[0].epoch, 0);
  EXPECT_EQ(*r.log.epochs[0].test_mae, r.log.epochs[0].train_loss);
}

TEST(Training, ZeroLearningRateKeepsLossConstant) {
  const Dataset ds = prepare_dataset(synth_directional_task(10, 1), 6);
  ExperimentConfig cfg = tiny_experiment();
  cfg.lr = 0.0;
  cfg.epochs = 4;
  const TrainResult r = train(cfg, ds, &ds, nullptr);
  for (const auto& e : r.log.epochs) {
    EXPECT_NEAR(e.train_loss, r.log.epochs[0].train_loss, 1e-13);
    EXPECT_EQ(*e.val_mae, *r.log.epochs[0].val_mae);
  }
}

TEST(Training, DeterministicAndLearns) {
  const Dataset ds = prepare_dataset(synth_directional_task(24, 2), 6);
  ExperimentConfig cfg = tiny_experiment();
  cfg.epochs = 15;
  cfg.lr = 5e-3;
  cfg.model.dropout = 0.1;
  const TrainResult a = train(cfg, ds, &ds, &ds);
  const TrainResult b = train(cfg, ds, &ds, &ds);
  EXPECT_EQ(metrics_to_json(a.log).dump(), metrics_to_json(b.log).dump());
  EXPECT_LT(a.log.epochs.back().train_loss, a.log.epochs.front().train_loss);
  EXPECT_EQ(a.log.epochs.size(), 16u);
  const double best = *a.log.epochs[static_cast<std::size_t>(a.log.best_epoch)].val_mae;
  EXPECT_EQ(evaluate(a.best_model, ds), best);
  cfg.seed = 6;
  EXPECT_NE(metrics_to_json(train(cfg, ds, &ds, &ds).log).dump(), metrics_to_json(a.log).dump());
}

TEST(Training, DivergenceIsReported) {
  const Dataset ds = prepare_dataset(synth_directional_task(8, 3), 6);
  ExperimentConfig cfg = tiny_experiment();
  cfg.lr = 1e300;
  cfg.epochs = 5;
  const TrainResult r = train(cfg, ds);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.divergence_message.empty());
  EXPECT_TRUE(r.last_good_model.embed_weight.allFinite());
}

TEST(Training, FileLevelRunWritesArtifacts) {
  const auto dir = scratch("filerun");
  write_samples((dir / "train.json").string(), synth_directional_task(12, 8));
  write_samples((dir / "test.json").string(), synth_directional_task(4, 9));
  ExperimentConfig cfg = tiny_experiment();
  cfg.train_path = (dir / "train.json").string();
  cfg.test_path = (dir / "test.json").string();
  cfg.output_dir = (dir / "out").string();
  std::optional<ExperimentConfig> seen;
  const TrainResult r = train(cfg, nullptr, [&](const ExperimentConfig& c) { seen = c; });
  ASSERT_TRUE(seen);
  EXPECT_EQ(seen->model.input_dim, 1);
  for (const char* f : {"config.json", "metrics.json", "timing.json", "checkpoint.json"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  const GadModel best = load_checkpoint((dir / "out" / "checkpoint.json").string());
  const Dataset test = load_dataset(cfg.test_path, cfg.model.bandwidth);
  EXPECT_EQ(evaluate(best, test), *r.log.epochs[static_cast<std::size_t>(r.log.best_epoch)].test_mae);
}
