// Command-line front end: training, evaluation, spectral/kernel/filter export,
// synthetic data generation and the finite-difference gradient check.
//
// Exit codes: 0 success, 1 usage error, 2 data validation error,
// 3 numerical divergence (including a failed gradient check).

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#ifdef GAD_CLI11_PACKAGE
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include "gad/gad.hpp"

namespace {

using gad::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(const gad::Error& e) {
  switch (e.kind()) {
    case gad::ErrorKind::ConfigError:
      return kExitUsage;
    case gad::ErrorKind::DivergenceDetected:
    case gad::ErrorKind::NonFiniteActivation:
    case gad::ErrorKind::ConvergenceFailure:
    case gad::ErrorKind::SolverFailure:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

gad::Graph read_graph(const std::string& path, int index) {
  auto samples = gad::read_samples(path);
  if (index < 0 || index >= static_cast<int>(samples.size())) {
    throw gad::Error(gad::ErrorKind::ValidationError,
                     "graph index " + std::to_string(index) + " not in '" + path + "' (" +
                         std::to_string(samples.size()) + " graphs)");
  }
  return std::move(samples[static_cast<std::size_t>(index)].graph);
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gad::Error(gad::ErrorKind::ConfigError, "cannot write '" + path + "'");
  out << text;
}

std::vector<double> to_std(const gad::Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

struct TrainArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string output_dir;
  int epochs = -1;
  bool quiet = false;
};

int run_train(const TrainArgs& args) {
  std::ifstream in(args.config);
  if (!in) throw gad::Error(gad::ErrorKind::ConfigError, "cannot open config '" + args.config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw gad::Error(gad::ErrorKind::ConfigError, std::string("config: ") + e.what());
  }
  gad::ExperimentConfig cfg = gad::experiment_config_from_json(j);
  cfg.seed = args.seed;
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (args.epochs >= 0) cfg.epochs = args.epochs;

  auto on_config = [](const gad::ExperimentConfig& effective) {
    std::cout << gad::experiment_config_to_json(effective).dump(2) << std::endl;
  };
  auto on_epoch = [&args](const gad::EpochRecord& r) {
    if (args.quiet) return;
    std::cerr << "epoch " << r.epoch << " train_loss " << r.train_loss;
    if (r.val_mae) std::cerr << " val_mae " << *r.val_mae;
    if (r.test_mae) std::cerr << " test_mae " << *r.test_mae;
    std::cerr << '\n';
  };
  const gad::TrainResult result = gad::train(cfg, on_epoch, on_config);
  const auto& last = result.log.epochs.back();
  std::cout << "best_epoch " << result.log.best_epoch << " final_train_loss " << last.train_loss;
  if (last.test_mae) std::cout << " final_test_mae " << *last.test_mae;
  std::cout << std::endl;
  return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& data) {
  const gad::GadModel model = gad::load_checkpoint(checkpoint);
  const gad::Dataset ds = gad::load_dataset(data, model.config.bandwidth);
  const double mae = gad::evaluate(model, ds);
  std::cout << json{{"mae", mae}, {"graphs", ds.size()}}.dump() << std::endl;
  return 0;
}

int run_eig(const std::string& graph_path, int index, int k, const std::string& out) {
  const gad::Graph g = read_graph(graph_path, index);
  const gad::SpectralDecomposition sd = gad::decompose(g, k);
  json vectors = json::array();
  for (int c = 0; c < sd.bandwidth(); ++c) vectors.push_back(to_std(sd.eigenvectors().col(c)));
  json doc{{"num_nodes", g.node_count()},
           {"k", sd.bandwidth()},
           {"eigenvalues", to_std(sd.eigenvalues())},
           {"eigenvectors", std::move(vectors)}};
  if (sd.bandwidth() >= 2) doc["fiedler"] = to_std(sd.fiedler());
  write_text(out, doc.dump(1) + "\n");
  return 0;
}

struct KernelArgs {
  std::string graph;
  int index = 0;
  std::string scheme = "implicit";
  double t = 1.0;
  int k = 20;
  int source = 0;
  bool anisotropic = false;
  std::string out = "-";
};

int run_kernel(const KernelArgs& a) {
  const gad::Graph g = read_graph(a.graph, a.index);
  const int n = g.node_count();
  if (a.source < 0 || a.source >= n) {
    throw gad::Error(gad::ErrorKind::IndexOutOfRange, "source node outside the graph");
  }
  const gad::Scheme scheme = gad::parse_scheme(a.scheme);
  const gad::StructuralMatrices sm = gad::structural_matrices(g);
  gad::Matrix onehot = gad::Matrix::Zero(n, 1);
  onehot(a.source, 0) = 1.0;
  const gad::Vector times = gad::Vector::Constant(1, a.t);
  gad::Matrix heat;
  if (scheme == gad::Scheme::Implicit) {
    heat = gad::diffuse_implicit(sm, onehot, times).values;
  } else {
    heat = gad::diffuse_spectral(gad::decompose(g, sm, a.k), sm, onehot, times).values;
  }

  std::ostringstream csv;
  csv << std::setprecision(17);
  if (!a.anisotropic) {
    csv << "node,value\n";
    for (int i = 0; i < n; ++i) csv << i << ',' << heat(i, 0) << '\n';
  } else {
    const gad::AnisotropicOperators ops = gad::build_operators(g, gad::fiedler_vector(g));
    const auto [av, dx] = gad::apply_directional(ops, heat);
    csv << "node,heat,av,dx\n";
    for (int i = 0; i < n; ++i) {
      csv << i << ',' << heat(i, 0) << ',' << av(i, 0) << ',' << dx(i, 0) << '\n';
    }
  }
  write_text(a.out, csv.str());
  return 0;
}

int run_filters(const std::string& graph_path, int index, int node, const std::string& out) {
  const gad::Graph g = read_graph(graph_path, index);
  if (node < 0 || node >= g.node_count()) {
    throw gad::Error(gad::ErrorKind::IndexOutOfRange, "node outside the graph");
  }
  const gad::Vector phi = gad::fiedler_vector(g);
  const gad::AnisotropicOperators ops = gad::build_operators(g, phi);
  json doc{{"node", node},
           {"neighbors", g.neighbors(node)},
           {"fiedler", to_std(phi)},
           {"b_av", to_std(ops.b_av.row(node).transpose())},
           {"b_dx", to_std(ops.b_dx.row(node).transpose())}};
  write_text(out, doc.dump(1) + "\n");
  return 0;
}

int run_synth(int num_graphs, std::uint64_t seed, const std::string& out, int min_nodes,
              int max_nodes) {
  gad::SynthOptions opts;
  opts.min_nodes = min_nodes;
  opts.max_nodes = max_nodes;
  if (min_nodes < 3 || max_nodes < min_nodes) {
    throw gad::Error(gad::ErrorKind::ConfigError, "need 3 <= min-nodes <= max-nodes");
  }
  const auto samples = gad::synth_directional_task(num_graphs, seed, opts);
  if (out == "-") {
    json doc = json::array();
    for (const auto& s : samples) doc.push_back(gad::sample_to_json(s));
    std::cout << doc.dump() << '\n';
  } else {
    gad::write_samples(out, samples);
  }
  return 0;
}

int run_check_grad(std::uint64_t seed, double tolerance) {
  double worst = 0.0;
  auto report = [&worst](const std::string& label, const gad::GradCheckReport& r) {
    std::cout << std::left << std::setw(22) << label << " max_rel_error " << std::scientific
              << std::setprecision(3) << r.max_rel_error << "  entries " << r.entries
              << "  worst " << r.worst << std::defaultfloat << '\n';
    worst = std::max(worst, r.max_rel_error);
  };
  for (gad::Scheme s : {gad::Scheme::Implicit, gad::Scheme::Spectral}) {
    report("diffusion/" + gad::to_string(s), gad::check_diffusion_gradients(s, seed));
  }
  for (gad::Scheme s : {gad::Scheme::Implicit, gad::Scheme::Spectral}) {
    report("model/" + gad::to_string(s), gad::check_model_gradients(s, seed));
  }
  const bool ok = worst <= tolerance;
  std::cout << "max_rel_error " << format_double(worst) << " tolerance " << tolerance << ' '
            << (ok ? "PASS" : "FAIL") << std::endl;
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph anisotropic diffusion: training and diagnostics"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", train_args.config, "Experiment config (JSON)")->required();
  train->add_option("--seed", train_args.seed, "RNG seed")->required();
  train->add_option("--output-dir", train_args.output_dir, "Overrides output_dir in the config");
  train->add_option("--epochs", train_args.epochs, "Overrides epochs in the config");
  train->add_flag("--quiet", train_args.quiet, "No per-epoch progress on stderr");

  std::string checkpoint, data;
  auto* evaluate = app.add_subcommand("evaluate", "MAE of a checkpoint on a dataset");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--data", data)->required();

  std::string graph_path, out = "-";
  int graph_index = 0, k = 20, node = 0;
  auto* eig = app.add_subcommand("eig", "Generalized Laplacian eigenpairs as JSON");
  eig->add_option("--graph", graph_path)->required();
  eig->add_option("--index", graph_index, "Graph index within a dataset file");
  eig->add_option("--k", k, "Number of eigenpairs")->required();
  eig->add_option("--out", out, "Output file, - for stdout");

  KernelArgs kernel_args;
  auto* kernel = app.add_subcommand("kernel", "Diffuse a one-hot source and write CSV");
  kernel->add_option("--graph", kernel_args.graph)->required();
  kernel->add_option("--index", kernel_args.index);
  kernel->add_option("--scheme", kernel_args.scheme)->check(CLI::IsMember({"implicit", "spectral"}));
  kernel->add_option("--t", kernel_args.t, "Diffusion time")->check(CLI::NonNegativeNumber);
  kernel->add_option("--k", kernel_args.k, "Bandwidth for the spectral scheme");
  kernel->add_option("--source", kernel_args.source, "Source node")->required();
  kernel->add_flag("--anisotropic", kernel_args.anisotropic, "Also apply b_av and b_dx");
  kernel->add_option("--out", kernel_args.out);

  auto* filters = app.add_subcommand("filters", "b_av / b_dx rows of one node as JSON");
  filters->add_option("--graph", graph_path)->required();
  filters->add_option("--index", graph_index);
  filters->add_option("--node", node)->required();
  filters->add_option("--out", out);

  int num_graphs = 0, min_nodes = 6, max_nodes = 20;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic directional task");
  synth->add_option("--num-graphs", num_graphs)->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed)->required();
  synth->add_option("--out", out);
  synth->add_option("--min-nodes", min_nodes);
  synth->add_option("--max-nodes", max_nodes);

  double tolerance = 1e-4;
  std::uint64_t grad_seed = 2024;
  auto* check_grad = app.add_subcommand("check-grad", "Analytic vs finite-difference gradients");
  check_grad->add_option("--seed", grad_seed);
  check_grad->add_option("--tolerance", tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return run_train(train_args);
    if (*evaluate) return run_evaluate(checkpoint, data);
    if (*eig) return run_eig(graph_path, graph_index, k, out);
    if (*kernel) return run_kernel(kernel_args);
    if (*filters) return run_filters(graph_path, graph_index, node, out);
    if (*synth) return run_synth(num_graphs, seed, out, min_nodes, max_nodes);
    if (*check_grad) return run_check_grad(grad_seed, tolerance);
  } catch (const gad::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitData;
  }
  return kExitUsage;
}
