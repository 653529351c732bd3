#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fossil/checkpoint.hpp"
#include "fossil/pipeline.hpp"

namespace fs = std::filesystem;
using fossil::TrainConfig;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = omp_get_num_procs();
  std::string out = "fossil_out";
};

struct GraphFiles {
  std::string edges;
  std::string features;
  std::string labels;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON training config");
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--threads", c.threads, "OT solver threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output directory");
}

void add_graph(CLI::App* cmd, GraphFiles& g, bool labels_required) {
  cmd->add_option("--edges", g.edges, "edge list (u v per line)")->required();
  cmd->add_option("--features", g.features, "comma-separated feature rows")->required();
  auto* opt = cmd->add_option("--labels", g.labels, "one integer label per line");
  if (labels_required) opt->required();
}

TrainConfig load_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

fossil::Graph load(const GraphFiles& files, const TrainConfig& cfg) {
  std::optional<fs::path> labels;
  if (!files.labels.empty()) labels = files.labels;
  auto loaded = fossil::load_graph(files.edges, files.features, labels);
  if (loaded.report.self_loops_dropped > 0 || loaded.report.duplicates_dropped > 0) {
    std::clog << "note: dropped " << loaded.report.self_loops_dropped << " self-loops and "
              << loaded.report.duplicates_dropped << " duplicate edges\n";
  }
  fossil::prepare_graph(loaded.graph, cfg);
  return std::move(loaded.graph);
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

fossil::SplitMode parse_split(const std::string& s) {
  if (s == "planetoid") return fossil::SplitMode::kPlanetoid;
  if (s == "fractional") return fossil::SplitMode::kFractional;
  throw std::invalid_argument("unknown split mode '" + s + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::stringstream is(item);
    T v{};
    if (!(is >> v)) throw std::invalid_argument("bad list element '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int run_train(const Common& c, const GraphFiles& files) {
  const TrainConfig cfg = load_config(c);
  const fossil::Graph g = load(files, cfg);
  const fs::path dir = out_dir(c);

  fossil::Trainer trainer(g, cfg, c.threads);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  auto result = fossil::train(trainer, [&](const fossil::MetricsRecord& r) {
    metrics << r.to_json().dump() << '\n' << std::flush;
    std::cout << "epoch " << r.epoch << "  total " << r.total << "  ot " << r.l_ot << "  node "
              << r.l_node << "  fusion " << r.l_fusion << "  (" << r.step_ms << " ms)\n";
  });
  fossil::save_checkpoint(dir / "checkpoint.bin", trainer.model(), cfg);

  json summary = {{"command", "train"},
                  {"config", cfg.to_json()},
                  {"config_hash", cfg.hash()},
                  {"epochs_completed", result.metrics.size()},
                  {"checkpoint", (dir / "checkpoint.bin").string()}};
  if (!result.metrics.empty()) summary["final"] = result.metrics.back().to_json();
  if (result.divergence) summary["divergence"] = *result.divergence;
  write_json(dir / "summary.json", summary);
  if (result.divergence) {
    std::cerr << "error: " << *result.divergence << "; kept the last good weights\n";
    return 2;
  }
  return 0;
}

int run_eval(const Common& c, const GraphFiles& files, const std::string& checkpoint, int seeds,
             const std::string& split) {
  auto ckpt = fossil::load_checkpoint(checkpoint);
  const fossil::Graph g = load(files, ckpt.config);
  if (ckpt.model.dims().input != g.num_features()) {
    throw std::invalid_argument("checkpoint expects " + std::to_string(ckpt.model.dims().input) +
                                " features, graph has " + std::to_string(g.num_features()));
  }
  const auto ctx = fossil::make_context(g, ckpt.config.degree_feature);
  const fossil::Matrix h = ckpt.model.embed(ctx);
  const auto report = fossil::evaluate_embeddings(h, g, parse_split(split), seeds);
  json summary = {{"command", "eval"}, {"split", split}, {"report", fossil::to_json(report)}};
  write_json(out_dir(c) / "summary.json", summary);
  std::cout << "accuracy " << report.mean << " +- " << report.stddev << "  95% CI ["
            << report.ci.lower << ", " << report.ci.upper << "]  majority " << report.majority_rate
            << '\n';
  return 0;
}

int run_sweep(const Common& c, const GraphFiles& files, const std::string& grid_text,
              fossil::SweepOptions options, const std::string& split) {
  const TrainConfig cfg = load_config(c);
  const fossil::Graph g = load(files, cfg);
  std::vector<double> grid;
  if (grid_text.empty()) {
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  } else {
    grid = parse_list<double>(grid_text);
  }
  options.threads = c.threads;
  options.split_mode = parse_split(split);
  const fs::path dir = out_dir(c);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  json rows = json::array();
  for (double a : grid) {
    auto row = fossil::sweep_alpha(g, cfg, {a}, options).front();
    metrics << fossil::to_json(row).dump() << '\n' << std::flush;
    std::cout << "alpha " << row.alpha << "  accuracy " << row.mean << " +- " << row.stddev << '\n';
    rows.push_back(fossil::to_json(row));
  }
  write_json(dir / "summary.json", {{"command", "sweep-alpha"}, {"rows", rows}});
  return 0;
}

int run_bench(const Common& c, fossil::BenchOptions options, const std::string& sizes) {
  TrainConfig cfg = load_config(c);
  if (c.config.empty()) {
    cfg.num_anchors = 300;
    cfg.hidden = 512;
  }
  options.sizes = parse_list<int>(sizes);
  options.threads = c.threads;
  options.seed = cfg.seed;
  const fs::path dir = out_dir(c);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  json rows = json::array();
  for (int n : options.sizes) {
    auto one = options;
    one.sizes = {n};
    const auto row = fossil::bench_timing(cfg, one).front();
    metrics << fossil::to_json(row).dump() << '\n' << std::flush;
    std::cout << "N " << row.num_nodes << "  step " << row.mean_step_ms << " ms  ot "
              << row.mean_ms.ot << " ms  node " << row.mean_ms.node_loss << " ms  buffer "
              << row.mean_buffer_rows << "/" << row.buffer_capacity << '\n';
    rows.push_back(fossil::to_json(row));
  }
  write_json(dir / "summary.json", {{"command", "bench"}, {"config", cfg.to_json()}, {"rows", rows}});
  return 0;
}

int run_distance(const Common& c, const GraphFiles& a, const GraphFiles& b,
                 std::optional<double> alpha, std::optional<double> beta) {
  const TrainConfig cfg = load_config(c);
  fossil::ot::FgwConfig fgw = cfg.fgw();
  if (alpha) fgw.alpha = *alpha;
  if (beta) fgw.beta = *beta;
  fgw.validate();
  const fossil::Graph ga = load(a, cfg);
  const fossil::Graph gb = load(b, cfg);
  std::cout << fossil::distance(ga, gb, fgw).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgraph optimal-transport contrastive learning on graphs"};
  app.require_subcommand(1);

  Common common;
  GraphFiles files;

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train, common);
  add_graph(train, files, false);

  auto* eval = app.add_subcommand("eval", "linear-probe a checkpoint's embeddings");
  add_common(eval, common);
  add_graph(eval, files, true);
  std::string checkpoint;
  int eval_seeds = 10;
  std::string split = "planetoid";
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--seeds", eval_seeds, "number of split seeds")->check(CLI::PositiveNumber);
  eval->add_option("--split", split, "planetoid | fractional");

  auto* sweep = app.add_subcommand("sweep-alpha", "accuracy as a function of alpha");
  add_common(sweep, common);
  add_graph(sweep, files, true);
  std::string grid;
  fossil::SweepOptions sweep_opts;
  sweep->add_option("--grid", grid, "comma-separated alphas (default 0,0.1,...,1)");
  sweep->add_option("--train-seeds", sweep_opts.train_seeds)->check(CLI::PositiveNumber);
  sweep->add_option("--eval-seeds", sweep_opts.eval_seeds)->check(CLI::PositiveNumber);
  sweep->add_option("--split", split, "planetoid | fractional");

  auto* bench = app.add_subcommand("bench", "per-phase step timing on cSBM graphs");
  add_common(bench, common);
  fossil::BenchOptions bench_opts;
  std::string sizes = "1000,10000";
  bench->add_option("--sizes", sizes, "comma-separated node counts");
  bench->add_option("--iterations", bench_opts.iterations)->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_opts.warmup)->check(CLI::NonNegativeNumber);
  bench->add_option("--features", bench_opts.num_features)->check(CLI::PositiveNumber);
  bench->add_option("--intra-degree", bench_opts.expected_intra_degree);
  bench->add_option("--inter-degree", bench_opts.expected_inter_degree);

  auto* dist = app.add_subcommand("distance", "FGW distance between two graphs, as JSON");
  add_common(dist, common);
  GraphFiles other;
  std::optional<double> alpha, beta;
  dist->add_option("--edges", files.edges)->required();
  dist->add_option("--features", files.features)->required();
  dist->add_option("--edges-b", other.edges)->required();
  dist->add_option("--features-b", other.features)->required();
  dist->add_option("--alpha", alpha)->check(CLI::Range(0.0, 1.0));
  dist->add_option("--beta", beta)->check(CLI::PositiveNumber);

  auto* csbm = app.add_subcommand("generate-csbm", "write a synthetic cSBM graph");
  fossil::CsbmParams csbm_params;
  std::string prefix = "csbm";
  csbm->add_option("--nodes", csbm_params.num_nodes)->check(CLI::PositiveNumber);
  csbm->add_option("--features", csbm_params.num_features)->check(CLI::PositiveNumber);
  csbm->add_option("--classes", csbm_params.num_classes)->check(CLI::PositiveNumber);
  csbm->add_option("--p", csbm_params.p_intra, "intra-class edge probability");
  csbm->add_option("--q", csbm_params.p_inter, "inter-class edge probability");
  csbm->add_option("--signal", csbm_params.signal);
  csbm->add_option("--seed", csbm_params.seed);
  csbm->add_option("--prefix", prefix, "writes <prefix>.edges/.features/.labels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(common, files);
    if (*eval) return run_eval(common, files, checkpoint, eval_seeds, split);
    if (*sweep) return run_sweep(common, files, grid, sweep_opts, split);
    if (*bench) return run_bench(common, bench_opts, sizes);
    if (*dist) return run_distance(common, files, other, alpha, beta);
    if (*csbm) {
      const auto g = fossil::generate_csbm(csbm_params);
      fossil::save_graph(g, prefix + ".edges", prefix + ".features", prefix + ".labels");
      std::cout << "wrote " << g.num_nodes() << " nodes, " << g.edges().size()
                << " edges, homophily " << fossil::homophily(g) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
