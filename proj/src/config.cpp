#include "fossil/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>

namespace fossil {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("TrainConfig: " + what);
}

bool in_grid(double v, std::initializer_list<double> grid) {
  return std::any_of(grid.begin(), grid.end(),
                     [v](double g) { return std::abs(v - g) <= 1e-12 * std::max(1.0, g); });
}

std::string node_loss_name(NodeLossVariant v) { return v == NodeLossVariant::kFull ? "full" : "v2"; }

NodeLossVariant parse_node_loss(const std::string& s) {
  if (s == "full") return NodeLossVariant::kFull;
  if (s == "v2") return NodeLossVariant::kV2;
  throw std::invalid_argument("TrainConfig: node_loss must be 'full' or 'v2', got '" + s + "'");
}

}  // namespace

void TrainConfig::validate() const {
  require(lr > 0 && lr_fusion > 0, "learning rates must be positive");
  require(alpha >= 0 && alpha <= 1, "alpha must lie in [0,1]");
  require(beta > 0, "beta must be positive");
  require(k >= 2, "k must be at least 2");
  require(tau > 0, "tau must be positive");
  require(dropout >= 0 && dropout < 1 && fusion_dropout >= 0 && fusion_dropout < 1,
          "dropout rates must lie in [0,1)");
  require(beta1 >= 0 && beta2 >= 0, "beta1 and beta2 must be non-negative");
  require(num_anchors >= 0, "num_anchors must be non-negative");
  require(num_negatives == 1 || num_negatives == 2, "num_negatives must be 1 or 2");
  require(epochs >= 0, "epochs must be non-negative");
  require(hidden > 0 && out > 0, "layer widths must be positive");
  require(bapg_max_iter >= 1 && bapg_tol >= 0 && bapg_init_jitter >= 0, "invalid BAPG controls");
  if (!range_checked) return;
  const auto rates = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
  require(in_grid(lr, rates), "lr outside its search grid");
  require(in_grid(lr_fusion, rates), "lr_fusion outside its search grid");
  require(in_grid(alpha * 10, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), "alpha outside {0, 0.1, ..., 1}");
  require(in_grid(beta, {1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1, 1.5, 2}), "beta outside its grid");
  require(k >= 10 && k <= 30, "k outside [10, 30]");
  require(in_grid(tau, {0.2, 0.5, 0.8, 1.0, 1.5, 2.0, 2.5, 3.0}), "tau outside its grid");
  require(in_grid(dropout, {0.1, 0.2, 0.3, 0.4}), "dropout outside its grid");
  require(in_grid(fusion_dropout, {0.1, 0.2, 0.3, 0.4}), "fusion_dropout outside its grid");
  require(beta2 == 1.0, "beta2 is fixed to 1");
}

ot::FgwConfig TrainConfig::fgw() const {
  ot::FgwConfig c;
  c.alpha = alpha;
  c.beta = beta;
  c.max_iter = bapg_max_iter;
  c.tol = bapg_tol;
  c.tau = tau;
  c.init_jitter = bapg_init_jitter;
  c.seed = seed;
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"lr_fusion", lr_fusion},
          {"alpha", alpha},
          {"beta", beta},
          {"k", k},
          {"tau", tau},
          {"dropout", dropout},
          {"fusion_dropout", fusion_dropout},
          {"beta1", beta1},
          {"beta2", beta2},
          {"num_anchors", num_anchors},
          {"num_negatives", num_negatives},
          {"epochs", epochs},
          {"hidden", hidden},
          {"out", out},
          {"seed", seed},
          {"node_loss", node_loss_name(node_loss)},
          {"degree_feature", to_string(degree_feature)},
          {"bapg_max_iter", bapg_max_iter},
          {"bapg_tol", bapg_tol},
          {"bapg_init_jitter", bapg_init_jitter},
          {"normalize_cost_embeddings", normalize_cost_embeddings},
          {"shuffled_bfs", shuffled_bfs},
          {"row_normalize_features", row_normalize_features},
          {"fusion_mean_similarity", fusion_mean_similarity},
          {"range_checked", range_checked}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("TrainConfig: expected a JSON object");
  TrainConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument(std::string("TrainConfig: bad value for '") + key + "'");
    }
  };
  get("lr", c.lr);
  get("lr_fusion", c.lr_fusion);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("k", c.k);
  get("tau", c.tau);
  get("dropout", c.dropout);
  get("fusion_dropout", c.fusion_dropout);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("num_anchors", c.num_anchors);
  get("num_negatives", c.num_negatives);
  get("epochs", c.epochs);
  get("hidden", c.hidden);
  get("out", c.out);
  get("seed", c.seed);
  std::string s;
  if (j.contains("node_loss")) {
    get("node_loss", s);
    c.node_loss = parse_node_loss(s);
  }
  if (j.contains("degree_feature")) {
    get("degree_feature", s);
    c.degree_feature = parse_degree_feature(s);
  }
  get("bapg_max_iter", c.bapg_max_iter);
  get("bapg_tol", c.bapg_tol);
  get("bapg_init_jitter", c.bapg_init_jitter);
  get("normalize_cost_embeddings", c.normalize_cost_embeddings);
  get("shuffled_bfs", c.shuffled_bfs);
  get("row_normalize_features", c.row_normalize_features);
  get("fusion_mean_similarity", c.fusion_mean_similarity);
  get("range_checked", c.range_checked);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string TrainConfig::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fossil
