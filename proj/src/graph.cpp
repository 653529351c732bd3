#include "fossil/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fossil {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::vector<double>> read_feature_rows(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty()) {
      throw GraphFormatError(path, lineno, "empty feature row");
    }
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= body.size()) {
      auto comma = body.find(',', start);
      if (comma == std::string_view::npos) comma = body.size();
      auto tok = trim(body.substr(start, comma - start));
      double v = 0;
      if (!parse_number(tok, v) || !std::isfinite(v)) {
        throw GraphFormatError(path, lineno, "unparsable value '" + std::string(tok) + "'");
      }
      row.push_back(v);
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw GraphFormatError(path, lineno,
                             "ragged row: " + std::to_string(row.size()) + " values, expected " +
                                 std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

// ---- Graph --------------------------------------------------------------------

Graph::Graph(int num_nodes, std::vector<std::pair<NodeId, NodeId>> edges, Matrix features,
             std::optional<std::vector<int>> labels)
    : num_nodes_(num_nodes), features_(std::move(features)), labels_(std::move(labels)) {
  if (num_nodes < 0) throw std::invalid_argument("Graph: negative node count");
  if (features_.rows() != num_nodes) {
    throw std::invalid_argument("Graph: feature rows " + std::to_string(features_.rows()) +
                                " != node count " + std::to_string(num_nodes));
  }
  if (labels_ && static_cast<int>(labels_->size()) != num_nodes) {
    throw std::invalid_argument("Graph: label count does not match node count");
  }
  if (labels_) {
    for (int y : *labels_) {
      if (y < 0) throw std::invalid_argument("Graph: negative class id");
    }
  }
  for (auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw std::out_of_range("Graph: edge endpoint out of range");
    }
    if (u == v) throw std::invalid_argument("Graph: self-loop " + std::to_string(u));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  std::vector<int> deg(num_nodes, 0);
  for (const auto& [u, v] : edges_) {
    ++deg[u];
    ++deg[v];
  }
  offsets_.assign(num_nodes + 1, 0);
  for (int i = 0; i < num_nodes; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
  columns_.resize(offsets_.back());
  std::vector<std::int64_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [u, v] : edges_) {
    columns_[fill[u]++] = v;
    columns_[fill[v]++] = u;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(columns_.size());
  for (int i = 0; i < num_nodes; ++i) {
    std::sort(columns_.begin() + offsets_[i], columns_.begin() + offsets_[i + 1]);
    for (auto p = offsets_[i]; p < offsets_[i + 1]; ++p) trips.emplace_back(i, columns_[p], 1.0);
  }
  adjacency_.resize(num_nodes, num_nodes);
  adjacency_.setFromTriplets(trips.begin(), trips.end());
}

const std::vector<int>& Graph::labels() const {
  if (!labels_) throw std::logic_error("graph has no labels");
  return *labels_;
}

int Graph::num_classes() const {
  const auto& y = labels();
  return y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1;
}

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  return {columns_.data() + offsets_[v], static_cast<std::size_t>(offsets_[v + 1] - offsets_[v])};
}

// ---- I/O ----------------------------------------------------------------------

LoadedGraph load_graph(const std::filesystem::path& edge_file,
                       const std::filesystem::path& feature_file,
                       const std::optional<std::filesystem::path>& label_file) {
  const auto rows = read_feature_rows(feature_file);
  const int n = static_cast<int>(rows.size());
  const std::size_t f = rows.empty() ? 0 : rows.front().size();
  Matrix x(n, static_cast<Eigen::Index>(f));
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) x(i, static_cast<Eigen::Index>(j)) = rows[i][j];
  }

  LoadReport report;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::set<std::pair<NodeId, NodeId>> seen;
  {
    auto in = open_input(edge_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      std::istringstream ss{std::string(body)};
      std::string a, b, extra;
      if (!(ss >> a >> b) || (ss >> extra)) {
        throw GraphFormatError(edge_file, lineno, "expected 'u v', got '" + std::string(body) + "'");
      }
      long long u = 0, v = 0;
      if (!parse_number(std::string_view(a), u) || !parse_number(std::string_view(b), v)) {
        throw GraphFormatError(edge_file, lineno, "non-integer node id");
      }
      if (u < 0 || v < 0 || u >= n || v >= n) {
        throw GraphFormatError(edge_file, lineno,
                               "node id out of range (feature file has " + std::to_string(n) +
                                   " rows)");
      }
      if (u == v) {
        ++report.self_loops_dropped;
        continue;
      }
      const std::pair<NodeId, NodeId> e{static_cast<NodeId>(std::min(u, v)), static_cast<NodeId>(std::max(u, v))};
      if (!seen.insert(e).second) {
        ++report.duplicates_dropped;
        continue;
      }
      edges.emplace_back(e);
    }
  }

  std::optional<std::vector<int>> labels;
  if (label_file) {
    auto in = open_input(*label_file);
    std::vector<int> y;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto body = trim(line);
      int c = 0;
      if (!parse_number(body, c) || c < 0) {
        throw GraphFormatError(*label_file, lineno, "invalid class id '" + std::string(body) + "'");
      }
      y.push_back(c);
    }
    if (static_cast<int>(y.size()) != n) {
      throw GraphFormatError(*label_file, lineno,
                             "label count " + std::to_string(y.size()) + " != node count " +
                                 std::to_string(n));
    }
    labels = std::move(y);
  }
  return {Graph(n, std::move(edges), std::move(x), std::move(labels)), report};
}

void save_graph(const Graph& g, const std::filesystem::path& edge_file,
                const std::filesystem::path& feature_file,
                const std::optional<std::filesystem::path>& label_file) {
  {
    auto out = open_output(edge_file);
    for (const auto& [u, v] : g.edges()) out << u << ' ' << v << '\n';
  }
  {
    auto out = open_output(feature_file);
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < g.features().rows(); ++i) {
      for (Eigen::Index j = 0; j < g.features().cols(); ++j) {
        if (j) out << ',';
        out << g.features()(i, j);
      }
      out << '\n';
    }
  }
  if (label_file) {
    auto out = open_output(*label_file);
    for (int y : g.labels()) out << y << '\n';
  }
}

// ---- structure ------------------------------------------------------------------

SparseMatrix normalized_adjacency(const Graph& g) {
  const int n = g.num_nodes();
  Vector inv_sqrt(n);
  for (int i = 0; i < n; ++i) {
    const int d = g.degree(i);
    inv_sqrt(i) = d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 0.0;
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n; ++i) {
    for (NodeId j : g.neighbors(i)) trips.emplace_back(i, j, inv_sqrt(i) * inv_sqrt(j));
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

double homophily(const Graph& g) {
  if (!g.has_labels()) throw std::invalid_argument("homophily: graph has no labels");
  const auto& y = g.labels();
  double total = 0;
  int counted = 0;
  for (int i = 0; i < g.num_nodes(); ++i) {
    const auto nbrs = g.neighbors(i);
    if (nbrs.empty()) continue;
    const auto same = std::count_if(nbrs.begin(), nbrs.end(), [&](NodeId j) { return y[j] == y[i]; });
    total += static_cast<double>(same) / static_cast<double>(nbrs.size());
    ++counted;
  }
  return counted ? total / counted : 0.0;
}

Matrix induced_subgraph(const Graph& g, std::span<const NodeId> indices) {
  std::vector<NodeId> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("induced_subgraph: duplicate node index");
  }
  const auto k = static_cast<Eigen::Index>(indices.size());
  Matrix out = Matrix::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const NodeId u = indices[a];
    if (u < 0 || u >= g.num_nodes()) throw std::out_of_range("induced_subgraph: index out of range");
    const auto nbrs = g.neighbors(u);
    for (Eigen::Index b = 0; b < k; ++b) {
      if (std::binary_search(nbrs.begin(), nbrs.end(), indices[b])) out(a, b) = 1.0;
    }
  }
  return out;
}

void row_normalize_features(Graph& g) {
  Matrix& x = g.mutable_features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double s = x.row(i).cwiseAbs().sum();
    if (s > 0) x.row(i) /= s;
  }
}

// ---- synthetic -----------------------------------------------------------------

Graph generate_csbm(const CsbmParams& p) {
  if (p.num_nodes < 1 || p.num_classes < 1 || p.num_features < p.num_classes) {
    throw std::invalid_argument("generate_csbm: need num_features >= num_classes >= 1");
  }
  auto prob_ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob_ok(p.p_intra) || !prob_ok(p.p_inter)) {
    throw std::invalid_argument("generate_csbm: edge probabilities must lie in [0,1]");
  }
  std::mt19937_64 rng(p.seed);
  std::vector<int> y(p.num_nodes);
  for (int i = 0; i < p.num_nodes; ++i) y[i] = i % p.num_classes;
  std::shuffle(y.begin(), y.end(), rng);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (int u = 0; u < p.num_nodes; ++u) {
    for (int v = u + 1; v < p.num_nodes; ++v) {
      const double prob = y[u] == y[v] ? p.p_intra : p.p_inter;
      if (unif(rng) < prob) edges.emplace_back(u, v);
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix x(p.num_nodes, p.num_features);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = noise(rng);
  for (int i = 0; i < p.num_nodes; ++i) x(i, y[i]) += p.signal;
  return Graph(p.num_nodes, std::move(edges), std::move(x), std::move(y));
}

// ---- splits ------------------------------------------------------------------------

SplitSpec make_splits(const Graph& g, SplitMode mode, std::uint64_t seed) {
  if (!g.has_labels()) throw std::invalid_argument("make_splits: graph has no labels");
  const int n = g.num_nodes();
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 fixed(kDevTestSeed);
  std::shuffle(order.begin(), order.end(), fixed);
  const int n_test = n - static_cast<int>(std::floor(0.8 * n));
  SplitSpec s;
  s.seed = seed;
  s.test.assign(order.begin(), order.begin() + n_test);
  std::vector<NodeId> dev(order.begin() + n_test, order.end());
  std::sort(dev.begin(), dev.end());

  std::mt19937_64 rng(seed);
  std::shuffle(dev.begin(), dev.end(), rng);
  if (mode == SplitMode::kFractional) {
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(dev.size())));
    s.train.assign(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(dev.begin() + static_cast<std::ptrdiff_t>(n_train), dev.end());
  } else {
    const auto& y = g.labels();
    std::vector<int> taken(g.num_classes(), 0);
    for (NodeId v : dev) {
      if (taken[y[v]] < kPlanetoidPerClass) {
        ++taken[y[v]];
        s.train.push_back(v);
      } else {
        s.validation.push_back(v);
      }
    }
    for (int c = 0; c < g.num_classes(); ++c) {
      if (taken[c] < kPlanetoidPerClass) {
        throw std::invalid_argument("make_splits: class " + std::to_string(c) + " has only " +
                                    std::to_string(taken[c]) + " development nodes");
      }
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void write_splits_json(const SplitSpec& splits, const std::filesystem::path& path) {
  nlohmann::json j = {{"seed", splits.seed},
                      {"train", splits.train},
                      {"validation", splits.validation},
                      {"test", splits.test}};
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

}  // namespace fossil
