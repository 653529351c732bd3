#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fossil/tensor.hpp"

namespace fossil {

using NodeId = int;

// Undirected attributed graph. Edges are canonical (u < v), sorted and
// unique; no self-loops.
class Graph {
 public:
  Graph(int num_nodes, std::vector<std::pair<NodeId, NodeId>> edges, Matrix features,
        std::optional<std::vector<int>> labels = std::nullopt);

  int num_nodes() const { return num_nodes_; }
  int num_features() const { return static_cast<int>(features_.cols()); }
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  Matrix& mutable_features() { return features_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const;
  int num_classes() const;

  // Ascending neighbor ids.
  std::span<const NodeId> neighbors(NodeId v) const;
  int degree(NodeId v) const { return static_cast<int>(neighbors(v).size()); }
  // Binary symmetric adjacency.
  const SparseMatrix& adjacency() const { return adjacency_; }

 private:
  int num_nodes_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  Matrix features_;
  std::optional<std::vector<int>> labels_;
  std::vector<std::int64_t> offsets_;
  std::vector<NodeId> columns_;
  SparseMatrix adjacency_;
};

class GraphFormatError : public std::runtime_error {
 public:
  GraphFormatError(const std::filesystem::path& file, std::size_t line, const std::string& what)
      : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadReport {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicates_dropped = 0;
};

struct LoadedGraph {
  Graph graph;
  LoadReport report;
};

LoadedGraph load_graph(const std::filesystem::path& edge_file,
                       const std::filesystem::path& feature_file,
                       const std::optional<std::filesystem::path>& label_file = std::nullopt);
void save_graph(const Graph& g, const std::filesystem::path& edge_file,
                const std::filesystem::path& feature_file,
                const std::optional<std::filesystem::path>& label_file = std::nullopt);

// D^{-1/2} A D^{-1/2}; isolated nodes get zero rows.
SparseMatrix normalized_adjacency(const Graph& g);

// Mean over non-isolated nodes of the fraction of same-label neighbors.
double homophily(const Graph& g);

// Dense |S| x |S| slice of the binary adjacency.
Matrix induced_subgraph(const Graph& g, std::span<const NodeId> indices);

void row_normalize_features(Graph& g);

struct CsbmParams {
  int num_nodes = 1000;
  int num_features = 50;
  int num_classes = 2;
  double p_intra = 0.01;
  double p_inter = 0.001;
  double signal = 1.0;
  std::uint64_t seed = 0;
};

// Two-block SBM with spiked Gaussian features x_i = signal * e_{y_i} + N(0, I).
Graph generate_csbm(const CsbmParams& params);

enum class SplitMode { kPlanetoid, kFractional };

struct SplitSpec {
  std::vector<NodeId> train;
  std::vector<NodeId> validation;
  std::vector<NodeId> test;
  std::uint64_t seed = 0;
};

inline constexpr int kPlanetoidPerClass = 20;
inline constexpr std::uint64_t kDevTestSeed = 0x5eed'7e57ULL;

// Dev/test (80/20) is drawn with a fixed seed; train/validation within dev
// depends on `seed`.
SplitSpec make_splits(const Graph& g, SplitMode mode, std::uint64_t seed);
void write_splits_json(const SplitSpec& splits, const std::filesystem::path& path);

}  // namespace fossil
