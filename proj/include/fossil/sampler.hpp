#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "fossil/graph.hpp"
#include "fossil/tensor.hpp"

namespace fossil {

// A k-node subgraph endowed with the uniform measure. `adjacency` is the
// binary slice for original views and the cosine-similarity matrix of the
// perturbed embeddings for perturbed views.
struct MeasuredSubgraph {
  std::vector<NodeId> indices;  // anchor first
  ad::Tensor adjacency;         // k x k
  ad::Tensor embeddings;        // k x D
  Vector mu;
};

struct ViewPair {
  NodeId anchor = 0;
  MeasuredSubgraph original;
  MeasuredSubgraph perturbed;
};

struct ContrastBatch {
  std::vector<ViewPair> views;
  // partner[i] is the j != i whose two views are the negatives of anchor i.
  std::vector<std::size_t> partner;
  int negatives_per_anchor = 2;
  std::size_t excluded = 0;
  std::uint64_t seed = 0;

  bool usable() const { return views.size() >= 2; }
};

std::vector<NodeId> sample_anchors(const Graph& g, int count, std::mt19937_64& rng);

// First k nodes reached by breadth-first search from `anchor`, truncated at
// depth 2, visiting neighbors in ascending id order (or in a shuffled order
// when `shuffle` is given). nullopt when the 2-hop ball has fewer than k nodes.
std::optional<std::vector<NodeId>> bfs_sample(const Graph& g, NodeId anchor, int k,
                                              std::mt19937_64* shuffle = nullptr);

// Both views of one index set. The perturbed adjacency has a zero diagonal.
ViewPair build_views(const Graph& g, std::span<const NodeId> indices, const ad::Tensor& h,
                     const ad::Tensor& h_perturbed);

// Draws one partner per view pair; requires at least two pairs.
std::vector<std::size_t> assign_negatives(std::size_t count, std::mt19937_64& rng);

struct SamplerOptions {
  int anchors = 0;  // 0 picks min(300, N / 2)
  int subgraph_size = 12;
  bool shuffled_bfs = false;
};

int default_anchor_count(int num_nodes);

// Anchors, BFS subgraphs, both views and negative partners for one step.
ContrastBatch sample_batch(const Graph& g, const ad::Tensor& h, const ad::Tensor& h_perturbed,
                           const SamplerOptions& options, std::uint64_t seed);

}  // namespace fossil
