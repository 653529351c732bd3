#include "fossil/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fossil {

std::vector<NodeId> sample_anchors(const Graph& g, int count, std::mt19937_64& rng) {
  const int n = g.num_nodes();
  if (count < 0 || count > n) {
    throw std::invalid_argument("sample_anchors: requested " + std::to_string(count) +
                                " anchors from " + std::to_string(n) + " nodes");
  }
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  return ids;
}

std::optional<std::vector<NodeId>> bfs_sample(const Graph& g, NodeId anchor, int k,
                                              std::mt19937_64* shuffle) {
  if (k < 2) throw std::invalid_argument("bfs_sample: k must be at least 2");
  if (anchor < 0 || anchor >= g.num_nodes()) throw std::out_of_range("bfs_sample: bad anchor");

  std::vector<NodeId> out{anchor};
  std::vector<NodeId> frontier{anchor};
  std::vector<NodeId> scratch;
  auto seen = [&out](NodeId v) { return std::find(out.begin(), out.end(), v) != out.end(); };
  for (int depth = 1; depth <= 2 && static_cast<int>(out.size()) < k; ++depth) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      const auto nbrs = g.neighbors(u);
      scratch.assign(nbrs.begin(), nbrs.end());
      if (shuffle) std::shuffle(scratch.begin(), scratch.end(), *shuffle);
      for (NodeId v : scratch) {
        if (seen(v)) continue;
        out.push_back(v);
        next.push_back(v);
        if (static_cast<int>(out.size()) == k) return out;
      }
    }
    frontier = std::move(next);
  }
  return std::nullopt;
}

ViewPair build_views(const Graph& g, std::span<const NodeId> indices, const ad::Tensor& h,
                     const ad::Tensor& h_perturbed) {
  const auto k = static_cast<Eigen::Index>(indices.size());
  ViewPair pair;
  pair.anchor = indices.front();

  pair.original.indices.assign(indices.begin(), indices.end());
  pair.original.adjacency = ad::Tensor::constant(induced_subgraph(g, indices));
  pair.original.embeddings = ad::gather_rows(h, indices);
  pair.original.mu = Vector::Constant(k, 1.0 / static_cast<double>(k));

  pair.perturbed.indices = pair.original.indices;
  ad::Tensor slice = ad::gather_rows(h_perturbed, indices);
  Matrix off_diagonal = Matrix::Ones(k, k) - Matrix::Identity(k, k);
  pair.perturbed.adjacency =
      ad::mul(ad::cosine_similarity(slice, slice), ad::Tensor::constant(std::move(off_diagonal)));
  pair.perturbed.embeddings = slice;
  pair.perturbed.mu = pair.original.mu;
  return pair;
}

std::vector<std::size_t> assign_negatives(std::size_t count, std::mt19937_64& rng) {
  if (count < 2) throw std::invalid_argument("assign_negatives: need at least two subgraphs");
  std::vector<std::size_t> partner(count);
  std::uniform_int_distribution<std::size_t> pick(0, count - 2);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = pick(rng);
    partner[i] = j >= i ? j + 1 : j;
  }
  return partner;
}

int default_anchor_count(int num_nodes) { return std::min(300, num_nodes / 2); }

ContrastBatch sample_batch(const Graph& g, const ad::Tensor& h, const ad::Tensor& h_perturbed,
                           const SamplerOptions& options, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int count = options.anchors > 0 ? std::min(options.anchors, g.num_nodes())
                                        : default_anchor_count(g.num_nodes());
  ContrastBatch batch;
  batch.seed = seed;
  for (NodeId anchor : sample_anchors(g, count, rng)) {
    auto indices = bfs_sample(g, anchor, options.subgraph_size,
                              options.shuffled_bfs ? &rng : nullptr);
    if (!indices) {
      ++batch.excluded;
      continue;
    }
    batch.views.push_back(build_views(g, *indices, h, h_perturbed));
  }
  if (batch.usable()) batch.partner = assign_negatives(batch.views.size(), rng);
  return batch;
}

}  // namespace fossil
