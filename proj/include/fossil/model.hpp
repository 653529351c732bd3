#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fossil/graph.hpp"
#include "fossil/tensor.hpp"

namespace fossil {

enum class DegreeFeature { kRaw, kNormalized1, kNormalized2, kPageRank, kEigenscore, kNone };

DegreeFeature parse_degree_feature(const std::string& name);
std::string to_string(DegreeFeature f);

// Per-node centrality fed to the fusion MLP.
Vector degree_feature(const Graph& g, DegreeFeature kind);

// Everything derived from a graph that the forward pass needs. Must outlive
// any tape recorded against it.
struct GraphContext {
  const Graph* graph = nullptr;
  SparseMatrix norm_adjacency;
  ad::AttentionSupport self_support;      // {i}
  ad::AttentionSupport neighbor_support;  // N(i) plus i
  ad::Tensor degree;                      // N x 1 constant
};

GraphContext make_context(const Graph& g, DegreeFeature degree);

struct EncoderLayer {
  ad::Tensor weight;  // shared by the feature and structure channels
  ad::Tensor slope;   // PReLU, 1 x 1
};

struct EncoderWeights {
  std::vector<EncoderLayer> layers;
  double dropout = 0.0;
};

struct GatWeights {
  ad::Tensor projection;  // D x D
  ad::Tensor attention;   // 2D x 1: [left; right]
  double leaky_slope = 0.2;
};

// psi: [h_f | h_s | degree] -> PReLU hidden layer -> sigmoid scalar.
struct FusionWeights {
  ad::Tensor w1;     // (2D + 1) x hidden
  ad::Tensor b1;     // 1 x hidden
  ad::Tensor slope;  // 1 x 1
  ad::Tensor w2;     // hidden x 1
  ad::Tensor b2;     // 1 x 1
  double dropout = 0.0;

  int width() const { return static_cast<int>((w1.rows() - 1) / 2); }
};

struct Channels {
  ad::Tensor feature;
  ad::Tensor structure;
};

struct Fused {
  ad::Tensor embedding;
  ad::Tensor lambda;  // N x 1, in [0, 1]
};

// Per layer: feature channel sigma(Z W), structure channel sigma(A~ Z W); the
// channels of every layer but the last are fused (with hidden_fusion[l]) into
// the next layer's input. The last layer's channels are returned unfused.
Channels encode(const GraphContext& ctx, const EncoderWeights& w,
                const std::vector<FusionWeights>& hidden_fusion, bool train, std::mt19937_64& rng);

// Graph-attention perturbations: identity support for the feature channel,
// neighbors-plus-self for the structure channel, one shared weight set.
Channels generate(const GraphContext& ctx, const Channels& encoded, const GatWeights& w);

ad::Tensor fusion_coefficients(const Channels& ch, const ad::Tensor& degree,
                               const FusionWeights& w, bool train, std::mt19937_64& rng);
ad::Tensor fuse_with(const Channels& ch, const ad::Tensor& lambda);
Fused fuse(const Channels& ch, const ad::Tensor& degree, const FusionWeights& w, bool train,
           std::mt19937_64& rng);

struct ModelDims {
  int input = 0;
  int hidden = 1024;
  int output = 512;
};

struct ModelOptions {
  double dropout = 0.2;
  double fusion_dropout = 0.2;
  double gat_leaky_slope = 0.2;
  double prelu_init = 0.25;
};

struct ForwardPass {
  Channels encoded;
  Fused encoder;
  Channels generated;
  Fused generator;
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

class FossilModel {
 public:
  FossilModel(ModelDims dims, ModelOptions options, std::uint64_t seed);

  ForwardPass forward(const GraphContext& ctx, bool train, std::mt19937_64& rng) const;
  // Fused encoder output in eval mode, computed without a tape.
  Matrix embed(const GraphContext& ctx) const;

  // Encoder and generator parameters (learning rate `lr`).
  std::vector<ad::Tensor> backbone_parameters() const;
  // Fusion MLPs (learning rate `lr_fusion`).
  std::vector<ad::Tensor> fusion_parameters() const;
  // All parameters in declaration order (checkpoint layout).
  std::vector<NamedTensor> named_parameters() const;

  const ModelDims& dims() const { return dims_; }
  const EncoderWeights& encoder() const { return encoder_; }
  const GatWeights& generator() const { return generator_; }
  const FusionWeights& fusion() const { return fusion_; }
  const std::vector<FusionWeights>& hidden_fusion() const { return hidden_fusion_; }

 private:
  ModelDims dims_;
  ModelOptions options_;
  EncoderWeights encoder_;
  std::vector<FusionWeights> hidden_fusion_;
  GatWeights generator_;
  FusionWeights fusion_;
};

}  // namespace fossil
