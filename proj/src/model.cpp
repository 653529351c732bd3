#include "fossil/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fossil {

namespace {

ad::AttentionSupport self_support(int n) {
  ad::AttentionSupport s;
  s.offsets.resize(n + 1);
  s.columns.resize(n);
  for (int i = 0; i <= n; ++i) s.offsets[i] = i;
  std::iota(s.columns.begin(), s.columns.end(), 0);
  return s;
}

ad::AttentionSupport neighbor_support(const Graph& g) {
  ad::AttentionSupport s;
  s.offsets.push_back(0);
  for (int i = 0; i < g.num_nodes(); ++i) {
    s.columns.push_back(i);
    for (NodeId j : g.neighbors(i)) s.columns.push_back(j);
    s.offsets.push_back(static_cast<std::int64_t>(s.columns.size()));
  }
  return s;
}

Vector power_iteration(const Graph& g, int iters, bool pagerank) {
  const int n = g.num_nodes();
  Vector x = Vector::Constant(n, 1.0 / n);
  constexpr double kDamping = 0.85;
  for (int it = 0; it < iters; ++it) {
    Vector next = Vector::Zero(n);
    if (pagerank) {
      double dangling = 0;
      for (int i = 0; i < n; ++i) {
        const int d = g.degree(i);
        if (d == 0) {
          dangling += x(i);
          continue;
        }
        for (NodeId j : g.neighbors(i)) next(j) += x(i) / d;
      }
      next = kDamping * (next.array() + dangling / n).matrix();
      next.array() += (1.0 - kDamping) / n;
    } else {
      // (A + I) x keeps the eigenvectors of A and avoids bipartite oscillation.
      next = x;
      for (int i = 0; i < n; ++i) {
        for (NodeId j : g.neighbors(i)) next(i) += x(j);
      }
      next /= next.norm();
    }
    x = std::move(next);
  }
  return x;
}

ad::Tensor glorot(Eigen::Index in, Eigen::Index out, std::mt19937_64& seeds, std::string name) {
  return ad::Tensor::parameter(ad::glorot_uniform(in, out, seeds()), std::move(name));
}

FusionWeights make_fusion(int width, double dropout, double prelu_init, std::mt19937_64& seeds,
                          const std::string& prefix) {
  FusionWeights f;
  f.w1 = glorot(2 * width + 1, width, seeds, prefix + ".w1");
  f.b1 = ad::Tensor::parameter(Matrix::Zero(1, width), prefix + ".b1");
  f.slope = ad::Tensor::parameter(Matrix::Constant(1, 1, prelu_init), prefix + ".slope");
  f.w2 = glorot(width, 1, seeds, prefix + ".w2");
  f.b2 = ad::Tensor::parameter(Matrix::Zero(1, 1), prefix + ".b2");
  f.dropout = dropout;
  return f;
}

void append(std::vector<NamedTensor>& out, const FusionWeights& f) {
  for (const auto& t : {f.w1, f.b1, f.slope, f.w2, f.b2}) out.push_back({t.name(), t});
}

ad::Tensor attention_layer(const ad::Tensor& h, const GatWeights& w,
                           const ad::AttentionSupport& support) {
  const auto d = static_cast<int>(w.projection.cols());
  std::vector<int> left_rows(d), right_rows(d);
  std::iota(left_rows.begin(), left_rows.end(), 0);
  std::iota(right_rows.begin(), right_rows.end(), d);
  ad::Tensor z = ad::matmul(h, w.projection);
  ad::Tensor left = ad::matmul(z, ad::gather_rows(w.attention, left_rows));
  ad::Tensor right = ad::matmul(z, ad::gather_rows(w.attention, right_rows));
  return ad::attention_aggregate(z, left, right, support, w.leaky_slope);
}

}  // namespace

DegreeFeature parse_degree_feature(const std::string& name) {
  if (name == "raw") return DegreeFeature::kRaw;
  if (name == "normalized-1") return DegreeFeature::kNormalized1;
  if (name == "normalized-2") return DegreeFeature::kNormalized2;
  if (name == "pagerank") return DegreeFeature::kPageRank;
  if (name == "eigenscore") return DegreeFeature::kEigenscore;
  if (name == "none") return DegreeFeature::kNone;
  throw std::invalid_argument("unknown degree feature '" + name + "'");
}

std::string to_string(DegreeFeature f) {
  switch (f) {
    case DegreeFeature::kRaw: return "raw";
    case DegreeFeature::kNormalized1: return "normalized-1";
    case DegreeFeature::kNormalized2: return "normalized-2";
    case DegreeFeature::kPageRank: return "pagerank";
    case DegreeFeature::kEigenscore: return "eigenscore";
    case DegreeFeature::kNone: return "none";
  }
  return "raw";
}

Vector degree_feature(const Graph& g, DegreeFeature kind) {
  const int n = g.num_nodes();
  Vector deg(n);
  for (int i = 0; i < n; ++i) deg(i) = g.degree(i);
  switch (kind) {
    case DegreeFeature::kRaw:
      return deg;
    case DegreeFeature::kNormalized1:
      return n > 1 ? Vector(deg / (n - 1)) : Vector::Zero(n);
    case DegreeFeature::kNormalized2: {
      const double total = deg.sum();
      return total > 0 ? Vector(deg / total) : Vector::Zero(n);
    }
    case DegreeFeature::kPageRank:
      return power_iteration(g, 100, true);
    case DegreeFeature::kEigenscore:
      return power_iteration(g, 200, false);
    case DegreeFeature::kNone:
      return Vector::Zero(n);
  }
  return deg;
}

GraphContext make_context(const Graph& g, DegreeFeature degree) {
  GraphContext ctx;
  ctx.graph = &g;
  ctx.norm_adjacency = normalized_adjacency(g);
  ctx.self_support = self_support(g.num_nodes());
  ctx.neighbor_support = neighbor_support(g);
  Vector d = degree_feature(g, degree);
  ctx.degree = ad::Tensor::constant(Matrix(d));
  return ctx;
}

Channels encode(const GraphContext& ctx, const EncoderWeights& w,
                const std::vector<FusionWeights>& hidden_fusion, bool train, std::mt19937_64& rng) {
  if (w.layers.empty()) throw std::invalid_argument("encode: no layers");
  if (hidden_fusion.size() + 1 != w.layers.size()) {
    throw std::invalid_argument("encode: need one fusion MLP per hidden layer");
  }
  ad::Tensor z = ad::Tensor::constant(ctx.graph->features());
  Channels ch;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    if (z.cols() != layer.weight.rows()) {
      throw std::invalid_argument("encode: layer " + std::to_string(l) + " expects " +
                                  std::to_string(layer.weight.rows()) + " inputs, got " +
                                  std::to_string(z.cols()));
    }
    ad::Tensor xw = ad::matmul(ad::dropout(z, w.dropout, train, rng), layer.weight);
    ch.feature = ad::prelu(xw, layer.slope);
    ch.structure = ad::prelu(ad::spmm(ctx.norm_adjacency, xw), layer.slope);
    if (l + 1 < w.layers.size()) {
      z = fuse(ch, ctx.degree, hidden_fusion[l], train, rng).embedding;
    }
  }
  return ch;
}

Channels generate(const GraphContext& ctx, const Channels& encoded, const GatWeights& w) {
  return {attention_layer(encoded.feature, w, ctx.self_support),
          attention_layer(encoded.structure, w, ctx.neighbor_support)};
}

ad::Tensor fusion_coefficients(const Channels& ch, const ad::Tensor& degree,
                               const FusionWeights& w, bool train, std::mt19937_64& rng) {
  ad::Tensor in = ad::concat_cols({ch.feature, ch.structure, degree});
  in = ad::dropout(in, w.dropout, train, rng);
  ad::Tensor hidden = ad::prelu(ad::add_rowvec(ad::matmul(in, w.w1), w.b1), w.slope);
  return ad::sigmoid(ad::add_rowvec(ad::matmul(hidden, w.w2), w.b2));
}

ad::Tensor fuse_with(const Channels& ch, const ad::Tensor& lambda) {
  return ad::add(ch.feature, ad::mul_colvec(ch.structure, lambda));
}

Fused fuse(const Channels& ch, const ad::Tensor& degree, const FusionWeights& w, bool train,
           std::mt19937_64& rng) {
  ad::Tensor lambda = fusion_coefficients(ch, degree, w, train, rng);
  return {fuse_with(ch, lambda), lambda};
}

// ---- FossilModel -------------------------------------------------------------------

FossilModel::FossilModel(ModelDims dims, ModelOptions options, std::uint64_t seed)
    : dims_(dims), options_(options) {
  if (dims.input <= 0 || dims.hidden <= 0 || dims.output <= 0) {
    throw std::invalid_argument("FossilModel: dimensions must be positive");
  }
  std::mt19937_64 seeds(seed);
  encoder_.dropout = options.dropout;
  encoder_.layers.push_back(
      {glorot(dims.input, dims.hidden, seeds, "encoder.0.weight"),
       ad::Tensor::parameter(Matrix::Constant(1, 1, options.prelu_init), "encoder.0.slope")});
  encoder_.layers.push_back(
      {glorot(dims.hidden, dims.output, seeds, "encoder.1.weight"),
       ad::Tensor::parameter(Matrix::Constant(1, 1, options.prelu_init), "encoder.1.slope")});
  hidden_fusion_.push_back(
      make_fusion(dims.hidden, options.fusion_dropout, options.prelu_init, seeds, "fusion.hidden"));
  generator_.projection = glorot(dims.output, dims.output, seeds, "generator.projection");
  generator_.attention = glorot(2 * dims.output, 1, seeds, "generator.attention");
  generator_.leaky_slope = options.gat_leaky_slope;
  fusion_ = make_fusion(dims.output, options.fusion_dropout, options.prelu_init, seeds, "fusion");
}

ForwardPass FossilModel::forward(const GraphContext& ctx, bool train, std::mt19937_64& rng) const {
  ForwardPass out;
  out.encoded = encode(ctx, encoder_, hidden_fusion_, train, rng);
  out.encoder = fuse(out.encoded, ctx.degree, fusion_, train, rng);
  out.generated = generate(ctx, out.encoded, generator_);
  out.generator = fuse(out.generated, ctx.degree, fusion_, train, rng);
  return out;
}

Matrix FossilModel::embed(const GraphContext& ctx) const {
  if (ad::active_tape() != nullptr) throw std::logic_error("embed: called with an active tape");
  std::mt19937_64 unused(0);
  Channels ch = encode(ctx, encoder_, hidden_fusion_, false, unused);
  return fuse(ch, ctx.degree, fusion_, false, unused).embedding.value();
}

std::vector<ad::Tensor> FossilModel::backbone_parameters() const {
  std::vector<ad::Tensor> out;
  for (const auto& l : encoder_.layers) {
    out.push_back(l.weight);
    out.push_back(l.slope);
  }
  out.push_back(generator_.projection);
  out.push_back(generator_.attention);
  return out;
}

std::vector<ad::Tensor> FossilModel::fusion_parameters() const {
  std::vector<ad::Tensor> out;
  for (const auto& f : hidden_fusion_) {
    for (const auto& t : {f.w1, f.b1, f.slope, f.w2, f.b2}) out.push_back(t);
  }
  for (const auto& t : {fusion_.w1, fusion_.b1, fusion_.slope, fusion_.w2, fusion_.b2}) {
    out.push_back(t);
  }
  return out;
}

std::vector<NamedTensor> FossilModel::named_parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& l : encoder_.layers) {
    out.push_back({l.weight.name(), l.weight});
    out.push_back({l.slope.name(), l.slope});
  }
  for (const auto& f : hidden_fusion_) append(out, f);
  out.push_back({generator_.projection.name(), generator_.projection});
  out.push_back({generator_.attention.name(), generator_.attention});
  append(out, fusion_);
  return out;
}

}  // namespace fossil
