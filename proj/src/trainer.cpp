#include "fossil/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

namespace fossil {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool finite_grads(const std::vector<ad::Tensor>& params) {
  for (const auto& p : params) {
    if (p.has_grad() && !p.grad().allFinite()) return false;
  }
  return true;
}

}  // namespace

nlohmann::json MetricsRecord::to_json() const {
  return {{"epoch", epoch},
          {"l_ot", l_ot},
          {"l_node", l_node},
          {"l_fusion", l_fusion},
          {"total", total},
          {"ot_skipped", ot_skipped},
          {"ms",
           {{"encode", ms.encode},
            {"generate", ms.generate},
            {"sample", ms.sample},
            {"ot", ms.ot},
            {"node_loss", ms.node_loss},
            {"backward", ms.backward}}},
          {"step_ms", step_ms},
          {"anchors_used", anchors_used},
          {"anchors_excluded", anchors_excluded},
          {"buffer_rows", buffer_rows}};
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void prepare_graph(Graph& g, const TrainConfig& cfg) {
  if (cfg.row_normalize_features) row_normalize_features(g);
}

ModelDims model_dims(const Graph& g, const TrainConfig& cfg) {
  return {g.num_features(), cfg.hidden, cfg.out};
}

ModelOptions model_options(const TrainConfig& cfg) {
  ModelOptions o;
  o.dropout = cfg.dropout;
  o.fusion_dropout = cfg.fusion_dropout;
  return o;
}

DivergenceError::DivergenceError(int epoch, const std::string& what)
    : std::runtime_error("diverged at epoch " + std::to_string(epoch) + ": " + what),
      epoch_(epoch) {}

Trainer::Trainer(const Graph& g, const TrainConfig& cfg, int threads)
    : Trainer(g, cfg, FossilModel(model_dims(g, cfg), model_options(cfg), cfg.seed), threads) {}

Trainer::Trainer(const Graph& g, const TrainConfig& cfg, FossilModel model, int threads)
    : graph_(g),
      cfg_(cfg),
      threads_(threads),
      ctx_(make_context(g, cfg.degree_feature)),
      model_(std::move(model)),
      backbone_opt_(model_.backbone_parameters(), AdamOptions{.lr = cfg.lr}),
      fusion_opt_(model_.fusion_parameters(), AdamOptions{.lr = cfg.lr_fusion}) {
  cfg_.validate();
  if (model_.dims().input != g.num_features()) {
    throw std::invalid_argument("Trainer: model expects " + std::to_string(model_.dims().input) +
                                " features, graph has " + std::to_string(g.num_features()));
  }
}

MetricsRecord Trainer::step(int epoch) { return checked_run(epoch, true); }

MetricsRecord Trainer::evaluate_loss(int epoch) { return checked_run(epoch, false); }

// Kernels reject non-finite inputs with domain_error; during training that means the
// weights have blown up, which is reported as divergence.
MetricsRecord Trainer::checked_run(int epoch, bool update) {
  try {
    return run(epoch, update);
  } catch (const std::domain_error& e) {
    throw DivergenceError(epoch, e.what());
  }
}

MetricsRecord Trainer::run(int epoch, bool update) {
  MetricsRecord rec;
  rec.epoch = epoch;
  const auto start = Clock::now();

  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::mt19937_64 rng(mix_seed(cfg_.seed, 3 * static_cast<std::uint64_t>(epoch)));

  auto t0 = Clock::now();
  Channels encoded = encode(ctx_, model_.encoder(), model_.hidden_fusion(), true, rng);
  Fused enc = fuse(encoded, ctx_.degree, model_.fusion(), true, rng);
  rec.ms.encode = ms_since(t0);

  t0 = Clock::now();
  Channels generated = generate(ctx_, encoded, model_.generator());
  Fused gen = fuse(generated, ctx_.degree, model_.fusion(), true, rng);
  rec.ms.generate = ms_since(t0);

  t0 = Clock::now();
  SamplerOptions sopt{cfg_.num_anchors, cfg_.k, cfg_.shuffled_bfs};
  ContrastBatch batch = sample_batch(graph_, enc.embedding, gen.embedding, sopt,
                                     mix_seed(cfg_.seed, 3 * static_cast<std::uint64_t>(epoch) + 1));
  batch.negatives_per_anchor = cfg_.num_negatives;
  rec.anchors_used = batch.views.size();
  rec.anchors_excluded = batch.excluded;
  rec.ms.sample = ms_since(t0);

  t0 = Clock::now();
  ot::FgwConfig fgw = cfg_.fgw();
  fgw.seed = mix_seed(cfg_.seed, 3 * static_cast<std::uint64_t>(epoch) + 2);
  OtLoss l_ot = loss_ot(batch, fgw, {threads_, cfg_.normalize_cost_embeddings});
  if (l_ot.skipped) {
    std::clog << "warning: epoch " << epoch << ": fewer than two usable subgraphs ("
              << batch.excluded << " excluded), skipping the subgraph loss\n";
  }
  rec.ms.ot = ms_since(t0);

  t0 = Clock::now();
  NodeLoss l_node;
  if (cfg_.node_loss == NodeLossVariant::kFull) {
    l_node = loss_node(enc.embedding, gen.embedding, cfg_.tau);
  } else {
    std::vector<NodeId> nodes = batch_node_union(batch);
    if (nodes.empty()) {
      nodes.resize(graph_.num_nodes());
      std::iota(nodes.begin(), nodes.end(), 0);
    }
    l_node = loss_node_v2(enc.embedding, gen.embedding, nodes, cfg_.tau);
  }
  rec.buffer_rows = l_node.buffer_rows;
  ad::Tensor l_fusion =
      loss_fusion(enc.lambda, encoded.structure, encoded.feature, cfg_.alpha, cfg_.beta1, cfg_.beta2,
                  cfg_.fusion_mean_similarity);
  LossBreakdown parts = total_loss(l_ot.skipped ? std::nullopt : std::optional(l_ot.value),
                                   l_node.value, l_fusion);
  rec.ms.node_loss = ms_since(t0);

  rec.l_ot = LossBreakdown::value_of(parts.l_ot);
  rec.l_node = LossBreakdown::value_of(parts.l_node);
  rec.l_fusion = LossBreakdown::value_of(parts.l_fusion);
  rec.total = parts.total.item();
  rec.ot_skipped = parts.ot_skipped;
  if (!std::isfinite(rec.total)) throw DivergenceError(epoch, "non-finite total loss");

  if (update) {
    t0 = Clock::now();
    backbone_opt_.zero_grad();
    fusion_opt_.zero_grad();
    tape.backward(parts.total);
    if (!finite_grads(backbone_opt_.params()) || !finite_grads(fusion_opt_.params())) {
      throw DivergenceError(epoch, "non-finite gradient");
    }
    backbone_opt_.step();
    fusion_opt_.step();
    rec.ms.backward = ms_since(t0);
  }
  rec.step_ms = ms_since(start);
  return rec;
}

TrainResult train(Trainer& trainer, const std::function<void(const MetricsRecord&)>& on_epoch) {
  TrainResult out;
  for (int epoch = 1; epoch <= trainer.config().epochs; ++epoch) {
    try {
      out.metrics.push_back(trainer.step(epoch));
    } catch (const DivergenceError& e) {
      out.divergence = e.what();
      break;
    }
    if (on_epoch) on_epoch(out.metrics.back());
  }
  return out;
}

}  // namespace fossil
