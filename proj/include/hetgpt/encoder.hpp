#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "hetgpt/adam.hpp"
#include "hetgpt/graph.hpp"
#include "hetgpt/graph_io.hpp"
#include "hetgpt/tape.hpp"

namespace hetgpt {

struct EncoderConfig {
  int dim = 64;        // shared embedding width after projection
  int hidden = 1024;   // width of the per-type projection's hidden layer
  int epochs = 200;
  double lr = 1e-3;
  double tau_pre = 0.5;
  std::uint64_t seed = 1;
};

/// Encoder weights: a two-layer projection per node type mapping raw features
/// to the shared width, one propagation matrix per metapath, and softmax
/// logits fusing the per-metapath views of the target type.
struct EncoderParams {
  std::vector<Param> w1, b1, w2, b2;  // per node type
  std::vector<Param> mp_weight;       // per metapath, dim x dim
  Param fusion_logits;                // 1 x n_metapaths

  std::vector<Param*> all() {
    std::vector<Param*> out;
    for (auto& p : w1) out.push_back(&p);
    for (auto& p : b1) out.push_back(&p);
    for (auto& p : w2) out.push_back(&p);
    for (auto& p : b2) out.push_back(&p);
    for (auto& p : mp_weight) out.push_back(&p);
    out.push_back(&fusion_logits);
    return out;
  }

  std::vector<const Param*> all() const {
    std::vector<const Param*> out;
    for (const auto& p : w1) out.push_back(&p);
    for (const auto& p : b1) out.push_back(&p);
    for (const auto& p : w2) out.push_back(&p);
    for (const auto& p : b2) out.push_back(&p);
    for (const auto& p : mp_weight) out.push_back(&p);
    out.push_back(&fusion_logits);
    return out;
  }

  void set_trainable(bool t) {
    for (Param* p : all()) p->trainable = t;
  }

  long size() {
    long n = 0;
    for (Param* p : all()) n += p->size();
    return n;
  }
};

/// Scores view agreement during pre-training: sim(u, v) = u^T B v / tau on
/// unit-normalized embeddings. B starts at identity (plain cosine).
struct ContrastiveHead {
  double tau_pre = 0.5;
  Param bilinear;
};

/// Pre-trained encoder. Every parameter is marked non-trainable; tapes built
/// over it record the weights as constants, so no gradient can reach them.
struct FrozenEncoder {
  EncoderParams params;
  ContrastiveHead head;
  int dim = 0;
  int hidden = 0;
  std::vector<std::string> metapath_names;
  std::string graph_fingerprint;
};

inline EncoderParams init_encoder_params(const HetGraph& g, int dim, int hidden,
                                         Rng& rng) {
  EncoderParams p;
  for (const NodeType& t : g.node_types()) {
    p.w1.emplace_back(kaiming_normal(t.feat_dim, hidden, t.feat_dim, rng),
                      "enc.w1." + t.name);
    p.b1.emplace_back(Tensor::Zero(1, hidden), "enc.b1." + t.name);
    p.w2.emplace_back(kaiming_normal(hidden, dim, hidden, rng), "enc.w2." + t.name);
    p.b2.emplace_back(Tensor::Zero(1, dim), "enc.b2." + t.name);
  }
  for (const Metapath& mp : g.metapaths())
    p.mp_weight.emplace_back(kaiming_normal(dim, dim, dim, rng), "enc.mp." + mp.name);
  p.fusion_logits = Param(Tensor::Zero(1, static_cast<int>(g.metapaths().size())),
                          "enc.fusion");
  return p;
}

/// Row-stochastic mean over each target node's metapath neighbors plus the
/// node itself; one dense matrix per metapath. These are data, not weights.
inline std::vector<Tensor> build_propagation_matrices(const HetGraph& g,
                                                      const NeighborIndex& index) {
  const int nt = g.target_count();
  std::vector<Tensor> mats;
  for (const auto& lists : index.metapath_neighbors) {
    Tensor s = Tensor::Zero(nt, nt);
    for (int i = 0; i < nt; ++i) {
      const auto& nbrs = lists[static_cast<std::size_t>(i)];
      const double w = 1.0 / static_cast<double>(nbrs.size() + 1);
      s(i, i) = w;
      for (int j : nbrs) s(i, j) = w;
    }
    mats.push_back(std::move(s));
  }
  return mats;
}

/// Forward pass of the encoder on a tape.
struct EncodeComputation {
  std::vector<Tape::Val> type_embeddings;  // per type; target slot is the fused result
  std::vector<Tape::Val> metapath_views;   // per metapath, target rows only
  Tape::Val fused_target;
};

inline EncodeComputation encode_on_tape(Tape& tape,
                                        const std::vector<Tape::Val>& features,
                                        const HetGraph& g,
                                        const std::vector<Tensor>& propagation,
                                        EncoderParams& params) {
  const std::size_t n_types = g.node_types().size();
  if (features.size() != n_types)
    throw DimensionError("encode: expected one feature matrix per node type");
  if (propagation.size() != g.metapaths().size())
    throw DimensionError("encode: expected one propagation matrix per metapath");

  EncodeComputation out;
  out.type_embeddings.resize(n_types);
  for (std::size_t t = 0; t < n_types; ++t) {
    Tape::Val h = tape.add_row_broadcast(tape.matmul(features[t], tape.param(params.w1[t])),
                                         tape.param(params.b1[t]));
    h = tape.leaky_relu(h, kLeakySlope);
    h = tape.add_row_broadcast(tape.matmul(h, tape.param(params.w2[t])),
                               tape.param(params.b2[t]));
    out.type_embeddings[t] = h;
  }

  const auto target = static_cast<std::size_t>(g.target_type());
  Tape::Val proj_target = out.type_embeddings[target];
  Tape::Val gamma = tape.row_softmax(tape.param(params.fusion_logits));
  Tape::Val fused{};
  for (std::size_t m = 0; m < propagation.size(); ++m) {
    Tape::Val mixed = tape.matmul(tape.leaf(propagation[m]), proj_target);
    Tape::Val view = tape.leaky_relu(
        tape.matmul(mixed, tape.param(params.mp_weight[m])), kLeakySlope);
    out.metapath_views.push_back(view);
    Tape::Val weighted =
        tape.mul_scalar(view, tape.slice_cols(gamma, static_cast<int>(m), 1));
    fused = (m == 0) ? weighted : tape.add(fused, weighted);
  }
  out.fused_target = fused;
  out.type_embeddings[target] = fused;
  return out;
}

/// Eager convenience: per-type embedding matrices for fixed parameters.
inline std::vector<Tensor> encode(const HetGraph& g, const NeighborIndex& index,
                                  EncoderParams& params,
                                  const std::vector<Tensor>* features_override = nullptr) {
  Tape tape;
  std::vector<Tape::Val> feats;
  for (const NodeType& t : g.node_types())
    feats.push_back(tape.leaf(features_override ? (*features_override)[static_cast<std::size_t>(t.id)]
                                                : g.features(t.id)));
  auto prop = build_propagation_matrices(g, index);
  EncodeComputation out = encode_on_tape(tape, feats, g, prop, params);
  std::vector<Tensor> result;
  for (Tape::Val v : out.type_embeddings) result.push_back(tape.value(v));
  return result;
}

/// Cross-view instance discrimination: for every ordered pair of metapath
/// views, each target node's embedding in one view should identify the same
/// node among all others in the second view.
inline Tape::Val multi_view_info_nce(Tape& tape, const std::vector<Tape::Val>& views,
                                     Param& bilinear, double tau) {
  const int n = static_cast<int>(tape.value(views[0]).rows());
  std::vector<int> diag(static_cast<std::size_t>(n));
  std::iota(diag.begin(), diag.end(), 0);

  std::vector<Tape::Val> normalized;
  for (Tape::Val v : views) normalized.push_back(tape.l2_normalize_rows(v));
  Tape::Val b = tape.param(bilinear);

  Tape::Val total{};
  int pairs = 0;
  for (std::size_t a = 0; a < views.size(); ++a) {
    for (std::size_t p = 0; p < views.size(); ++p) {
      if (a == p) continue;
      Tape::Val logits = tape.scale(
          tape.matmul(tape.matmul(normalized[a], b), tape.transpose(normalized[p])),
          1.0 / tau);
      Tape::Val log_probs = tape.select_cols(tape.row_log_softmax(logits), diag);
      Tape::Val loss = tape.scale(tape.reduce_sum(log_probs), -1.0 / n);
      total = (pairs == 0) ? loss : tape.add(total, loss);
      ++pairs;
    }
  }
  return tape.scale(total, 1.0 / pairs);
}

struct PretrainResult {
  FrozenEncoder encoder;
  std::vector<double> losses;
};

/// Contrastive pre-training followed by a freeze. Requires at least two
/// metapaths; with one view there is nothing to contrast.
inline PretrainResult pretrain(const HetGraph& g, const NeighborIndex& index,
                               const EncoderConfig& cfg) {
  if (g.metapaths().size() < 2)
    throw ConfigError("pretrain: need >= 2 metapaths for cross-view contrast, got " +
                      std::to_string(g.metapaths().size()));
  if (cfg.dim < 1 || cfg.hidden < 1 || cfg.epochs < 0 || cfg.lr <= 0 || cfg.tau_pre <= 0)
    throw ConfigError("pretrain: invalid encoder config");

  Rng rng(cfg.seed);
  EncoderParams params = init_encoder_params(g, cfg.dim, cfg.hidden, rng);
  ContrastiveHead head{cfg.tau_pre,
                       Param(Tensor::Identity(cfg.dim, cfg.dim), "enc.head.bilinear")};
  auto prop = build_propagation_matrices(g, index);

  std::vector<Param*> trainable = params.all();
  trainable.push_back(&head.bilinear);
  AdamState opt;
  opt.init(trainable);

  PretrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    zero_grads(trainable);
    Tape tape;
    std::vector<Tape::Val> feats;
    for (const NodeType& t : g.node_types()) feats.push_back(tape.leaf(g.features(t.id)));
    EncodeComputation enc = encode_on_tape(tape, feats, g, prop, params);
    Tape::Val loss = multi_view_info_nce(tape, enc.metapath_views, head.bilinear,
                                         head.tau_pre);
    result.losses.push_back(tape.value(loss)(0, 0));
    tape.backward(loss);
    adam_step(trainable, opt, cfg.lr);
  }

  zero_grads(trainable);
  params.set_trainable(false);
  head.bilinear.trainable = false;
  result.encoder = FrozenEncoder{std::move(params), std::move(head), cfg.dim, cfg.hidden,
                                 {}, graph_fingerprint(g)};
  for (const Metapath& mp : g.metapaths()) result.encoder.metapath_names.push_back(mp.name);
  return result;
}

/// Trainable copy of frozen weights, for the fine-tuning comparison arm.
inline EncoderParams thaw_copy(const EncoderParams& frozen) {
  EncoderParams copy = frozen;
  copy.set_trainable(true);
  return copy;
}

}  // namespace hetgpt
