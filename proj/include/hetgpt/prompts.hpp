#pragma once

#include <string>
#include <vector>

#include "hetgpt/checkpoint.hpp"
#include "hetgpt/encoder.hpp"
#include "hetgpt/graph.hpp"

namespace hetgpt {

/// One trainable token per class, acting as the class's proxy in embedding
/// space. Row c of tokens is the token of class c.
struct VirtualClassPrompt {
  Param tokens;  // C x d
  int classes() const { return static_cast<int>(tokens.value.rows()); }
};

/// Class tokens start at the mean embedding of each class's labeled nodes.
/// Deterministic; no randomness involved.
inline VirtualClassPrompt init_class_prompt(const Tensor& target_embeddings,
                                            const std::vector<int>& labeled_set,
                                            const std::vector<int>& labels,
                                            int num_classes) {
  if (num_classes < 1) throw ConfigError("class prompt: need at least one class");
  Tensor q = Tensor::Zero(num_classes, target_embeddings.cols());
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int v : labeled_set) {
    if (v < 0 || v >= target_embeddings.rows())
      throw ConfigError("class prompt: labeled node " + std::to_string(v) +
                        " out of range");
    const int y = labels[static_cast<std::size_t>(v)];
    if (y < 0 || y >= num_classes)
      throw ConfigError("class prompt: node " + std::to_string(v) + " has no class");
    q.row(y) += target_embeddings.row(v);
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw ConfigError("class prompt: class " + std::to_string(c) +
                        " has no labeled node");
    q.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  return VirtualClassPrompt{Param(std::move(q), "prompt.class")};
}

/// K basis tokens per node type, each matching that type's raw feature width.
struct FeaturePrompt {
  std::vector<Param> tokens;  // per node type: K x d_A
  int token_count = 0;

  std::vector<Param*> all() {
    std::vector<Param*> out;
    for (auto& p : tokens) out.push_back(&p);
    return out;
  }
};

inline FeaturePrompt init_feature_prompt(const HetGraph& g, int token_count,
                                         std::uint64_t seed) {
  if (token_count < 1)
    throw ConfigError("feature prompt: token count must be >= 1, got " +
                      std::to_string(token_count));
  Rng rng(seed);
  FeaturePrompt fp;
  fp.token_count = token_count;
  for (const NodeType& t : g.node_types())
    fp.tokens.emplace_back(kaiming_normal(token_count, t.feat_dim, t.feat_dim, rng),
                           "prompt.feature." + t.name);
  return fp;
}

/// Additive feature injection: every node receives an attention-weighted mix
/// of its type's tokens on top of its raw features. Weights are the softmax
/// over activated token-feature dot products, so each node's weights are
/// strictly positive and sum to one.
inline std::vector<Tape::Val> prompt_features_on_tape(Tape& tape, const HetGraph& g,
                                                      FeaturePrompt& prompt) {
  if (prompt.tokens.size() != g.node_types().size())
    throw DimensionError("feature prompt: token set count does not match node types");
  std::vector<Tape::Val> out;
  for (const NodeType& t : g.node_types()) {
    Param& tok = prompt.tokens[static_cast<std::size_t>(t.id)];
    if (tok.value.cols() != t.feat_dim)
      throw DimensionError("feature prompt: tokens for type '" + t.name + "' are " +
                           shape_str(tok.value) + ", feature dim is " +
                           std::to_string(t.feat_dim));
    Tape::Val x = tape.leaf(g.features(t.id));
    Tape::Val f = tape.param(tok);
    Tape::Val scores = tape.leaky_relu(tape.matmul(x, tape.transpose(f)), kLeakySlope);
    Tape::Val weights = tape.row_softmax(scores);
    out.push_back(tape.add(x, tape.matmul(weights, f)));
  }
  return out;
}

/// Eager view of the prompted features and their attention weights.
struct PromptedFeatures {
  std::vector<Tensor> features;  // per type, same shapes as the raw features
  std::vector<Tensor> weights;   // per type, |V_A| x K
};

inline PromptedFeatures prompt_features(const HetGraph& g, FeaturePrompt& prompt) {
  PromptedFeatures out;
  Tape tape;
  for (const NodeType& t : g.node_types()) {
    Param& tok = prompt.tokens[static_cast<std::size_t>(t.id)];
    if (tok.value.cols() != t.feat_dim)
      throw DimensionError("feature prompt: tokens for type '" + t.name + "' are " +
                           shape_str(tok.value) + ", feature dim is " +
                           std::to_string(t.feat_dim));
    Tape::Val x = tape.leaf(g.features(t.id));
    Tape::Val f = tape.param(tok);
    Tape::Val scores = tape.leaky_relu(tape.matmul(x, tape.transpose(f)), kLeakySlope);
    Tape::Val weights = tape.row_softmax(scores);
    Tape::Val prompted = tape.add(x, tape.matmul(weights, f));
    out.weights.push_back(tape.value(weights));
    out.features.push_back(tape.value(prompted));
  }
  return out;
}

/// Prompted embeddings: inject the feature prompt, then run the frozen
/// encoder. Gradients flow through the frozen weights to the tokens without
/// touching the weights themselves.
inline std::vector<Tensor> prompted_embeddings(const HetGraph& g,
                                               const NeighborIndex& index,
                                               FeaturePrompt& prompt,
                                               FrozenEncoder& enc) {
  require_fingerprint_match(enc, g);
  Tape tape;
  std::vector<Tape::Val> prompted = prompt_features_on_tape(tape, g, prompt);
  auto prop = build_propagation_matrices(g, index);
  EncodeComputation out = encode_on_tape(tape, prompted, g, prop, enc.params);
  std::vector<Tensor> result;
  for (Tape::Val v : out.type_embeddings) result.push_back(tape.value(v));
  return result;
}

}  // namespace hetgpt
