#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "hetgpt/aggregation.hpp"
#include "hetgpt/checkpoint.hpp"
#include "hetgpt/encoder.hpp"
#include "hetgpt/prompts.hpp"
#include "hetgpt/synth.hpp"

namespace hetgpt {

/// Single-layer projection applied to node tokens and class tokens before
/// similarity scoring. One shared layer by default; a separate class-token
/// branch is available behind the shared flag.
struct ProjectionHead {
  Param w, b;
  bool shared = true;
  Param wq, bq;  // class-token branch when not shared

  std::vector<Param*> all() {
    std::vector<Param*> out{&w, &b};
    if (!shared) {
      out.push_back(&wq);
      out.push_back(&bq);
    }
    return out;
  }
};

/// Starts at the identity so projected tokens keep the geometry of their
/// mean-based initialization; tuning moves the layer from there.
inline ProjectionHead init_projection_head(int dim, bool shared, Rng& rng) {
  (void)rng;
  ProjectionHead h;
  h.shared = shared;
  h.w = Param(Tensor::Identity(dim, dim), "head.w");
  h.b = Param(Tensor::Zero(1, dim), "head.b");
  if (!shared) {
    h.wq = Param(Tensor::Identity(dim, dim), "head.wq");
    h.bq = Param(Tensor::Zero(1, dim), "head.bq");
  }
  return h;
}

inline Tape::Val project_on_tape(Tape& tape, Tape::Val x, ProjectionHead& head,
                                 bool class_branch) {
  Param& w = (!head.shared && class_branch) ? head.wq : head.w;
  Param& b = (!head.shared && class_branch) ? head.bq : head.b;
  return tape.add_row_broadcast(tape.matmul(x, tape.param(w)), tape.param(b));
}

struct TuneConfig {
  double lr = 3e-3;        // searched in [1e-4, 5e-3]; 0 allowed as a degenerate probe
  int patience = 30;       // early-stopping patience, in [20, 100]
  double lambda_orth = 0.01;
  double tau = 0.5;
  int max_epochs = 150;
  std::uint64_t seed = 1;
  int token_count = 5;  // K
  bool shared_head = true;
  bool inference_temperature = false;  // predict_proba omits tau unless enabled

  void validate() const {
    if (lr != 0.0 && (lr < 1e-4 || lr > 5e-3))
      throw ConfigError("tune: lr must lie in [1e-4, 5e-3], got " + std::to_string(lr));
    if (patience < 20 || patience > 100)
      throw ConfigError("tune: patience must lie in [20, 100], got " +
                        std::to_string(patience));
    if (tau <= 0.0) throw ConfigError("tune: tau must be positive");
    if (lambda_orth < 0.0) throw ConfigError("tune: lambda must be non-negative");
    if (max_epochs < 0) throw ConfigError("tune: max_epochs must be non-negative");
    if (token_count < 1) throw ConfigError("tune: token count K must be >= 1");
  }
};

/// Classification quality summary.
struct Metrics {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::vector<double> precision, recall, f1;     // per class
  std::vector<std::vector<long>> confusion;      // [gold][pred]
};

/// Macro-F1 over classes present in gold or predictions (absent-from-both
/// classes are skipped); micro-F1 equals accuracy for single-label classes.
inline Metrics evaluate(const std::vector<int>& pred, const std::vector<int>& gold,
                        int num_classes) {
  if (pred.size() != gold.size())
    throw DimensionError("evaluate: " + std::to_string(pred.size()) +
                         " predictions vs " + std::to_string(gold.size()) + " gold labels");
  Metrics m;
  m.confusion.assign(static_cast<std::size_t>(num_classes),
                     std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
      throw DimensionError("evaluate: class index out of range");
    ++m.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])];
    if (pred[i] == gold[i]) ++correct;
  }
  m.micro_f1 = pred.empty() ? 0.0 : static_cast<double>(correct) / pred.size();

  m.precision.assign(static_cast<std::size_t>(num_classes), 0.0);
  m.recall.assign(static_cast<std::size_t>(num_classes), 0.0);
  m.f1.assign(static_cast<std::size_t>(num_classes), 0.0);
  double f1_sum = 0.0;
  int considered = 0;
  for (int c = 0; c < num_classes; ++c) {
    long tp = m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    long gold_count = 0, pred_count = 0;
    for (int k = 0; k < num_classes; ++k) {
      gold_count += m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
      pred_count += m.confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
    }
    if (gold_count + pred_count == 0) continue;
    const double prec = pred_count ? static_cast<double>(tp) / pred_count : 0.0;
    const double rec = gold_count ? static_cast<double>(tp) / gold_count : 0.0;
    const double f1 = (prec + rec > 0.0) ? 2.0 * prec * rec / (prec + rec) : 0.0;
    m.precision[static_cast<std::size_t>(c)] = prec;
    m.recall[static_cast<std::size_t>(c)] = rec;
    m.f1[static_cast<std::size_t>(c)] = f1;
    f1_sum += f1;
    ++considered;
  }
  m.macro_f1 = considered ? f1_sum / considered : 0.0;
  return m;
}

/// The pairwise template for node v and class c: both tokens pushed through
/// the projection head.
struct PromptPair {
  Tensor node_token;   // 1 x d
  Tensor class_token;  // 1 x d
};

inline PromptPair prompt_template(int v, int c, const Tensor& node_tokens_projected,
                                  const Tensor& class_tokens_projected) {
  if (v < 0 || v >= node_tokens_projected.rows())
    throw ConfigError("prompt_template: node " + std::to_string(v) + " out of range");
  if (c < 0 || c >= class_tokens_projected.rows())
    throw ConfigError("prompt_template: class " + std::to_string(c) + " out of range");
  return PromptPair{node_tokens_projected.row(v), class_tokens_projected.row(c)};
}

/// InfoNCE over class tokens plus the orthogonality penalty on the raw class
/// prompt: for each labeled node the positive is its own class token and the
/// negatives are all remaining class tokens. Similarity is cosine.
inline Tape::Val tuning_loss_on_tape(Tape& tape, Tape::Val z_proj_labeled,
                                     Tape::Val q_proj, Tape::Val q_raw,
                                     const std::vector<int>& labeled_classes, double tau,
                                     double lambda) {
  Tape::Val zn = tape.l2_normalize_rows(z_proj_labeled);
  Tape::Val qn = tape.l2_normalize_rows(q_proj);
  Tape::Val logits = tape.scale(tape.matmul(zn, tape.transpose(qn)), 1.0 / tau);
  Tape::Val picked = tape.select_cols(tape.row_log_softmax(logits), labeled_classes);
  Tape::Val nce = tape.scale(tape.reduce_sum(picked), -1.0);

  const int classes = static_cast<int>(tape.value(q_raw).rows());
  Tape::Val gram = tape.matmul(q_raw, tape.transpose(q_raw));
  Tape::Val diff = tape.add(gram, tape.leaf(-Tensor::Identity(classes, classes)));
  Tape::Val orth = tape.frobenius_norm_sq(diff);
  return tape.add(nce, tape.scale(orth, lambda));
}

/// Inference probabilities: softmax over cosine similarities between the
/// projected node token and every projected class token. The inference
/// formula carries no temperature; a config flag can re-enable it.
inline Tensor predict_proba(const Tensor& z_proj_rows, const Tensor& q_proj,
                            bool use_temperature = false, double tau = 0.5) {
  Tensor probs(z_proj_rows.rows(), q_proj.rows());
  for (int i = 0; i < z_proj_rows.rows(); ++i) {
    const double zn = z_proj_rows.row(i).norm();
    for (int c = 0; c < q_proj.rows(); ++c) {
      const double qn = q_proj.row(c).norm();
      double sim = (zn == 0.0 || qn == 0.0)
                       ? 0.0
                       : z_proj_rows.row(i).dot(q_proj.row(c)) / (zn * qn);
      probs(i, c) = use_temperature ? sim / tau : sim;
    }
    const double m = probs.row(i).maxCoeff();
    Eigen::Array<double, 1, Eigen::Dynamic> e = (probs.row(i).array() - m).exp();
    probs.row(i) = (e / e.sum()).matrix();
  }
  return probs;
}

/// Argmax with ties broken toward the lowest class index.
inline int predict_one(const Tensor& proba_row) {
  int best = 0;
  for (int c = 1; c < proba_row.cols(); ++c)
    if (proba_row(0, c) > proba_row(0, best)) best = c;
  return best;
}

inline std::vector<int> predict(const Tensor& probas) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(probas.rows()));
  for (int i = 0; i < probas.rows(); ++i) out.push_back(predict_one(probas.row(i)));
  return out;
}

/// Everything trained during prompt tuning. The frozen encoder is referenced,
/// never owned, and never part of the trainable set.
struct PromptTuneState {
  VirtualClassPrompt class_prompt;
  FeaturePrompt feature_prompt;
  AggregationParams agg;
  ProjectionHead head;
  bool inference_temperature = false;
  double tau = 0.5;

  std::vector<Param*> trainable() {
    std::vector<Param*> out{&class_prompt.tokens};
    for (Param* p : feature_prompt.all()) out.push_back(p);
    for (Param* p : agg.all()) out.push_back(p);
    for (Param* p : head.all()) out.push_back(p);
    return out;
  }
};

/// Projected node tokens for every target node plus projected class tokens,
/// from one full forward pass of the prompt pipeline.
struct TokenForward {
  Tensor node_tokens;       // n_T x d, pre-projection
  Tensor node_projected;    // n_T x d
  Tensor class_projected;   // C x d
};

inline TokenForward forward_tokens(const HetGraph& g, const AggregationPlan& plan,
                                   const std::vector<Tensor>& propagation,
                                   FrozenEncoder& enc, PromptTuneState& state) {
  Tape tape;
  auto prompted = prompt_features_on_tape(tape, g, state.feature_prompt);
  EncodeComputation embed = encode_on_tape(tape, prompted, g, propagation, enc.params);
  AggregationOutput agg =
      aggregate_on_tape(tape, embed.type_embeddings,
                        embed.type_embeddings[static_cast<std::size_t>(g.target_type())],
                        plan, state.agg);
  Tape::Val z_proj = project_on_tape(tape, agg.z, state.head, false);
  Tape::Val q_proj = project_on_tape(tape, tape.param(state.class_prompt.tokens),
                                     state.head, true);
  return TokenForward{tape.value(agg.z), tape.value(z_proj), tape.value(q_proj)};
}

namespace detail {

inline std::vector<int> classes_of(const std::vector<int>& labels,
                                   const std::vector<int>& subset) {
  std::vector<int> out;
  out.reserve(subset.size());
  for (int v : subset) out.push_back(labels[static_cast<std::size_t>(v)]);
  return out;
}

inline Metrics eval_subset(const Tensor& z_proj, const Tensor& q_proj,
                           const std::vector<int>& subset, const std::vector<int>& labels,
                           int classes, bool use_tau, double tau) {
  Tensor rows(static_cast<int>(subset.size()), z_proj.cols());
  for (std::size_t i = 0; i < subset.size(); ++i)
    rows.row(static_cast<int>(i)) = z_proj.row(subset[i]);
  Tensor probs = predict_proba(rows, q_proj, use_tau, tau);
  return evaluate(predict(probs), classes_of(labels, subset), classes);
}

struct Snapshot {
  std::vector<Tensor> values;
  void capture(const std::vector<Param*>& params) {
    values.clear();
    for (const Param* p : params) values.push_back(p->value);
  }
  void restore(const std::vector<Param*>& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
  }
};

}  // namespace detail

struct TuneResult {
  PromptTuneState state;
  Metrics val_metrics;
  Metrics test_metrics;
  std::vector<double> loss_curve;
  std::vector<double> val_curve;
  int epochs_run = 0;
  int epochs_to_best = 0;
  long trainable_params = 0;
};

/// Prompt tuning over a frozen encoder: per epoch, inject the feature prompt,
/// run the frozen encoder, aggregate, project, take an Adam step on the
/// prompt-side parameters, and early-stop on validation Macro-F1. Returns the
/// best-validation snapshot. Epoch counting: the state after k optimizer
/// steps is "epoch k"; epoch 0 is the initialization.
inline TuneResult tune(const HetGraph& g, const NeighborIndex& index, FrozenEncoder& enc,
                       const Splits& splits, const TuneConfig& cfg) {
  cfg.validate();
  require_fingerprint_match(enc, g);
  if (splits.labeled.empty()) throw ConfigError("tune: empty labeled split");
  const int classes = g.num_classes();

  AggregationPlan plan = build_aggregation_plan(g, index);
  auto propagation = build_propagation_matrices(g, index);

  // Class tokens start from the unprompted embeddings' labeled means.
  auto base_embed = encode(g, index, enc.params);
  TuneResult result;
  result.state.class_prompt =
      init_class_prompt(base_embed[static_cast<std::size_t>(g.target_type())],
                        splits.labeled, g.labels(), classes);
  result.state.feature_prompt =
      init_feature_prompt(g, cfg.token_count, Rng::mix(cfg.seed, 1));
  Rng rng(Rng::mix(cfg.seed, 2));
  result.state.agg = init_aggregation_params(
      enc.dim, static_cast<int>(index.adjacent_types.size()),
      static_cast<int>(index.metapath_neighbors.size()), rng);
  result.state.head = init_projection_head(enc.dim, cfg.shared_head, rng);
  result.state.inference_temperature = cfg.inference_temperature;
  result.state.tau = cfg.tau;

  PromptTuneState& state = result.state;
  std::vector<Param*> trainable = state.trainable();
  result.trainable_params = param_count(trainable);
  AdamState opt;
  opt.init(trainable);

  const std::vector<int> labeled_classes = detail::classes_of(g.labels(), splits.labeled);
  detail::Snapshot best;
  double best_val = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stale = 0;

  for (int epoch = 0;; ++epoch) {
    zero_grads(trainable);
    Tape tape;
    auto prompted = prompt_features_on_tape(tape, g, state.feature_prompt);
    EncodeComputation embed = encode_on_tape(tape, prompted, g, propagation, enc.params);
    AggregationOutput agg = aggregate_on_tape(
        tape, embed.type_embeddings,
        embed.type_embeddings[static_cast<std::size_t>(g.target_type())], plan, state.agg);
    Tape::Val z_proj = project_on_tape(tape, agg.z, state.head, false);
    Tape::Val q_proj =
        project_on_tape(tape, tape.param(state.class_prompt.tokens), state.head, true);
    Tape::Val z_labeled = tape.gather_rows(z_proj, splits.labeled);
    Tape::Val loss =
        tuning_loss_on_tape(tape, z_labeled, q_proj, tape.param(state.class_prompt.tokens),
                            labeled_classes, cfg.tau, cfg.lambda_orth);
    result.loss_curve.push_back(tape.value(loss)(0, 0));

    Metrics val = detail::eval_subset(tape.value(z_proj), tape.value(q_proj), splits.val,
                                      g.labels(), classes, cfg.inference_temperature,
                                      cfg.tau);
    result.val_curve.push_back(val.macro_f1);
    if (val.macro_f1 > best_val) {
      best_val = val.macro_f1;
      best_epoch = epoch;
      best.capture(trainable);
      stale = 0;
    } else {
      ++stale;
    }

    if (epoch >= cfg.max_epochs || stale > cfg.patience) {
      result.epochs_run = epoch;
      break;
    }
    tape.backward(loss);
    adam_step(trainable, opt, cfg.lr);
  }

  best.restore(trainable);
  result.epochs_to_best = best_epoch;

  TokenForward tokens = forward_tokens(g, plan, propagation, enc, state);
  result.val_metrics =
      detail::eval_subset(tokens.node_projected, tokens.class_projected, splits.val,
                          g.labels(), classes, cfg.inference_temperature, cfg.tau);
  result.test_metrics =
      detail::eval_subset(tokens.node_projected, tokens.class_projected, splits.test,
                          g.labels(), classes, cfg.inference_temperature, cfg.tau);
  return result;
}

struct FinetuneResult {
  Metrics val_metrics;
  Metrics test_metrics;
  std::vector<double> loss_curve;
  std::vector<double> val_curve;
  int epochs_run = 0;
  int epochs_to_best = 0;
  long trainable_params = 0;
};

/// The traditional comparison arm: unfreeze a copy of the encoder, attach a
/// linear prediction head over the fused target embeddings, and minimize
/// cross-entropy on the labeled set with the same optimizer and early
/// stopping as prompt tuning.
inline FinetuneResult baseline_finetune(const HetGraph& g, const NeighborIndex& index,
                                        const FrozenEncoder& enc, const Splits& splits,
                                        const TuneConfig& cfg) {
  cfg.validate();
  if (splits.labeled.empty()) throw ConfigError("finetune: empty labeled split");
  const int classes = g.num_classes();
  auto propagation = build_propagation_matrices(g, index);

  EncoderParams theta = thaw_copy(enc.params);
  Rng rng(Rng::mix(cfg.seed, 3));
  Param head_w(kaiming_normal(enc.dim, classes, enc.dim, rng), "finetune.head.w");
  Param head_b(Tensor::Zero(1, classes), "finetune.head.b");

  std::vector<Param*> trainable = theta.all();
  trainable.push_back(&head_w);
  trainable.push_back(&head_b);
  FinetuneResult result;
  result.trainable_params = param_count(trainable);
  AdamState opt;
  opt.init(trainable);

  const std::vector<int> labeled_classes = detail::classes_of(g.labels(), splits.labeled);
  detail::Snapshot best;
  double best_val = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stale = 0;

  auto eval_logits = [&](const Tensor& logits, const std::vector<int>& subset) {
    std::vector<int> pred;
    pred.reserve(subset.size());
    for (int v : subset) pred.push_back(predict_one(logits.row(v)));
    return evaluate(pred, detail::classes_of(g.labels(), subset), classes);
  };

  for (int epoch = 0;; ++epoch) {
    zero_grads(trainable);
    Tape tape;
    std::vector<Tape::Val> feats;
    for (const NodeType& t : g.node_types()) feats.push_back(tape.leaf(g.features(t.id)));
    EncodeComputation embed = encode_on_tape(tape, feats, g, propagation, theta);
    Tape::Val logits = tape.add_row_broadcast(
        tape.matmul(embed.fused_target, tape.param(head_w)), tape.param(head_b));
    Tape::Val picked = tape.select_cols(
        tape.row_log_softmax(tape.gather_rows(logits, splits.labeled)), labeled_classes);
    Tape::Val loss = tape.scale(tape.reduce_sum(picked), -1.0);
    result.loss_curve.push_back(tape.value(loss)(0, 0));

    Metrics val = eval_logits(tape.value(logits), splits.val);
    result.val_curve.push_back(val.macro_f1);
    if (val.macro_f1 > best_val) {
      best_val = val.macro_f1;
      best_epoch = epoch;
      best.capture(trainable);
      stale = 0;
    } else {
      ++stale;
    }

    if (epoch >= cfg.max_epochs || stale > cfg.patience) {
      result.epochs_run = epoch;
      break;
    }
    tape.backward(loss);
    adam_step(trainable, opt, cfg.lr);
  }

  best.restore(trainable);
  result.epochs_to_best = best_epoch;

  Tape tape;
  std::vector<Tape::Val> feats;
  for (const NodeType& t : g.node_types()) feats.push_back(tape.leaf(g.features(t.id)));
  EncodeComputation embed = encode_on_tape(tape, feats, g, propagation, theta);
  Tape::Val logits = tape.add_row_broadcast(
      tape.matmul(embed.fused_target, tape.param(head_w)), tape.param(head_b));
  result.val_metrics = eval_logits(tape.value(logits), splits.val);
  result.test_metrics = eval_logits(tape.value(logits), splits.test);
  return result;
}

// ---------------------------------------------------------------------------
// Prompt state checkpointing and the results table.

inline void save_prompt_state(const PromptTuneState& state_in, const HetGraph& g,
                              const std::string& encoder_fingerprint, std::ostream& out) {
  PromptTuneState& state = const_cast<PromptTuneState&>(state_in);
  out << "hetgpt-prompt-v1\n";
  out << "fingerprint\t" << encoder_fingerprint << "\n";
  out << "classes\t" << state.class_prompt.classes() << "\n";
  out << "token_count\t" << state.feature_prompt.token_count << "\n";
  out << "shared_head\t" << (state.head.shared ? 1 : 0) << "\n";
  out << "inference_temperature\t" << (state.inference_temperature ? 1 : 0) << "\n";
  out << "tau\t" << detail::fmt_double(state.tau) << "\n";
  out << "types\t" << g.node_types().size();
  for (const NodeType& t : g.node_types()) out << "\t" << t.name;
  out << "\n";
  out << "type_views\t" << state.agg.type_node_attn.size() << "\n";
  out << "mp_views\t" << state.agg.mp_node_attn.size() << "\n";
  for (Param* p : state.trainable()) detail::write_tensor(out, p->name, p->value);
  out << "end\n";
}

inline PromptTuneState load_prompt_state(std::istream& in, std::string* fingerprint_out) {
  std::string line;
  if (!std::getline(in, line) || line != "hetgpt-prompt-v1")
    throw CheckpointError("prompt checkpoint: bad magic line");
  std::string tag, fingerprint;
  int classes = 0, token_count = 0, shared = 1, inf_tau = 0;
  double tau = 0.5;
  in >> tag >> fingerprint;
  if (tag != "fingerprint") throw CheckpointError("prompt checkpoint: missing fingerprint");
  in >> tag >> classes;
  if (tag != "classes") throw CheckpointError("prompt checkpoint: missing classes");
  in >> tag >> token_count;
  if (tag != "token_count") throw CheckpointError("prompt checkpoint: missing token_count");
  in >> tag >> shared;
  if (tag != "shared_head") throw CheckpointError("prompt checkpoint: missing shared_head");
  in >> tag >> inf_tau;
  if (tag != "inference_temperature")
    throw CheckpointError("prompt checkpoint: missing inference_temperature");
  in >> tag >> tau;
  if (tag != "tau") throw CheckpointError("prompt checkpoint: missing tau");

  std::size_t n_types = 0;
  in >> tag >> n_types;
  if (tag != "types") throw CheckpointError("prompt checkpoint: missing types");
  std::vector<std::string> type_names(n_types);
  for (auto& n : type_names) in >> n;
  std::size_t n_type_views = 0, n_mp_views = 0;
  in >> tag >> n_type_views;
  if (tag != "type_views") throw CheckpointError("prompt checkpoint: missing type_views");
  in >> tag >> n_mp_views;
  if (tag != "mp_views") throw CheckpointError("prompt checkpoint: missing mp_views");

  PromptTuneState state;
  state.inference_temperature = inf_tau != 0;
  state.tau = tau;
  state.class_prompt.tokens = Param(detail::read_tensor(in, "prompt.class"),
                                    "prompt.class");
  state.feature_prompt.token_count = token_count;
  for (const auto& n : type_names)
    state.feature_prompt.tokens.emplace_back(
        detail::read_tensor(in, "prompt.feature." + n), "prompt.feature." + n);
  for (std::size_t m = 0; m < n_type_views; ++m)
    state.agg.type_node_attn.emplace_back(
        detail::read_tensor(in, "agg.type_attn." + std::to_string(m)),
        "agg.type_attn." + std::to_string(m));
  state.agg.type_sem_w = Param(detail::read_tensor(in, "agg.type_sem_w"), "agg.type_sem_w");
  state.agg.type_sem_b = Param(detail::read_tensor(in, "agg.type_sem_b"), "agg.type_sem_b");
  state.agg.type_sem_a = Param(detail::read_tensor(in, "agg.type_sem_a"), "agg.type_sem_a");
  for (std::size_t m = 0; m < n_mp_views; ++m)
    state.agg.mp_node_attn.emplace_back(
        detail::read_tensor(in, "agg.mp_attn." + std::to_string(m)),
        "agg.mp_attn." + std::to_string(m));
  state.agg.mp_sem_w = Param(detail::read_tensor(in, "agg.mp_sem_w"), "agg.mp_sem_w");
  state.agg.mp_sem_b = Param(detail::read_tensor(in, "agg.mp_sem_b"), "agg.mp_sem_b");
  state.agg.mp_sem_a = Param(detail::read_tensor(in, "agg.mp_sem_a"), "agg.mp_sem_a");
  state.agg.fuse_w = Param(detail::read_tensor(in, "agg.fuse_w"), "agg.fuse_w");
  state.agg.fuse_b = Param(detail::read_tensor(in, "agg.fuse_b"), "agg.fuse_b");
  state.head.shared = shared != 0;
  state.head.w = Param(detail::read_tensor(in, "head.w"), "head.w");
  state.head.b = Param(detail::read_tensor(in, "head.b"), "head.b");
  if (!state.head.shared) {
    state.head.wq = Param(detail::read_tensor(in, "head.wq"), "head.wq");
    state.head.bq = Param(detail::read_tensor(in, "head.bq"), "head.bq");
  }
  in >> tag;
  if (tag != "end") throw CheckpointError("prompt checkpoint: missing end marker");
  if (fingerprint_out) *fingerprint_out = fingerprint;
  return state;
}

/// One row of the tab-separated results table.
struct ResultRow {
  std::string dataset;
  std::string seed;  // a number, or "mean" for the summary row
  int shots = 0;
  int token_count = 0;
  double lambda = 0.0, tau = 0.0, lr = 0.0;
  double epochs_run = 0.0;
  double macro_f1 = 0.0, micro_f1 = 0.0;
  double macro_f1_std = 0.0, micro_f1_std = 0.0;
  long trainable_params = 0;
};

inline std::string results_header() {
  return "dataset\tseed\tshots\tK\tlambda\ttau\tlr\tepochs_run\tmacro_f1\tmicro_f1\t"
         "macro_f1_std\tmicro_f1_std\ttrainable_params";
}

inline std::string format_result_row(const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s\t%s\t%d\t%d\t%g\t%g\t%g\t%.1f\t%.6f\t%.6f\t%.6f\t%.6f\t%ld",
                r.dataset.c_str(), r.seed.c_str(), r.shots, r.token_count, r.lambda, r.tau,
                r.lr, r.epochs_run, r.macro_f1, r.micro_f1, r.macro_f1_std, r.micro_f1_std,
                r.trainable_params);
  return buf;
}

}  // namespace hetgpt
