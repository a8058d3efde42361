#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "hetgpt/graph.hpp"
#include "hetgpt/tape.hpp"

namespace hetgpt {

/// Trainable weights of the two-level neighborhood attention: one node
/// attention vector per view, a shared semantic scorer per level, and the
/// final fusion layer combining the metapath and type views.
struct AggregationParams {
  std::vector<Param> type_node_attn;  // per adjacent type: 2d x 1
  Param type_sem_w, type_sem_b, type_sem_a;
  std::vector<Param> mp_node_attn;  // per metapath: 2d x 1
  Param mp_sem_w, mp_sem_b, mp_sem_a;
  Param fuse_w, fuse_b;  // 2d x d, 1 x d

  std::vector<Param*> all() {
    std::vector<Param*> out;
    for (auto& p : type_node_attn) out.push_back(&p);
    out.push_back(&type_sem_w);
    out.push_back(&type_sem_b);
    out.push_back(&type_sem_a);
    for (auto& p : mp_node_attn) out.push_back(&p);
    out.push_back(&mp_sem_w);
    out.push_back(&mp_sem_b);
    out.push_back(&mp_sem_a);
    out.push_back(&fuse_w);
    out.push_back(&fuse_b);
    return out;
  }

  long size() {
    long n = 0;
    for (Param* p : all()) n += p->size();
    return n;
  }
};

inline AggregationParams init_aggregation_params(int dim, int n_adjacent_types,
                                                 int n_metapaths, Rng& rng) {
  AggregationParams p;
  for (int m = 0; m < n_adjacent_types; ++m)
    p.type_node_attn.emplace_back(kaiming_normal(2 * dim, 1, 2 * dim, rng),
                                  "agg.type_attn." + std::to_string(m));
  p.type_sem_w = Param(kaiming_normal(dim, dim, dim, rng), "agg.type_sem_w");
  p.type_sem_b = Param(Tensor::Zero(1, dim), "agg.type_sem_b");
  p.type_sem_a = Param(kaiming_normal(dim, 1, dim, rng), "agg.type_sem_a");
  for (int m = 0; m < n_metapaths; ++m)
    p.mp_node_attn.emplace_back(kaiming_normal(2 * dim, 1, 2 * dim, rng),
                                "agg.mp_attn." + std::to_string(m));
  p.mp_sem_w = Param(kaiming_normal(dim, dim, dim, rng), "agg.mp_sem_w");
  p.mp_sem_b = Param(Tensor::Zero(1, dim), "agg.mp_sem_b");
  p.mp_sem_a = Param(kaiming_normal(dim, 1, dim, rng), "agg.mp_sem_a");
  // Fusion starts at the mean of the two views so the initial node token
  // lives in the same space as the mean-initialized class tokens.
  Tensor fuse = Tensor::Zero(2 * dim, dim);
  fuse.topRows(dim) = 0.5 * Tensor::Identity(dim, dim);
  fuse.bottomRows(dim) = 0.5 * Tensor::Identity(dim, dim);
  p.fuse_w = Param(std::move(fuse), "agg.fuse_w");
  p.fuse_b = Param(Tensor::Zero(1, dim), "agg.fuse_b");
  return p;
}

/// Precomputed packed candidate lists for every attention view. Candidates of
/// target node i are the node itself followed by its neighbors; rows
/// [offsets[i], offsets[i+1]) of the packed arrays belong to i.
struct AggregationPlan {
  struct View {
    std::string name;
    int embed_source = -1;  // node type whose embeddings the neighbors use
    std::vector<int> src;   // target row per packed candidate
    std::vector<int> dst;   // candidate row into the (possibly stacked) matrix
    std::shared_ptr<Segments> seg;
    bool stacked = false;  // candidates indexed into [H_target ; H_source]
  };
  std::vector<View> type_views;
  std::vector<View> mp_views;
  int target_count = 0;
};

namespace detail {

inline AggregationPlan::View build_view(const std::string& name, int embed_source,
                                        bool stacked, int target_count,
                                        const std::vector<std::vector<int>>& neighbors) {
  AggregationPlan::View view;
  view.name = name;
  view.embed_source = embed_source;
  view.stacked = stacked;
  view.seg = std::make_shared<Segments>();
  view.seg->offsets.push_back(0);
  for (int i = 0; i < target_count; ++i) {
    view.src.push_back(i);
    view.dst.push_back(i);  // self row lives in the target block
    for (int j : neighbors[static_cast<std::size_t>(i)]) {
      view.src.push_back(i);
      view.dst.push_back(stacked ? target_count + j : j);
    }
    view.seg->offsets.push_back(static_cast<int>(view.src.size()));
  }
  return view;
}

}  // namespace detail

inline AggregationPlan build_aggregation_plan(const HetGraph& g,
                                              const NeighborIndex& index) {
  AggregationPlan plan;
  plan.target_count = g.target_count();
  if (index.adjacent_types.empty())
    throw ConfigError("aggregation: target type has no schema-adjacent types");
  if (index.metapath_neighbors.empty())
    throw ConfigError("aggregation: graph defines no metapaths");

  for (std::size_t m = 0; m < index.adjacent_types.size(); ++m) {
    const int type = index.adjacent_types[m];
    const bool stacked = type != g.target_type();
    plan.type_views.push_back(detail::build_view(
        g.node_types()[static_cast<std::size_t>(type)].name, type, stacked,
        plan.target_count, index.type_neighbors[m]));
  }
  for (std::size_t m = 0; m < index.metapath_neighbors.size(); ++m)
    plan.mp_views.push_back(detail::build_view(index.metapath_names[m], g.target_type(),
                                               false, plan.target_count,
                                               index.metapath_neighbors[m]));
  return plan;
}

struct AggregationOutput {
  Tape::Val z;     // n_T x d final node tokens
  Tape::Val z_tp;  // type-based view
  Tape::Val z_mp;  // metapath-based view
  Tape::Val beta_tp;
  Tape::Val beta_mp;
  std::vector<Tape::Val> alpha_tp;  // packed per-candidate weights per view
  std::vector<Tape::Val> alpha_mp;
};

namespace detail {

struct ViewLevel {
  std::vector<Tape::Val> aggregated;  // per view: n_T x d
  std::vector<Tape::Val> alphas;
  Tape::Val beta;
  Tape::Val combined;
};

/// Two-level attention over one family of views (types or metapaths).
inline ViewLevel attend_views(Tape& tape, const std::vector<AggregationPlan::View>& views,
                              Tape::Val target_embed,
                              const std::vector<Tape::Val>& type_embeds,
                              std::vector<Param>& node_attn, Param& sem_w, Param& sem_b,
                              Param& sem_a, int dim) {
  ViewLevel out;
  Tape::Val sem_w_v = tape.param(sem_w);
  Tape::Val sem_b_v = tape.param(sem_b);
  Tape::Val sem_a_v = tape.param(sem_a);

  std::vector<Tape::Val> scores;
  for (std::size_t m = 0; m < views.size(); ++m) {
    const AggregationPlan::View& view = views[m];
    Tape::Val cat = view.stacked
                        ? tape.concat_rows(target_embed,
                                           type_embeds[static_cast<std::size_t>(view.embed_source)])
                        : target_embed;

    Tape::Val attn = tape.param(node_attn[m]);
    Tape::Val a_query = tape.slice_rows(attn, 0, dim);
    Tape::Val a_key = tape.slice_rows(attn, dim, dim);
    Tape::Val s_query = tape.matmul(target_embed, a_query);  // n_T x 1
    Tape::Val s_key = tape.matmul(cat, a_key);               // rows x 1

    Tape::Val packed = tape.add(tape.gather_rows(s_query, view.src),
                                tape.gather_rows(s_key, view.dst));
    Tape::Val alpha = tape.segment_softmax(tape.leaky_relu(packed, kLeakySlope), view.seg);
    Tape::Val messages = tape.scale_rows(tape.gather_rows(cat, view.dst), alpha);
    Tape::Val h = tape.leaky_relu(tape.segment_sum(messages, view.seg), kLeakySlope);
    out.aggregated.push_back(h);
    out.alphas.push_back(alpha);

    Tape::Val proj = tape.tanh(tape.add_row_broadcast(tape.matmul(h, sem_w_v), sem_b_v));
    scores.push_back(tape.reduce_mean_rows(tape.matmul(proj, sem_a_v)));  // 1 x 1
  }

  Tape::Val w = scores[0];
  for (std::size_t m = 1; m < scores.size(); ++m) w = tape.concat_cols(w, scores[m]);
  out.beta = tape.row_softmax(w);

  for (std::size_t m = 0; m < views.size(); ++m) {
    Tape::Val weighted = tape.mul_scalar(out.aggregated[m],
                                         tape.slice_cols(out.beta, static_cast<int>(m), 1));
    out.combined = (m == 0) ? weighted : tape.add(out.combined, weighted);
  }
  return out;
}

}  // namespace detail

inline Tape::Val fuse_on_tape(Tape& tape, Tape::Val z_mp, Tape::Val z_tp,
                              AggregationParams& params) {
  return tape.leaky_relu(
      tape.add_row_broadcast(tape.matmul(tape.concat_cols(z_mp, z_tp), tape.param(params.fuse_w)),
                             tape.param(params.fuse_b)),
      kLeakySlope);
}

/// Full multi-view aggregation over prompted embeddings. Semantic weights are
/// computed over every target node, so they are graph-level quantities shared
/// by all nodes.
inline AggregationOutput aggregate_on_tape(Tape& tape,
                                           const std::vector<Tape::Val>& type_embeds,
                                           Tape::Val target_embed,
                                           const AggregationPlan& plan,
                                           AggregationParams& params) {
  const int dim = static_cast<int>(tape.value(target_embed).cols());
  AggregationOutput out;

  detail::ViewLevel tp = detail::attend_views(tape, plan.type_views, target_embed,
                                              type_embeds, params.type_node_attn,
                                              params.type_sem_w, params.type_sem_b,
                                              params.type_sem_a, dim);
  detail::ViewLevel mp = detail::attend_views(tape, plan.mp_views, target_embed,
                                              type_embeds, params.mp_node_attn,
                                              params.mp_sem_w, params.mp_sem_b,
                                              params.mp_sem_a, dim);

  out.z_tp = tp.combined;
  out.z_mp = mp.combined;
  out.beta_tp = tp.beta;
  out.beta_mp = mp.beta;
  out.alpha_tp = std::move(tp.alphas);
  out.alpha_mp = std::move(mp.alphas);
  out.z = fuse_on_tape(tape, out.z_mp, out.z_tp, params);
  return out;
}

/// Tab-separated diagnostic dump: graph-level semantic weights and per-node
/// attention rows for every view.
inline void write_attention_dump(std::ostream& os, const Tape& tape,
                                 const AggregationPlan& plan,
                                 const AggregationOutput& out) {
  auto dump_level = [&](const char* level, const std::vector<AggregationPlan::View>& views,
                        const std::vector<Tape::Val>& alphas, Tape::Val beta) {
    const Tensor& b = tape.value(beta);
    for (std::size_t m = 0; m < views.size(); ++m)
      os << "beta\t" << level << "\t" << views[m].name << "\t"
         << b(0, static_cast<int>(m)) << "\n";
    for (std::size_t m = 0; m < views.size(); ++m) {
      const AggregationPlan::View& view = views[m];
      const Tensor& a = tape.value(alphas[m]);
      for (int i = 0; i < plan.target_count; ++i) {
        for (int e = view.seg->offsets[static_cast<std::size_t>(i)];
             e < view.seg->offsets[static_cast<std::size_t>(i) + 1]; ++e) {
          const int cand = view.dst[static_cast<std::size_t>(e)];
          const bool self = e == view.seg->offsets[static_cast<std::size_t>(i)];
          os << "alpha\t" << level << "\t" << view.name << "\t" << i << "\t"
             << (self ? i : (view.stacked ? cand - plan.target_count : cand)) << "\t"
             << (self ? "self" : "neighbor") << "\t" << a(e, 0) << "\n";
        }
      }
    }
  };
  dump_level("type", plan.type_views, out.alpha_tp, out.beta_tp);
  dump_level("metapath", plan.mp_views, out.alpha_mp, out.beta_mp);
}

}  // namespace hetgpt
