#pragma once

#include <algorithm>
#include <cctype>
#include <numeric>
#include <string>
#include <vector>

#include "hetgpt/graph.hpp"
#include "hetgpt/rng.hpp"

namespace hetgpt {

/// Shape of one generated node type. Hub types mirror small subject-like
/// vocabularies: the first `classes` nodes act as per-class hubs and the rest
/// are distractors that attract only background edges.
struct TypeSpec {
  std::string name;
  int count = 0;
  int feat_dim = 0;
  bool hub = false;
};

/// Typed stochastic-block construction: target nodes get uniform classes and
/// class-shifted Gaussian features; target-intermediate edges appear with
/// probability p_in within a class and p_out across.
struct SyntheticSpec {
  TypeSpec target{"paper", 400, 24, false};
  std::vector<TypeSpec> intermediates{{"author", 700, 16, false}, {"subject", 6, 8, true}};
  int classes = 3;
  double p_in = 0.05;
  double p_out = 0.002;
  double signal = 1.5;  // norm of each class's feature mean shift
  std::uint64_t seed = 1;

  static SyntheticSpec acm_mini(std::uint64_t seed) {
    SyntheticSpec s;
    s.seed = seed;
    return s;
  }
};

namespace detail {
inline char initial(const std::string& name) {
  return name.empty() ? '?' : static_cast<char>(std::toupper(name[0]));
}
}  // namespace detail

inline HetGraph generate(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic spec needs >= 2 classes");
  if (spec.p_out < 0.0 || spec.p_in < spec.p_out || spec.p_in > 1.0)
    throw ConfigError("synthetic spec needs 0 <= p_out <= p_in <= 1");
  if (spec.signal < 0.0) throw ConfigError("synthetic spec needs signal >= 0");
  if (spec.target.count < spec.classes)
    throw ConfigError("target count below class count");
  if (spec.intermediates.empty())
    throw ConfigError("synthetic spec needs at least one intermediate type");
  for (const TypeSpec& t : spec.intermediates)
    if (t.hub && t.count < spec.classes)
      throw ConfigError("hub type '" + t.name + "' needs at least one node per class");

  Rng rng(spec.seed);

  // Class feature means: random directions scaled to the requested norm.
  std::vector<std::vector<double>> means(static_cast<std::size_t>(spec.classes));
  for (auto& mu : means) {
    mu.resize(static_cast<std::size_t>(spec.target.feat_dim));
    double nrm = 0.0;
    for (double& v : mu) {
      v = rng.normal();
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (double& v : mu) v = (nrm > 0 ? v / nrm * spec.signal : 0.0);
  }

  std::vector<int> labels(static_cast<std::size_t>(spec.target.count));
  for (int& y : labels) y = rng.uniform_int(spec.classes);

  // Latent classes for intermediates; -1 marks hub distractors.
  std::vector<std::vector<int>> latent;
  for (const TypeSpec& t : spec.intermediates) {
    std::vector<int> classes(static_cast<std::size_t>(t.count));
    for (int u = 0; u < t.count; ++u) {
      if (t.hub)
        classes[static_cast<std::size_t>(u)] = u < spec.classes ? u : -1;
      else
        classes[static_cast<std::size_t>(u)] = rng.uniform_int(spec.classes);
    }
    latent.push_back(std::move(classes));
  }

  std::vector<NodeType> node_types{{0, spec.target.name, spec.target.count,
                                    spec.target.feat_dim}};
  std::vector<EdgeType> edge_types;
  std::vector<std::vector<std::pair<int, int>>> edges;
  for (std::size_t k = 0; k < spec.intermediates.size(); ++k) {
    const TypeSpec& t = spec.intermediates[k];
    node_types.push_back({static_cast<int>(k) + 1, t.name, t.count, t.feat_dim});
    edge_types.push_back({static_cast<int>(k), spec.target.name + "-" + t.name, 0,
                          static_cast<int>(k) + 1});
    std::vector<std::pair<int, int>> list;
    for (int i = 0; i < spec.target.count; ++i)
      for (int u = 0; u < t.count; ++u) {
        const int cu = latent[k][static_cast<std::size_t>(u)];
        const double p = (cu >= 0 && cu == labels[static_cast<std::size_t>(i)])
                             ? spec.p_in
                             : spec.p_out;
        if (rng.uniform() < p) list.emplace_back(i, u);
      }
    edges.push_back(std::move(list));
  }

  std::vector<Tensor> features;
  {
    Tensor f(spec.target.count, spec.target.feat_dim);
    for (int i = 0; i < spec.target.count; ++i)
      for (int c = 0; c < spec.target.feat_dim; ++c)
        f(i, c) = means[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])]
                       [static_cast<std::size_t>(c)] +
                  rng.normal();
    features.push_back(std::move(f));
  }
  for (const TypeSpec& t : spec.intermediates) {
    Tensor f(t.count, t.feat_dim);
    for (int i = 0; i < t.count; ++i)
      for (int c = 0; c < t.feat_dim; ++c) f(i, c) = rng.normal();
    features.push_back(std::move(f));
  }

  // One palindromic metapath per intermediate type: T -> X -> T.
  std::vector<Metapath> metapaths;
  const char ti = detail::initial(spec.target.name);
  for (std::size_t k = 0; k < spec.intermediates.size(); ++k) {
    Metapath mp;
    mp.name = std::string(1, ti) + detail::initial(spec.intermediates[k].name) + ti;
    mp.steps = {{static_cast<int>(k), false}, {static_cast<int>(k), true}};
    metapaths.push_back(std::move(mp));
  }

  return HetGraph(std::move(node_types), std::move(edge_types), std::move(edges),
                  std::move(features), 0, std::move(labels), std::move(metapaths));
}

/// N-shot evaluation protocol: exactly `shots` labeled target nodes per
/// class, then disjoint validation and test partitions.
struct SplitSpec {
  int shots = 5;
  int val_size = 100;
  int test_size = 100;
  std::uint64_t seed = 1;
};

struct Splits {
  std::vector<int> labeled;
  std::vector<int> val;
  std::vector<int> test;
};

inline Splits split(const HetGraph& g, const SplitSpec& spec) {
  const int nt = g.target_count();
  const int classes = g.num_classes();
  if (classes < 1) throw ConfigError("split: graph has no labeled target nodes");
  if (spec.shots < 1) throw ConfigError("split: shots must be >= 1");
  if (spec.val_size < 0 || spec.test_size < 0)
    throw ConfigError("split: negative partition size");
  if (spec.shots * classes + spec.val_size + spec.test_size > nt)
    throw ConfigError("split: labeled + val + test exceeds " + std::to_string(nt) +
                      " target nodes");

  std::vector<int> order(static_cast<std::size_t>(nt));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);

  const auto& labels = g.labels();
  std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
  Splits out;
  std::vector<char> taken(static_cast<std::size_t>(nt), 0);
  for (int i : order) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y == kUnlabeled) continue;
    if (per_class[static_cast<std::size_t>(y)] < spec.shots) {
      out.labeled.push_back(i);
      ++per_class[static_cast<std::size_t>(y)];
      taken[static_cast<std::size_t>(i)] = 1;
    }
  }
  for (int c = 0; c < classes; ++c)
    if (per_class[static_cast<std::size_t>(c)] < spec.shots)
      throw ConfigError("split: class " + std::to_string(c) + " has only " +
                        std::to_string(per_class[static_cast<std::size_t>(c)]) +
                        " labeled nodes, need " + std::to_string(spec.shots));

  for (int i : order) {
    if (taken[static_cast<std::size_t>(i)] ||
        labels[static_cast<std::size_t>(i)] == kUnlabeled)
      continue;
    if (static_cast<int>(out.val.size()) < spec.val_size) {
      out.val.push_back(i);
    } else if (static_cast<int>(out.test.size()) < spec.test_size) {
      out.test.push_back(i);
    } else {
      break;
    }
  }
  if (static_cast<int>(out.val.size()) < spec.val_size ||
      static_cast<int>(out.test.size()) < spec.test_size)
    throw ConfigError("split: not enough labeled nodes for requested partitions");

  std::sort(out.labeled.begin(), out.labeled.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace hetgpt
