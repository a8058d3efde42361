#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hetgpt/errors.hpp"
#include "hetgpt/tensor.hpp"

namespace hetgpt {

/// A node type: dense id, unique name, node count, raw feature width.
struct NodeType {
  int id = -1;
  std::string name;
  int count = 0;
  int feat_dim = 0;
};

/// A typed relation between two node types.
struct EdgeType {
  int id = -1;
  std::string name;
  int src = -1;
  int dst = -1;
};

/// One hop of a metapath: an edge type walked forward (src -> dst) or
/// reversed (dst -> src).
struct MetapathStep {
  int edge_type = -1;
  bool reverse = false;
};

struct Metapath {
  std::string name;
  std::vector<MetapathStep> steps;
};

/// Label value for target nodes without a class.
inline constexpr int kUnlabeled = -1;

/// Immutable typed multigraph with per-type feature matrices. Node indices
/// are local to their type; a global identity is the pair (type, index).
/// Edge lists are stored sorted and deduplicated. Construction validates all
/// structural invariants and throws ValidationError on the first violation.
class HetGraph {
 public:
  HetGraph(std::vector<NodeType> node_types, std::vector<EdgeType> edge_types,
           std::vector<std::vector<std::pair<int, int>>> edges,
           std::vector<Tensor> features, int target_type, std::vector<int> labels,
           std::vector<Metapath> metapaths)
      : node_types_(std::move(node_types)),
        edge_types_(std::move(edge_types)),
        edges_(std::move(edges)),
        features_(std::move(features)),
        target_type_(target_type),
        labels_(std::move(labels)),
        metapaths_(std::move(metapaths)) {
    validate();
  }

  const std::vector<NodeType>& node_types() const { return node_types_; }
  const std::vector<EdgeType>& edge_types() const { return edge_types_; }
  const std::vector<std::pair<int, int>>& edges(int edge_type) const {
    return edges_[static_cast<std::size_t>(edge_type)];
  }
  const Tensor& features(int node_type) const {
    return features_[static_cast<std::size_t>(node_type)];
  }
  int target_type() const { return target_type_; }
  int target_count() const {
    return node_types_[static_cast<std::size_t>(target_type_)].count;
  }
  /// Per-target-node class, kUnlabeled where absent.
  const std::vector<int>& labels() const { return labels_; }
  int num_classes() const {
    int c = 0;
    for (int y : labels_) c = std::max(c, y + 1);
    return c;
  }
  const std::vector<Metapath>& metapaths() const { return metapaths_; }

  int node_type_by_name(const std::string& name) const {
    for (const auto& t : node_types_)
      if (t.name == name) return t.id;
    return -1;
  }
  int edge_type_by_name(const std::string& name) const {
    for (const auto& e : edge_types_)
      if (e.name == name) return e.id;
    return -1;
  }

 private:
  void validate() {
    if (node_types_.size() + edge_types_.size() <= 2)
      throw ValidationError("graph is not heterogeneous: |node types| + |edge types| = " +
                            std::to_string(node_types_.size() + edge_types_.size()) +
                            " <= 2");
    std::set<std::string> names;
    for (std::size_t i = 0; i < node_types_.size(); ++i) {
      const NodeType& t = node_types_[i];
      if (t.id != static_cast<int>(i))
        throw ValidationError("node type ids must be dense, got id " +
                              std::to_string(t.id) + " at position " + std::to_string(i));
      if (!names.insert(t.name).second)
        throw ValidationError("duplicate node type name '" + t.name + "'");
      if (t.count < 0 || t.feat_dim < 0)
        throw ValidationError("node type '" + t.name + "' has negative count or dim");
    }
    if (target_type_ < 0 || target_type_ >= static_cast<int>(node_types_.size()))
      throw ValidationError("target type id " + std::to_string(target_type_) +
                            " out of range");
    if (edges_.size() != edge_types_.size())
      throw ValidationError("edge list count does not match edge type count");
    if (features_.size() != node_types_.size())
      throw ValidationError("feature matrix count does not match node type count");

    for (std::size_t i = 0; i < node_types_.size(); ++i) {
      const NodeType& t = node_types_[i];
      const Tensor& f = features_[i];
      if (f.rows() != t.count || f.cols() != t.feat_dim)
        throw ValidationError("feature matrix for type '" + t.name + "' is " +
                              shape_str(f) + ", expected " + std::to_string(t.count) +
                              "x" + std::to_string(t.feat_dim));
      if (!f.allFinite())
        throw ValidationError("non-finite feature value in type '" + t.name + "'");
    }

    std::set<std::string> edge_names;
    for (std::size_t i = 0; i < edge_types_.size(); ++i) {
      const EdgeType& et = edge_types_[i];
      if (et.id != static_cast<int>(i))
        throw ValidationError("edge type ids must be dense");
      if (!edge_names.insert(et.name).second)
        throw ValidationError("duplicate edge type name '" + et.name + "'");
      if (et.src < 0 || et.src >= static_cast<int>(node_types_.size()) || et.dst < 0 ||
          et.dst >= static_cast<int>(node_types_.size()))
        throw ValidationError("edge type '" + et.name + "' references unknown node type");
      auto& list = edges_[i];
      const int ns = node_types_[static_cast<std::size_t>(et.src)].count;
      const int nd = node_types_[static_cast<std::size_t>(et.dst)].count;
      for (const auto& [s, d] : list) {
        if (s < 0 || s >= ns)
          throw ValidationError("edge type '" + et.name + "': src index " +
                                std::to_string(s) + " >= " + std::to_string(ns) +
                                " nodes of type '" +
                                node_types_[static_cast<std::size_t>(et.src)].name + "'");
        if (d < 0 || d >= nd)
          throw ValidationError("edge type '" + et.name + "': dst index " +
                                std::to_string(d) + " >= " + std::to_string(nd) +
                                " nodes of type '" +
                                node_types_[static_cast<std::size_t>(et.dst)].name + "'");
      }
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }

    const int nt = target_count();
    if (!labels_.empty() && static_cast<int>(labels_.size()) != nt)
      throw ValidationError("label vector size " + std::to_string(labels_.size()) +
                            " does not match target count " + std::to_string(nt));
    for (int y : labels_)
      if (y < kUnlabeled)
        throw ValidationError("label value " + std::to_string(y) + " out of range");
    if (labels_.empty()) labels_.assign(static_cast<std::size_t>(nt), kUnlabeled);

    for (const Metapath& mp : metapaths_) check_metapath(mp);
  }

  void check_metapath(const Metapath& mp) const {
    if (mp.steps.size() < 2)
      throw ValidationError("metapath '" + mp.name + "' must have at least 2 steps");
    int cur = target_type_;
    for (std::size_t k = 0; k < mp.steps.size(); ++k) {
      const MetapathStep& st = mp.steps[k];
      if (st.edge_type < 0 || st.edge_type >= static_cast<int>(edge_types_.size()))
        throw ValidationError("metapath '" + mp.name + "' step " + std::to_string(k) +
                              " references unknown edge type");
      const EdgeType& et = edge_types_[static_cast<std::size_t>(st.edge_type)];
      const int from = st.reverse ? et.dst : et.src;
      const int to = st.reverse ? et.src : et.dst;
      if (from != cur)
        throw ValidationError("metapath '" + mp.name + "' step " + std::to_string(k) +
                              " is type-incompatible: expected start type '" +
                              node_types_[static_cast<std::size_t>(cur)].name +
                              "', edge '" + et.name + "' starts at '" +
                              node_types_[static_cast<std::size_t>(from)].name + "'");
      cur = to;
    }
    if (cur != target_type_)
      throw ValidationError("metapath '" + mp.name + "' must end at the target type");
  }

  std::vector<NodeType> node_types_;
  std::vector<EdgeType> edge_types_;
  std::vector<std::vector<std::pair<int, int>>> edges_;
  std::vector<Tensor> features_;
  int target_type_;
  std::vector<int> labels_;
  std::vector<Metapath> metapaths_;
};

/// The meta template of a graph: its node types and typed relations.
struct NetworkSchema {
  std::vector<NodeType> node_types;
  std::vector<EdgeType> relations;
};

inline NetworkSchema build_schema(const HetGraph& g) {
  return NetworkSchema{g.node_types(), g.edge_types()};
}

/// Per-edge-type adjacency in both directions, local indices.
struct EdgeTypeIndex {
  std::vector<std::vector<int>> forward;   // src local index -> dst indices
  std::vector<std::vector<int>> backward;  // dst local index -> src indices
};

inline EdgeTypeIndex index_edge_type(const HetGraph& g, int edge_type) {
  const EdgeType& et = g.edge_types()[static_cast<std::size_t>(edge_type)];
  EdgeTypeIndex idx;
  idx.forward.resize(static_cast<std::size_t>(g.node_types()[static_cast<std::size_t>(et.src)].count));
  idx.backward.resize(static_cast<std::size_t>(g.node_types()[static_cast<std::size_t>(et.dst)].count));
  for (const auto& [s, d] : g.edges(edge_type)) {
    idx.forward[static_cast<std::size_t>(s)].push_back(d);
    idx.backward[static_cast<std::size_t>(d)].push_back(s);
  }
  return idx;
}

/// Adjacency over target nodes realized by a metapath: neighbors[i] holds the
/// sorted, deduplicated target indices j != i reachable from i along the
/// pattern. Boolean path existence; instance counts are not kept.
inline std::vector<std::vector<int>> compose_metapath(const HetGraph& g,
                                                      const Metapath& mp) {
  // Revalidate so standalone paths fail loudly.
  {
    if (mp.steps.size() < 2)
      throw ValidationError("metapath '" + mp.name + "' must have at least 2 steps");
    int cur = g.target_type();
    for (const MetapathStep& st : mp.steps) {
      if (st.edge_type < 0 || st.edge_type >= static_cast<int>(g.edge_types().size()))
        throw ValidationError("metapath '" + mp.name + "' references unknown edge type");
      const EdgeType& et = g.edge_types()[static_cast<std::size_t>(st.edge_type)];
      const int from = st.reverse ? et.dst : et.src;
      const int to = st.reverse ? et.src : et.dst;
      if (from != cur)
        throw ValidationError("metapath '" + mp.name +
                              "' has a type-incompatible step sequence at edge '" +
                              et.name + "'");
      cur = to;
    }
    if (cur != g.target_type())
      throw ValidationError("metapath '" + mp.name + "' must end at the target type");
  }

  std::vector<EdgeTypeIndex> step_idx;
  step_idx.reserve(mp.steps.size());
  for (const MetapathStep& st : mp.steps) step_idx.push_back(index_edge_type(g, st.edge_type));

  const int nt = g.target_count();
  std::vector<std::vector<int>> result(static_cast<std::size_t>(nt));
  std::vector<char> reached;
  for (int i = 0; i < nt; ++i) {
    // Boolean frontier product, pruned to a set after every step.
    std::vector<int> frontier{i};
    for (std::size_t k = 0; k < mp.steps.size(); ++k) {
      const auto& adj = mp.steps[k].reverse ? step_idx[k].backward : step_idx[k].forward;
      std::set<int> next;
      for (int u : frontier) {
        const auto& out = adj[static_cast<std::size_t>(u)];
        next.insert(out.begin(), out.end());
      }
      frontier.assign(next.begin(), next.end());
      if (frontier.empty()) break;
    }
    for (int j : frontier)
      if (j != i) result[static_cast<std::size_t>(i)].push_back(j);
  }
  return result;
}

/// Schema-adjacent-type and metapath neighbor lists for every target node.
/// Stored lists exclude the node itself; aggregation appends it explicitly.
struct NeighborIndex {
  std::vector<int> adjacent_types;  // node type ids sharing an edge type with the target
  std::vector<std::vector<std::vector<int>>> type_neighbors;  // [slot][target i]
  std::vector<std::string> metapath_names;
  std::vector<std::vector<std::vector<int>>> metapath_neighbors;  // [mp][target i]
};

/// Type view only: which node types touch the target type, and which concrete
/// nodes of each such type share an edge with each target node.
inline NeighborIndex index_type_neighbors(const HetGraph& g) {
  NeighborIndex index;
  const int target = g.target_type();
  const int nt = g.target_count();

  std::set<int> adjacent;
  for (const EdgeType& et : g.edge_types()) {
    if (et.src == target) adjacent.insert(et.dst);
    if (et.dst == target) adjacent.insert(et.src);
  }
  index.adjacent_types.assign(adjacent.begin(), adjacent.end());

  for (int type : index.adjacent_types) {
    std::vector<std::set<int>> nbrs(static_cast<std::size_t>(nt));
    for (const EdgeType& et : g.edge_types()) {
      for (const auto& [s, d] : g.edges(et.id)) {
        if (et.src == target && et.dst == type) nbrs[static_cast<std::size_t>(s)].insert(d);
        if (et.dst == target && et.src == type) nbrs[static_cast<std::size_t>(d)].insert(s);
      }
    }
    std::vector<std::vector<int>> lists(static_cast<std::size_t>(nt));
    for (int i = 0; i < nt; ++i) {
      auto& s = nbrs[static_cast<std::size_t>(i)];
      if (type == target) s.erase(i);
      lists[static_cast<std::size_t>(i)].assign(s.begin(), s.end());
    }
    index.type_neighbors.push_back(std::move(lists));
  }
  return index;
}

/// Full index: type neighbors plus composed metapath neighbors.
inline NeighborIndex build_neighbor_index(const HetGraph& g) {
  NeighborIndex index = index_type_neighbors(g);
  for (const Metapath& mp : g.metapaths()) {
    index.metapath_names.push_back(mp.name);
    index.metapath_neighbors.push_back(compose_metapath(g, mp));
  }
  return index;
}

}  // namespace hetgpt
