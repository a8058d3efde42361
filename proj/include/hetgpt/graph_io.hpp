#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hetgpt/graph.hpp"
#include "hetgpt/hash.hpp"

namespace hetgpt {

// Line-oriented, tab-separated graph text format.
//
//   #nodetype <name> <count> <feature_dim>
//   #edgetype <name> <src_type> <dst_type>
//   #target <type>
//   #metapath <name> <edgetype>[:rev] ...
//   #meta <key>=<value>            free-form annotations, ignored on load
//   N <type> <local_index> <f_1> ... <f_dA>
//   E <edgetype> <src_index> <dst_index>
//   L <local_index> <class>        labels of target-type nodes
//
// Unknown directives and malformed rows are rejected with the line number.

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline ValidationError parse_error(std::size_t lineno, const std::string& msg) {
  return ValidationError("line " + std::to_string(lineno) + ": " + msg);
}

inline double parse_double(const std::string& s, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error(lineno, "bad real value '" + s + "'");
  }
}

inline int parse_int(const std::string& s, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error(lineno, "bad integer '" + s + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline HetGraph load_graph(std::istream& in) {
  using detail::parse_error;
  std::vector<NodeType> node_types;
  std::vector<EdgeType> edge_types;
  std::vector<std::vector<std::pair<int, int>>> edges;
  std::vector<Tensor> features;
  int target_type = -1;
  std::vector<std::pair<int, int>> label_rows;
  struct RawMetapath {
    std::string name;
    std::vector<std::string> steps;
  };
  std::vector<RawMetapath> raw_metapaths;

  auto type_id = [&](const std::string& name, std::size_t lineno) {
    for (const auto& t : node_types)
      if (t.name == name) return t.id;
    throw parse_error(lineno, "unknown node type '" + name + "'");
  };
  auto edge_id = [&](const std::string& name, std::size_t lineno) {
    for (const auto& e : edge_types)
      if (e.name == name) return e.id;
    throw parse_error(lineno, "unknown edge type '" + name + "'");
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const std::string& tag = tok[0];

    if (tag == "#nodetype") {
      if (tok.size() != 4) throw parse_error(lineno, "#nodetype expects <name> <count> <dim>");
      NodeType t;
      t.id = static_cast<int>(node_types.size());
      t.name = tok[1];
      t.count = detail::parse_int(tok[2], lineno);
      t.feat_dim = detail::parse_int(tok[3], lineno);
      if (t.count < 0 || t.feat_dim < 0) throw parse_error(lineno, "negative count or dim");
      node_types.push_back(t);
      features.push_back(Tensor::Zero(t.count, t.feat_dim));
    } else if (tag == "#edgetype") {
      if (tok.size() != 4)
        throw parse_error(lineno, "#edgetype expects <name> <src_type> <dst_type>");
      EdgeType e;
      e.id = static_cast<int>(edge_types.size());
      e.name = tok[1];
      e.src = type_id(tok[2], lineno);
      e.dst = type_id(tok[3], lineno);
      edge_types.push_back(e);
      edges.emplace_back();
    } else if (tag == "#target") {
      if (tok.size() != 2) throw parse_error(lineno, "#target expects <type>");
      target_type = type_id(tok[1], lineno);
    } else if (tag == "#metapath") {
      if (tok.size() < 4) throw parse_error(lineno, "#metapath expects <name> and >= 2 steps");
      RawMetapath mp;
      mp.name = tok[1];
      mp.steps.assign(tok.begin() + 2, tok.end());
      raw_metapaths.push_back(std::move(mp));
    } else if (tag == "#meta") {
      continue;  // free-form annotation
    } else if (tag == "N") {
      if (tok.size() < 3) throw parse_error(lineno, "N expects <type> <index> <features...>");
      int t = type_id(tok[1], lineno);
      int i = detail::parse_int(tok[2], lineno);
      const NodeType& nt = node_types[static_cast<std::size_t>(t)];
      if (i < 0 || i >= nt.count)
        throw parse_error(lineno, "node index " + std::to_string(i) + " out of range for '" +
                                      nt.name + "'");
      if (static_cast<int>(tok.size()) - 3 != nt.feat_dim)
        throw parse_error(lineno, "expected " + std::to_string(nt.feat_dim) +
                                      " features, got " + std::to_string(tok.size() - 3));
      for (int c = 0; c < nt.feat_dim; ++c)
        features[static_cast<std::size_t>(t)](i, c) =
            detail::parse_double(tok[static_cast<std::size_t>(c) + 3], lineno);
    } else if (tag == "E") {
      if (tok.size() != 4) throw parse_error(lineno, "E expects <edgetype> <src> <dst>");
      int e = edge_id(tok[1], lineno);
      edges[static_cast<std::size_t>(e)].emplace_back(detail::parse_int(tok[2], lineno),
                                                      detail::parse_int(tok[3], lineno));
    } else if (tag == "L") {
      if (tok.size() != 3) throw parse_error(lineno, "L expects <index> <class>");
      label_rows.emplace_back(detail::parse_int(tok[1], lineno),
                              detail::parse_int(tok[2], lineno));
    } else {
      throw parse_error(lineno, "unknown directive '" + tag + "'");
    }
  }

  if (target_type < 0) throw ValidationError("graph file has no #target directive");

  std::vector<int> labels(
      static_cast<std::size_t>(node_types[static_cast<std::size_t>(target_type)].count),
      kUnlabeled);
  for (const auto& [i, y] : label_rows) {
    if (i < 0 || i >= static_cast<int>(labels.size()))
      throw ValidationError("label index " + std::to_string(i) + " out of range");
    labels[static_cast<std::size_t>(i)] = y;
  }

  std::vector<Metapath> metapaths;
  for (const auto& raw : raw_metapaths) {
    Metapath mp;
    mp.name = raw.name;
    for (const std::string& s : raw.steps) {
      MetapathStep step;
      std::string name = s;
      if (name.size() > 4 && name.substr(name.size() - 4) == ":rev") {
        step.reverse = true;
        name = name.substr(0, name.size() - 4);
      }
      step.edge_type = -1;
      for (const auto& e : edge_types)
        if (e.name == name) step.edge_type = e.id;
      if (step.edge_type < 0)
        throw ValidationError("metapath '" + raw.name + "' references unknown edge type '" +
                              name + "'");
      mp.steps.push_back(step);
    }
    metapaths.push_back(std::move(mp));
  }

  return HetGraph(std::move(node_types), std::move(edge_types), std::move(edges),
                  std::move(features), target_type, std::move(labels),
                  std::move(metapaths));
}

inline HetGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open graph file '" + path + "'");
  return load_graph(in);
}

/// Canonical serialization: headers, features, edges, labels, in id order.
/// Real values are written with 17 significant digits so a round trip
/// restores them bit-exactly.
inline void save_graph(const HetGraph& g, std::ostream& out,
                       const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  for (const auto& [k, v] : meta) out << "#meta\t" << k << "=" << v << "\n";
  for (const auto& t : g.node_types())
    out << "#nodetype\t" << t.name << "\t" << t.count << "\t" << t.feat_dim << "\n";
  for (const auto& e : g.edge_types())
    out << "#edgetype\t" << e.name << "\t"
        << g.node_types()[static_cast<std::size_t>(e.src)].name << "\t"
        << g.node_types()[static_cast<std::size_t>(e.dst)].name << "\n";
  out << "#target\t" << g.node_types()[static_cast<std::size_t>(g.target_type())].name
      << "\n";
  for (const auto& mp : g.metapaths()) {
    out << "#metapath\t" << mp.name;
    for (const auto& st : mp.steps) {
      out << "\t" << g.edge_types()[static_cast<std::size_t>(st.edge_type)].name;
      if (st.reverse) out << ":rev";
    }
    out << "\n";
  }
  for (const auto& t : g.node_types()) {
    const Tensor& f = g.features(t.id);
    for (int i = 0; i < t.count; ++i) {
      out << "N\t" << t.name << "\t" << i;
      for (int c = 0; c < t.feat_dim; ++c) out << "\t" << detail::fmt_double(f(i, c));
      out << "\n";
    }
  }
  for (const auto& e : g.edge_types())
    for (const auto& [s, d] : g.edges(e.id))
      out << "E\t" << e.name << "\t" << s << "\t" << d << "\n";
  const auto& labels = g.labels();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kUnlabeled) out << "L\t" << i << "\t" << labels[i] << "\n";
}

inline std::string serialize_graph(const HetGraph& g) {
  std::ostringstream os;
  save_graph(g, os);
  return os.str();
}

inline void save_graph_file(const HetGraph& g, const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write graph file '" + path + "'");
  save_graph(g, out, meta);
}

/// Content identity of a graph: digest of its canonical serialization.
inline std::string graph_fingerprint(const HetGraph& g) {
  return sha256_hex(serialize_graph(g));
}

}  // namespace hetgpt
