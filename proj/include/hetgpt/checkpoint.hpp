#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hetgpt/encoder.hpp"
#include "hetgpt/hash.hpp"

namespace hetgpt {

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor\t" << name << "\t" << t.rows() << "\t" << t.cols() << "\n";
  for (int r = 0; r < t.rows(); ++r) {
    for (int c = 0; c < t.cols(); ++c) {
      if (c) out << "\t";
      out << fmt_double(t(r, c));
    }
    out << "\n";
  }
}

inline Tensor read_tensor(std::istream& in, const std::string& expect_name) {
  std::string tag, name;
  int rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "tensor" || name != expect_name)
    throw CheckpointError("checkpoint: expected tensor '" + expect_name + "', got '" +
                          tag + " " + name + "'");
  if (rows < 0 || cols < 0) throw CheckpointError("checkpoint: bad tensor shape");
  Tensor t(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (!(in >> t(r, c)))
        throw CheckpointError("checkpoint: truncated tensor '" + expect_name + "'");
  return t;
}

}  // namespace detail

/// Canonical text of all encoder weights (theta and psi). The identity of a
/// frozen encoder is the SHA-256 of this text.
inline std::string serialize_encoder_tensors(const FrozenEncoder& enc) {
  std::ostringstream os;
  for (const Param* p : enc.params.all()) detail::write_tensor(os, p->name, p->value);
  detail::write_tensor(os, enc.head.bilinear.name, enc.head.bilinear.value);
  return os.str();
}

inline std::string encoder_param_hash(const FrozenEncoder& enc) {
  return sha256_hex(serialize_encoder_tensors(enc));
}

inline void save_encoder(const FrozenEncoder& enc, std::ostream& out) {
  out << "hetgpt-encoder-v1\n";
  out << "fingerprint\t" << enc.graph_fingerprint << "\n";
  out << "dim\t" << enc.dim << "\n";
  out << "hidden\t" << enc.hidden << "\n";
  out << "tau_pre\t" << detail::fmt_double(enc.head.tau_pre) << "\n";
  out << "types\t" << enc.params.w1.size();
  for (const Param& p : enc.params.w1) out << "\t" << p.name.substr(7);  // strip enc.w1.
  out << "\n";
  out << "metapaths\t" << enc.metapath_names.size();
  for (const auto& n : enc.metapath_names) out << "\t" << n;
  out << "\n";
  out << serialize_encoder_tensors(enc);
  out << "end\n";
}

inline void save_encoder_file(const FrozenEncoder& enc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  save_encoder(enc, out);
}

inline FrozenEncoder load_encoder(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "hetgpt-encoder-v1")
    throw CheckpointError("checkpoint: bad magic line '" + line + "'");

  FrozenEncoder enc;
  std::string tag;
  in >> tag >> enc.graph_fingerprint;
  if (tag != "fingerprint") throw CheckpointError("checkpoint: missing fingerprint");
  in >> tag >> enc.dim;
  if (tag != "dim") throw CheckpointError("checkpoint: missing dim");
  in >> tag >> enc.hidden;
  if (tag != "hidden") throw CheckpointError("checkpoint: missing hidden");
  in >> tag >> enc.head.tau_pre;
  if (tag != "tau_pre") throw CheckpointError("checkpoint: missing tau_pre");

  std::size_t n_types = 0;
  in >> tag >> n_types;
  if (tag != "types") throw CheckpointError("checkpoint: missing types");
  std::vector<std::string> type_names(n_types);
  for (auto& n : type_names) in >> n;

  std::size_t n_mp = 0;
  in >> tag >> n_mp;
  if (tag != "metapaths") throw CheckpointError("checkpoint: missing metapaths");
  enc.metapath_names.resize(n_mp);
  for (auto& n : enc.metapath_names) in >> n;

  auto read_param = [&](const std::string& name) {
    return Param(detail::read_tensor(in, name), name, false);
  };
  for (const auto& n : type_names) enc.params.w1.push_back(read_param("enc.w1." + n));
  for (const auto& n : type_names) enc.params.b1.push_back(read_param("enc.b1." + n));
  for (const auto& n : type_names) enc.params.w2.push_back(read_param("enc.w2." + n));
  for (const auto& n : type_names) enc.params.b2.push_back(read_param("enc.b2." + n));
  for (const auto& n : enc.metapath_names)
    enc.params.mp_weight.push_back(read_param("enc.mp." + n));
  enc.params.fusion_logits = read_param("enc.fusion");
  enc.head.bilinear = read_param("enc.head.bilinear");

  in >> tag;
  if (tag != "end") throw CheckpointError("checkpoint: missing end marker");
  return enc;
}

inline FrozenEncoder load_encoder_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_encoder(in);
}

/// Tuner-side guard: a checkpoint may only be used with the exact graph it
/// was trained on.
inline void require_fingerprint_match(const FrozenEncoder& enc, const HetGraph& g) {
  const std::string fp = graph_fingerprint(g);
  if (fp != enc.graph_fingerprint)
    throw CheckpointError("checkpoint fingerprint " + enc.graph_fingerprint.substr(0, 12) +
                          "... does not match graph " + fp.substr(0, 12) + "...");
}

}  // namespace hetgpt
