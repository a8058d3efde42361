#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "hetgpt/checkpoint.hpp"
#include "hetgpt/encoder.hpp"
#include "hetgpt/synth.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace hetgpt;
using hetgpt::testing::rand_tensor;

namespace {

SyntheticSpec small_spec(std::uint64_t seed, int papers = 40, int authors = 30) {
  SyntheticSpec spec;
  spec.target = {"paper", papers, 6, false};
  spec.intermediates = {{"author", authors, 5, false}, {"subject", 6, 4, true}};
  spec.p_in = 0.15;
  spec.p_out = 0.01;
  spec.signal = 1.5;
  spec.seed = seed;
  return spec;
}

// Straight-line scalar evaluation of the encoder formula for one target node.
std::vector<double> scalar_encode_target(const HetGraph& g, const NeighborIndex& idx,
                                         EncoderParams& p, int node) {
  const int target = g.target_type();
  const Tensor& x = g.features(target);
  const int dim = static_cast<int>(p.w2[0].value.cols());
  const int hidden = static_cast<int>(p.w1[0].value.cols());

  auto project = [&](int i) {
    std::vector<double> h(static_cast<std::size_t>(hidden));
    for (int j = 0; j < hidden; ++j) {
      double acc = p.b1[static_cast<std::size_t>(target)].value(0, j);
      for (int k = 0; k < x.cols(); ++k)
        acc += x(i, k) * p.w1[static_cast<std::size_t>(target)].value(k, j);
      h[static_cast<std::size_t>(j)] = oracle::leaky(acc);
    }
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int c = 0; c < dim; ++c) {
      double acc = p.b2[static_cast<std::size_t>(target)].value(0, c);
      for (int j = 0; j < hidden; ++j)
        acc += h[static_cast<std::size_t>(j)] *
               p.w2[static_cast<std::size_t>(target)].value(j, c);
      out[static_cast<std::size_t>(c)] = acc;
    }
    return out;
  };

  std::vector<double> logits;
  for (int c = 0; c < p.fusion_logits.value.cols(); ++c)
    logits.push_back(p.fusion_logits.value(0, c));
  std::vector<double> gamma = oracle::softmax(logits);

  std::vector<double> fused(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t m = 0; m < idx.metapath_neighbors.size(); ++m) {
    const auto& nbrs = idx.metapath_neighbors[m][static_cast<std::size_t>(node)];
    std::vector<double> mixed = project(node);
    for (int j : nbrs) {
      std::vector<double> pj = project(j);
      for (int c = 0; c < dim; ++c)
        mixed[static_cast<std::size_t>(c)] += pj[static_cast<std::size_t>(c)];
    }
    for (double& v : mixed) v /= static_cast<double>(nbrs.size() + 1);
    for (int c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (int k = 0; k < dim; ++k)
        acc += mixed[static_cast<std::size_t>(k)] * p.mp_weight[m].value(k, c);
      fused[static_cast<std::size_t>(c)] += gamma[m] * oracle::leaky(acc);
    }
  }
  return fused;
}

}  // namespace

TEST_CASE("encode matches a straight-line scalar evaluation") {
  SyntheticSpec spec = small_spec(21, 10, 8);
  HetGraph g = generate(spec);
  NeighborIndex idx = build_neighbor_index(g);
  Rng rng(5);
  EncoderParams params = init_encoder_params(g, 4, 6, rng);

  auto H = encode(g, idx, params);
  for (int node : {0, 3, 7}) {
    auto expect = scalar_encode_target(g, idx, params, node);
    for (int c = 0; c < 4; ++c)
      CHECK(H[0](node, c) == Catch::Approx(expect[static_cast<std::size_t>(c)]).epsilon(1e-10));
  }
}

TEST_CASE("without metapath edges each target embedding depends only on itself") {
  std::vector<NodeType> types{{0, "paper", 4, 3}, {1, "author", 2, 2}};
  std::vector<EdgeType> etypes{{0, "write", 1, 0}, {1, "cite", 0, 0}};
  Metapath pap{"PAP", {{0, true}, {0, false}}};
  Metapath pp{"PP", {{1, false}, {1, true}}};
  Rng rng(3);
  HetGraph g(types, etypes, {{}, {}}, {rand_tensor(4, 3, rng), rand_tensor(2, 2, rng)}, 0,
             {}, {pap, pp});
  NeighborIndex idx = build_neighbor_index(g);
  EncoderParams params = init_encoder_params(g, 4, 5, rng);

  auto H = encode(g, idx, params);
  for (int node = 0; node < 4; ++node) {
    auto expect = scalar_encode_target(g, idx, params, node);
    for (int c = 0; c < 4; ++c)
      CHECK(H[0](node, c) == Catch::Approx(expect[static_cast<std::size_t>(c)]).epsilon(1e-10));
  }
}

TEST_CASE("encode is equivariant to target node permutation") {
  // Swap papers 0 and 1: relabel edges, features, labels; rows must swap too.
  Rng rng(17);
  auto build = [&](bool swapped) {
    std::vector<NodeType> types{{0, "paper", 3, 2}, {1, "author", 2, 2}};
    std::vector<EdgeType> etypes{{0, "write", 1, 0}};
    Tensor pf(3, 2);
    pf << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    Tensor af = rand_tensor(2, 2, rng);
    std::vector<std::pair<int, int>> write{{0, 0}, {0, 1}, {1, 2}};
    auto relabel = [&](int p) { return swapped ? (p == 0 ? 1 : (p == 1 ? 0 : p)) : p; };
    for (auto& [a, p] : write) p = relabel(p);
    Tensor pf2 = pf;
    if (swapped) {
      pf2.row(0) = pf.row(1);
      pf2.row(1) = pf.row(0);
    }
    Metapath pap{"PAP", {{0, true}, {0, false}}};
    Metapath pap2{"PAP2", {{0, true}, {0, false}}};
    return HetGraph(types, etypes, {write}, {pf2, af}, 0, {}, {pap, pap2});
  };

  Rng prng(8);
  HetGraph g1 = build(false);
  EncoderParams params = init_encoder_params(g1, 4, 5, prng);
  NeighborIndex i1 = build_neighbor_index(g1);
  auto h1 = encode(g1, i1, params);

  HetGraph g2 = build(true);
  NeighborIndex i2 = build_neighbor_index(g2);
  auto h2 = encode(g2, i2, params);

  CHECK((h1[0].row(0) - h2[0].row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h1[0].row(1) - h2[0].row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h1[0].row(2) - h2[0].row(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("initial contrastive loss is near log batch size") {
  HetGraph g = generate(small_spec(31));
  NeighborIndex idx = build_neighbor_index(g);
  EncoderConfig cfg{8, 16, 1, 1e-3, 0.5, 7};
  PretrainResult r = pretrain(g, idx, cfg);
  const double expected = std::log(static_cast<double>(g.target_count()));
  CHECK(std::abs(r.losses.front() - expected) < 0.15 * expected);
}

TEST_CASE("pretraining reduces the loss and separates views") {
  HetGraph g = generate(small_spec(32));
  NeighborIndex idx = build_neighbor_index(g);
  EncoderConfig cfg{8, 16, 60, 3e-3, 0.5, 7};
  PretrainResult r = pretrain(g, idx, cfg);
  REQUIRE(r.losses.size() == 60);
  for (double l : r.losses) REQUIRE(std::isfinite(l));
  CHECK(r.losses.back() < r.losses.front());

  // Positive pairs (same node, two views) vs in-batch negatives.
  Tape tape;
  std::vector<Tape::Val> feats;
  for (const NodeType& t : g.node_types()) feats.push_back(tape.leaf(g.features(t.id)));
  auto prop = build_propagation_matrices(g, idx);
  EncodeComputation enc = encode_on_tape(tape, feats, g, prop, r.encoder.params);
  Tensor z1 = tape.value(enc.metapath_views[0]);
  Tensor z2 = tape.value(enc.metapath_views[1]);
  double pos = 0.0, neg = 0.0;
  int npos = 0, nneg = 0;
  for (int i = 0; i < z1.rows(); ++i)
    for (int j = 0; j < z2.rows(); ++j) {
      double c = z1.row(i).dot(z2.row(j)) / (z1.row(i).norm() * z2.row(j).norm() + 1e-12);
      if (i == j) {
        pos += c;
        ++npos;
      } else {
        neg += c;
        ++nneg;
      }
    }
  CHECK(pos / npos > neg / nneg);
}

TEST_CASE("pretraining is deterministic per seed") {
  HetGraph g = generate(small_spec(33, 25, 20));
  NeighborIndex idx = build_neighbor_index(g);
  EncoderConfig cfg{6, 10, 10, 1e-3, 0.5, 42};
  PretrainResult a = pretrain(g, idx, cfg);
  PretrainResult b = pretrain(g, idx, cfg);
  CHECK(encoder_param_hash(a.encoder) == encoder_param_hash(b.encoder));
}

TEST_CASE("pretraining rejects single-view graphs") {
  std::vector<NodeType> types{{0, "paper", 3, 2}, {1, "author", 2, 2}};
  std::vector<EdgeType> etypes{{0, "write", 1, 0}};
  Metapath pap{"PAP", {{0, true}, {0, false}}};
  Rng rng(1);
  HetGraph g(types, etypes, {{{0, 0}}}, {rand_tensor(3, 2, rng), rand_tensor(2, 2, rng)},
             0, {}, {pap});
  NeighborIndex idx = build_neighbor_index(g);
  CHECK_THROWS_AS(pretrain(g, idx, EncoderConfig{4, 4, 1, 1e-3, 0.5, 1}), ConfigError);
}

TEST_CASE("encoder checkpoints round-trip exactly") {
  HetGraph g = generate(small_spec(34, 20, 15));
  NeighborIndex idx = build_neighbor_index(g);
  PretrainResult r = pretrain(g, idx, EncoderConfig{6, 8, 5, 1e-3, 0.5, 3});

  std::ostringstream os;
  save_encoder(r.encoder, os);
  std::istringstream is(os.str());
  FrozenEncoder loaded = load_encoder(is);

  CHECK(encoder_param_hash(loaded) == encoder_param_hash(r.encoder));
  CHECK(loaded.graph_fingerprint == r.encoder.graph_fingerprint);
  CHECK(loaded.dim == r.encoder.dim);
  CHECK(loaded.metapath_names == r.encoder.metapath_names);
  for (const Param* p : loaded.params.all()) CHECK_FALSE(p->trainable);

  require_fingerprint_match(loaded, g);
  HetGraph other = generate(small_spec(99, 20, 15));
  CHECK_THROWS_AS(require_fingerprint_match(loaded, other), CheckpointError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::istringstream bad("not-a-checkpoint\n");
  CHECK_THROWS_AS(load_encoder(bad), CheckpointError);
}
