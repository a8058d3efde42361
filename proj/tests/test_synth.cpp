#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "hetgpt/graph_io.hpp"
#include "hetgpt/synth.hpp"

using namespace hetgpt;

TEST_CASE("generation is deterministic and round-trips through the file format") {
  SyntheticSpec spec = SyntheticSpec::acm_mini(7);
  spec.target.count = 60;
  spec.intermediates[0].count = 80;
  HetGraph a = generate(spec);
  HetGraph b = generate(spec);
  CHECK(serialize_graph(a) == serialize_graph(b));

  std::istringstream in(serialize_graph(a));
  HetGraph c = load_graph(in);
  CHECK(serialize_graph(c) == serialize_graph(a));
}

TEST_CASE("generated graphs satisfy the structural invariants") {
  SyntheticSpec spec = SyntheticSpec::acm_mini(3);
  spec.target.count = 50;
  spec.intermediates[0].count = 60;
  HetGraph g = generate(spec);  // constructor validates
  CHECK(g.num_classes() == 3);
  CHECK(g.metapaths().size() == 2);
  CHECK(g.target_count() == 50);
}

TEST_CASE("p_in == p_out removes class assortativity") {
  SyntheticSpec spec;
  spec.target = {"paper", 120, 4, false};
  spec.intermediates = {{"author", 120, 4, false}};
  spec.p_in = spec.p_out = 0.05;
  spec.seed = 11;
  HetGraph g = generate(spec);
  auto adj = compose_metapath(g, g.metapaths()[0]);
  long same = 0, total = 0;
  for (int i = 0; i < g.target_count(); ++i)
    for (int j : adj[static_cast<std::size_t>(i)]) {
      ++total;
      if (g.labels()[static_cast<std::size_t>(i)] == g.labels()[static_cast<std::size_t>(j)])
        ++same;
    }
  REQUIRE(total > 50);
  // Chance rate for 3 balanced classes is ~1/3; allow a 3-sigma band.
  double frac = static_cast<double>(same) / static_cast<double>(total);
  double sigma = std::sqrt((1.0 / 3) * (2.0 / 3) / static_cast<double>(total));
  CHECK(std::abs(frac - 1.0 / 3) < 3.5 * sigma + 0.02);
}

TEST_CASE("zero signal removes the feature class signal") {
  SyntheticSpec spec = SyntheticSpec::acm_mini(5);
  spec.target.count = 200;
  spec.signal = 0.0;
  HetGraph g = generate(spec);
  // Class-conditional feature means should coincide at zero signal.
  Tensor mean0 = Tensor::Zero(1, g.features(0).cols());
  Tensor mean1 = Tensor::Zero(1, g.features(0).cols());
  int n0 = 0, n1 = 0;
  for (int i = 0; i < g.target_count(); ++i) {
    if (g.labels()[static_cast<std::size_t>(i)] == 0) {
      mean0 += g.features(0).row(i);
      ++n0;
    } else if (g.labels()[static_cast<std::size_t>(i)] == 1) {
      mean1 += g.features(0).row(i);
      ++n1;
    }
  }
  REQUIRE(n0 > 10);
  REQUIRE(n1 > 10);
  mean0 /= n0;
  mean1 /= n1;
  CHECK((mean0 - mean1).norm() < 1.0);  // noise-level gap, not the s=1.5 shift
}

TEST_CASE("ACM-mini metapath adjacency is strongly intra-class") {
  double worst = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    HetGraph g = generate(SyntheticSpec::acm_mini(seed));
    auto adj = compose_metapath(g, g.metapaths()[0]);
    long same = 0, total = 0;
    for (int i = 0; i < g.target_count(); ++i)
      for (int j : adj[static_cast<std::size_t>(i)]) {
        ++total;
        if (g.labels()[static_cast<std::size_t>(i)] ==
            g.labels()[static_cast<std::size_t>(j)])
          ++same;
      }
    REQUIRE(total > 0);
    worst = std::min(worst, static_cast<double>(same) / static_cast<double>(total));
  }
  CHECK(worst > 0.8);
}

TEST_CASE("splits have exact shot counts and are pairwise disjoint") {
  SyntheticSpec gspec = SyntheticSpec::acm_mini(2);
  gspec.target.count = 120;
  HetGraph g = generate(gspec);
  SplitSpec sspec{1, 30, 30, 9};
  Splits s = split(g, sspec);
  CHECK(s.labeled.size() == 3);  // shots=1, C=3
  CHECK(s.val.size() == 30);
  CHECK(s.test.size() == 30);

  std::set<int> all(s.labeled.begin(), s.labeled.end());
  for (int i : s.val) CHECK(all.insert(i).second);
  for (int i : s.test) CHECK(all.insert(i).second);
  for (int i : all) CHECK(i < g.target_count());

  SplitSpec five{5, 30, 30, 9};
  Splits s5 = split(g, five);
  std::vector<int> per_class(3, 0);
  for (int i : s5.labeled) ++per_class[static_cast<std::size_t>(
      g.labels()[static_cast<std::size_t>(i)])];
  for (int c = 0; c < 3; ++c) CHECK(per_class[static_cast<std::size_t>(c)] == 5);
}

TEST_CASE("split is deterministic per seed and differs across seeds") {
  HetGraph g = generate(SyntheticSpec::acm_mini(4));
  SplitSpec a{5, 100, 100, 13};
  CHECK(split(g, a).labeled == split(g, a).labeled);

  int collisions = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    SplitSpec s1{5, 100, 100, 1000 + 2 * k};
    SplitSpec s2{5, 100, 100, 1001 + 2 * k};
    if (split(g, s1).labeled == split(g, s2).labeled) ++collisions;
  }
  CHECK(collisions == 0);
}

TEST_CASE("infeasible splits are rejected") {
  SyntheticSpec gspec = SyntheticSpec::acm_mini(6);
  gspec.target.count = 30;
  gspec.intermediates[0].count = 40;
  HetGraph g = generate(gspec);
  CHECK_THROWS_AS(split(g, SplitSpec{20, 10, 10, 1}), ConfigError);
  CHECK_THROWS_AS(split(g, SplitSpec{1, 500, 500, 1}), ConfigError);
}

TEST_CASE("invalid synthetic specs are rejected") {
  SyntheticSpec bad;
  bad.classes = 1;
  CHECK_THROWS_AS(generate(bad), ConfigError);
  bad = SyntheticSpec{};
  bad.p_out = 0.5;
  bad.p_in = 0.1;
  CHECK_THROWS_AS(generate(bad), ConfigError);
  bad = SyntheticSpec{};
  bad.signal = -1.0;
  CHECK_THROWS_AS(generate(bad), ConfigError);
}
