#include <doctest.h>

#include <random>

#include "segsel/bayes_net.hpp"
#include "segsel/error.hpp"

using namespace segsel;

namespace {

// Exhaustive joint-table oracle: enumerates every assignment of every node.
VectorD posterior_oracle(const DiscreteBayesNet& net, int query,
                         const std::vector<int>& evidence) {
  const std::size_t n = net.size();
  std::vector<int> values(n, 0);
  VectorD accum = VectorD::Zero(net.node(query).cardinality);
  while (true) {
    bool consistent = true;
    for (std::size_t i = 0; i < n && consistent; ++i)
      if (evidence[i] != kMissing && values[i] != evidence[i]) consistent = false;
    if (consistent) {
      double w = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& node = net.node(static_cast<int>(i));
        Index row = 0;
        for (int p : node.parents)
          row = row * net.node(p).cardinality + values[static_cast<std::size_t>(p)];
        w *= node.cpt(row, values[i]);
      }
      accum[values[static_cast<std::size_t>(query)]] += w;
    }
    // advance the mixed-radix counter
    std::size_t k = 0;
    while (k < n) {
      if (++values[k] < net.node(static_cast<int>(k)).cardinality) break;
      values[k] = 0;
      ++k;
    }
    if (k == n) break;
  }
  const double total = accum.sum();
  if (total <= 0.0) return VectorD::Constant(accum.size(), 1.0 / accum.size());
  return accum / total;
}

DiscreteBayesNet random_net(std::mt19937& rng, int max_nodes = 4) {
  std::uniform_int_distribution<int> n_nodes(2, max_nodes), card(2, 3);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  DiscreteBayesNet net;
  const int n = n_nodes(rng);
  for (int i = 0; i < n; ++i) {
    std::vector<int> parents;
    for (int p = 0; p < i; ++p)
      if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5) parents.push_back(p);
    net.add_node("n" + std::to_string(i), card(rng), parents);
  }
  for (int i = 0; i < n; ++i) {
    MatrixD cpt(net.node(i).n_parent_configs(), net.node(i).cardinality);
    for (Index r = 0; r < cpt.rows(); ++r) {
      for (Index c = 0; c < cpt.cols(); ++c) cpt(r, c) = unit(rng);
      cpt.row(r) /= cpt.row(r).sum();
    }
    net.set_cpt(i, cpt);
  }
  return net;
}

}  // namespace

TEST_CASE("posterior on a hand-built 3-node network matches enumeration") {
  // A -> B, A -> C
  DiscreteBayesNet net;
  const int a = net.add_node("a", 2);
  const int b = net.add_node("b", 2, {a});
  const int c = net.add_node("c", 3, {a});
  MatrixD pa(1, 2);
  pa << 0.3, 0.7;
  net.set_cpt(a, pa);
  MatrixD pb(2, 2);
  pb << 0.9, 0.1, 0.2, 0.8;
  net.set_cpt(b, pb);
  MatrixD pc(2, 3);
  pc << 0.5, 0.25, 0.25, 0.1, 0.3, 0.6;
  net.set_cpt(c, pc);

  SUBCASE("no evidence returns the prior") {
    std::vector<int> none(3, kMissing);
    const VectorD post = net.posterior(a, none);
    CHECK(post[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(post[1] == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("evidence on both children") {
    std::vector<int> evidence = {kMissing, 0, 2};
    const VectorD post = net.posterior(a, evidence);
    const VectorD oracle = posterior_oracle(net, a, evidence);
    CHECK((post - oracle).cwiseAbs().maxCoeff() < 1e-12);
    // hand value: P(a=0|b=0,c=2) = .3*.9*.25 / (.3*.9*.25 + .7*.2*.6)
    CHECK(post[0] == doctest::Approx(0.0675 / (0.0675 + 0.084)).epsilon(1e-12));
  }

  SUBCASE("posterior sums to one") {
    std::vector<int> evidence = {kMissing, 1, kMissing};
    CHECK(net.posterior(a, evidence).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("posterior matches the enumeration oracle on random networks") {
  std::mt19937 rng(61);
  for (int trial = 0; trial < 60; ++trial) {
    const DiscreteBayesNet net = random_net(rng);
    std::uniform_int_distribution<int> coin(0, 2);
    std::vector<int> evidence(net.size(), kMissing);
    for (std::size_t i = 0; i < net.size(); ++i)
      if (coin(rng) == 0)
        evidence[i] = std::uniform_int_distribution<int>(0, net.node(static_cast<int>(i)).cardinality - 1)(rng);
    for (std::size_t q = 0; q < net.size(); ++q) {
      if (evidence[q] != kMissing) continue;
      const VectorD post = net.posterior(static_cast<int>(q), evidence);
      const VectorD oracle = posterior_oracle(net, static_cast<int>(q), evidence);
      REQUIRE(post.size() == oracle.size());
      CHECK((post - oracle).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("case_probability sums the joint over missing values") {
  std::mt19937 rng(67);
  const DiscreteBayesNet net = random_net(rng);
  std::vector<int> all_missing(net.size(), kMissing);
  CHECK(net.case_probability(all_missing) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("EM with complete data is a single counting pass") {
  DiscreteBayesNet net;
  const int a = net.add_node("a", 2);
  const int b = net.add_node("b", 2, {a});

  // counts: a=0 in 3 of 5 rows; b|a=0 -> {2/3, 1/3}; b|a=1 -> {0/2, 2/2}
  std::vector<std::vector<int>> data = {{0, 0}, {0, 0}, {0, 1}, {1, 1}, {1, 1}};
  DiscreteBayesNet::EmOptions options;
  options.randomize_init = false;
  const auto result = net.fit_em(data, options);
  CHECK(result.converged);
  CHECK(result.iterations <= 3);

  CHECK(net.node(a).cpt(0, 0) == doctest::Approx(3.0 / 5.0).epsilon(1e-12));
  CHECK(net.node(b).cpt(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(net.node(b).cpt(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("EM recovers generator CPTs from partially missing data") {
  // generator: A -> B with known tables
  DiscreteBayesNet gen;
  const int a = gen.add_node("a", 2);
  const int b = gen.add_node("b", 3, {a});
  MatrixD pa(1, 2);
  pa << 0.35, 0.65;
  MatrixD pb(2, 3);
  pb << 0.7, 0.2, 0.1, 0.15, 0.25, 0.6;
  gen.set_cpt(a, pa);
  gen.set_cpt(b, pb);

  std::mt19937 rng(71);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const VectorD& p) {
    double u = unit(rng), acc = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
  };

  std::vector<std::vector<int>> data;
  for (int i = 0; i < 10000; ++i) {
    const int va = draw(pa.row(0).transpose());
    const int vb = draw(pb.row(va).transpose());
    std::vector<int> row = {va, vb};
    if (unit(rng) < 0.3) row[static_cast<std::size_t>(unit(rng) < 0.5 ? 0 : 1)] = kMissing;
    data.push_back(std::move(row));
  }

  DiscreteBayesNet net;
  net.add_node("a", 2);
  net.add_node("b", 3, {0});
  DiscreteBayesNet::EmOptions options;
  options.seed = 3;
  const auto result = net.fit_em(data, options);
  CHECK(result.log_likelihood < 0.0);

  CHECK((net.node(0).cpt - pa).cwiseAbs().maxCoeff() < 0.05);
  CHECK((net.node(1).cpt - pb).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("EM with a hidden node keeps CPT rows normalized") {
  DiscreteBayesNet net;
  const int x = net.add_node("x", 3);
  const int h = net.add_node("h", 2, {x});
  const int y = net.add_node("y", 2, {h});
  (void)y;

  std::mt19937 rng(73);
  std::uniform_int_distribution<int> vx(0, 2), vy(0, 1);
  std::vector<std::vector<int>> data;
  for (int i = 0; i < 200; ++i)
    data.push_back({vx(rng), kMissing, vy(rng) & vx(rng) ? 1 : 0});

  const auto result = net.fit_em(data, {});
  CHECK(result.iterations >= 1);
  for (std::size_t i = 0; i < net.size(); ++i)
    for (Index r = 0; r < net.node(static_cast<int>(i)).cpt.rows(); ++r)
      CHECK(net.node(static_cast<int>(i)).cpt.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
  (void)h;
  (void)x;
}

TEST_CASE("MAP-consistent evidence does not dent the MAP posterior on peaked toys") {
  // selector-shaped toy: input -> hidden -> label, with decisive CPTs
  DiscreteBayesNet net;
  const int x = net.add_node("x", 3);
  const int h = net.add_node("h", 2, {x});
  const int label = net.add_node("label", 2, {h});
  MatrixD px(1, 3);
  px << 0.5, 0.3, 0.2;
  MatrixD ph(3, 2);
  ph << 0.9, 0.1, 0.15, 0.85, 0.2, 0.8;
  MatrixD pl(2, 2);
  pl << 0.95, 0.05, 0.1, 0.9;
  net.set_cpt(x, px);
  net.set_cpt(h, ph);
  net.set_cpt(label, pl);

  std::vector<int> none(3, kMissing);
  const VectorD prior = net.posterior(label, none);
  Index map_label = 0;
  prior.maxCoeff(&map_label);

  // most likely completion consistent with that label, by enumeration
  double best = -1.0;
  int best_x = 0, best_h = 0;
  for (int vx = 0; vx < 3; ++vx)
    for (int vh = 0; vh < 2; ++vh) {
      const double w = px(0, vx) * ph(vx, vh) * pl(vh, map_label);
      if (w > best) {
        best = w;
        best_x = vx;
        best_h = vh;
      }
    }

  std::vector<int> with_x = {best_x, kMissing, kMissing};
  CHECK(net.posterior(label, with_x)[map_label] >= prior[map_label] - 1e-12);
  std::vector<int> with_both = {best_x, best_h, kMissing};
  CHECK(net.posterior(label, with_both)[map_label] >=
        net.posterior(label, with_x)[map_label] - 1e-12);
}

TEST_CASE("cpt validation") {
  DiscreteBayesNet net;
  const int a = net.add_node("a", 2);
  MatrixD bad(1, 2);
  bad << 0.5, 0.6;
  CHECK_THROWS_AS(net.set_cpt(a, bad), ConfigError);
  MatrixD wrong_shape(2, 2);
  wrong_shape << 1, 0, 0, 1;
  CHECK_THROWS_AS(net.set_cpt(a, wrong_shape), ConfigError);
  CHECK_THROWS_AS(net.add_node("b", 2, {5}), ConfigError);
  CHECK_THROWS_AS(net.posterior(0, {}), ConfigError);
}
