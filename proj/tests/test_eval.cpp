#include <doctest.h>

#include <random>

#include "segsel/error.hpp"
#include "segsel/eval.hpp"
#include "test_util.hpp"

using namespace segsel;
using namespace segsel::testing;

TEST_CASE("fvalue basics") {
  auto vocab = make_vocab(4);
  LabelMap gt = make_map(10, 20, vocab);
  fill_rect(gt, 0, 0, 10, 10, 1);  // 100 px of category 1

  SUBCASE("perfect prediction") {
    CHECK(*fvalue(gt, gt, 1) == doctest::Approx(1.0));
    CHECK(*fvalue(gt, gt, 0) == doctest::Approx(1.0));
  }

  SUBCASE("disjoint masks score zero") {
    LabelMap pred = make_map(10, 20, vocab);
    fill_rect(pred, 0, 10, 10, 10, 1);
    CHECK(*fvalue(pred, gt, 1) == doctest::Approx(0.0));
  }

  SUBCASE("half coverage with perfect precision: F = 2/3") {
    // gt region is 200 px here; pred covers exactly half of it
    LabelMap gt2 = make_map(10, 20, vocab);
    fill_rect(gt2, 0, 0, 10, 20, 2);
    LabelMap pred = make_map(10, 20, vocab);
    fill_rect(pred, 0, 0, 10, 10, 2);
    // hand count: tp = 100, fp = 0, fn = 100 -> P = 1, R = 0.5
    const auto counts = count_category(pred, gt2, 2);
    CHECK(counts.tp == 100);
    CHECK(counts.fp == 0);
    CHECK(counts.fn == 100);
    CHECK(*fvalue(pred, gt2, 2) == doctest::Approx(2.0 / 3.0));
  }

  SUBCASE("absent category is undefined") {
    CHECK_FALSE(fvalue(gt, gt, 3).has_value());
  }

  SUBCASE("dimension mismatch") {
    LabelMap small = make_map(5, 5, vocab);
    CHECK_THROWS_AS(fvalue(small, gt, 1), ConfigError);
  }
}

TEST_CASE("fvalue matches brute-force confusion counting on random maps") {
  auto vocab = make_vocab(5);
  std::mt19937 rng(19);
  std::uniform_int_distribution<int> cat(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    LabelMap a = make_map(16, 16, vocab), b = make_map(16, 16, vocab);
    for (Index y = 0; y < 16; ++y)
      for (Index x = 0; x < 16; ++x) {
        a.labels(y, x) = static_cast<std::uint8_t>(cat(rng));
        b.labels(y, x) = static_cast<std::uint8_t>(cat(rng));
      }
    for (int c = 0; c < 5; ++c) {
      long tp = 0, fp = 0, fn = 0;
      for (Index y = 0; y < 16; ++y)
        for (Index x = 0; x < 16; ++x) {
          const bool ina = a.labels(y, x) == c, inb = b.labels(y, x) == c;
          tp += ina && inb;
          fp += ina && !inb;
          fn += !ina && inb;
        }
      const auto f = fvalue(a, b, static_cast<std::uint8_t>(c));
      if (tp + fp + fn == 0) {
        CHECK_FALSE(f.has_value());
      } else if (tp == 0) {
        CHECK(*f == doctest::Approx(0.0));
      } else {
        const double p = static_cast<double>(tp) / (tp + fp);
        const double r = static_cast<double>(tp) / (tp + fn);
        CHECK(*f == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("fvalue is invariant under swapping pred and gt") {
  auto vocab = make_vocab(5);
  std::mt19937 rng(29);
  std::uniform_int_distribution<int> cat(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    LabelMap a = make_map(12, 12, vocab), b = make_map(12, 12, vocab);
    for (Index y = 0; y < 12; ++y)
      for (Index x = 0; x < 12; ++x) {
        a.labels(y, x) = static_cast<std::uint8_t>(cat(rng));
        b.labels(y, x) = static_cast<std::uint8_t>(cat(rng));
      }
    for (int c = 0; c < 5; ++c) {
      const auto ab = fvalue(a, b, static_cast<std::uint8_t>(c));
      const auto ba = fvalue(b, a, static_cast<std::uint8_t>(c));
      // swapping exchanges precision and recall, leaving F unchanged
      CHECK(ab.has_value() == ba.has_value());
      if (ab) CHECK(*ab == doctest::Approx(*ba).epsilon(1e-12));
    }
  }
}

TEST_CASE("image_score averages over ground-truth categories") {
  auto vocab = make_vocab(4);
  LabelMap gt = make_map(10, 10, vocab);
  fill_rect(gt, 0, 0, 5, 10, 1);
  fill_rect(gt, 5, 0, 5, 10, 2);  // no background left

  SUBCASE("perfect map scores 1") { CHECK(image_score(gt, gt) == doctest::Approx(1.0)); }

  SUBCASE("mean of per-category f-values") {
    LabelMap pred = gt;
    // breaks category 2 fully, keeps 1: F_1 = 1, F_2 = 0
    fill_rect(pred, 5, 0, 5, 10, 3);
    CHECK(image_score(pred, gt) == doctest::Approx(0.5));
  }
}

TEST_CASE("portfolio report shape, averages and wins") {
  auto vocab = make_vocab(4);
  std::vector<LabelMap> gts;
  for (int i = 0; i < 3; ++i) {
    LabelMap gt = make_map(8, 8, vocab);
    fill_rect(gt, 0, 0, 4, 4, 1);
    fill_rect(gt, 4, 4, 4, 4, 2);
    gts.push_back(gt);
  }

  MethodResults perfect{"oracle", gts};
  MethodResults broken{"broken", {}};
  for (const auto& gt : gts) {
    LabelMap bad = gt;
    fill_rect(bad, 0, 0, 4, 4, 3);  // kills category 1
    broken.maps.push_back(bad);
  }

  const EvalReport report = portfolio_report(gts, {perfect, broken});
  REQUIRE(report.methods.size() == 2);
  REQUIRE(report.categories.size() == 4);
  CHECK(report.averages[0] == doctest::Approx(1.0));
  CHECK(report.averages[1] < 1.0);
  CHECK(report.wins[0] == 3);
  CHECK(report.wins[1] == 0);

  // per-method averages recomputable from the table
  double sum = 0.0;
  int n = 0;
  for (const auto& f : report.f[1])
    if (f) {
      sum += *f;
      ++n;
    }
  CHECK(report.averages[1] == doctest::Approx(sum / n).epsilon(1e-12));

  const std::string csv = report_to_csv(report);
  CHECK(csv.find("category,oracle,broken") == 0);
  CHECK(csv.find("average,") != std::string::npos);

  CHECK_THROWS_AS(portfolio_report({}, {perfect}), ConfigError);
  MethodResults missing{"missing", {gts[0]}};
  CHECK_THROWS_AS(portfolio_report(gts, {missing}), ConfigError);
}

TEST_CASE("absent category cells stay empty in the csv") {
  auto vocab = make_vocab(3);
  LabelMap gt = make_map(4, 4, vocab);
  fill_rect(gt, 0, 0, 2, 2, 1);  // category 2 never shows up anywhere
  const EvalReport report = portfolio_report({gt}, {{"m", {gt}}});
  CHECK_FALSE(report.f[0][2].has_value());
  const std::string csv = report_to_csv(report);
  CHECK(csv.find("cat2,\n") != std::string::npos);
}
