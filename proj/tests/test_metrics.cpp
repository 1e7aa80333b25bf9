#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace flap;
using flap::testing::make_dataset;

namespace {

struct Fixed {
  std::vector<double> by_group;
  double score(int s, std::span<const double>) const { return by_group[static_cast<std::size_t>(s)]; }
};

struct Linear {
  double score(int s, std::span<const double> a) const { return expit(0.3 * s + 0.1 * a[0] - 0.5); }
};

// Score equal to the label, looked up through the attribute.
struct Oracle {
  double score(int, std::span<const double> a) const { return a[0] > 0 ? 1.0 : 0.0; }
};

Dataset ex1(double sigma, std::size_t n, std::uint64_t seed) {
  scm::Scm1Params p;
  p.sigma_a = sigma;
  return scm::simulate(p, n, seed).data;
}

}  // namespace

TEST(Accuracy, Examples) {
  const auto d = make_dataset(2, 1, {0, 1, 0, 1}, {1, -1, 1, -1}, {1, 0, 1, 0});
  EXPECT_EQ(accuracy(Oracle{}, d).thresholded, 1.0);
  EXPECT_EQ(accuracy(Oracle{}, d).drawn, 1.0);
  const auto flipped = make_dataset(2, 1, {0, 1, 0, 1}, {1, -1, 1, -1}, {0, 1, 0, 1});
  EXPECT_EQ(accuracy(Oracle{}, flipped).thresholded, 0.0);
  // 0.5 is decided as 1
  const auto mixed = make_dataset(2, 1, {0, 1, 0, 1, 0}, {0, 0, 0, 0, 0}, {1, 0, 1, 1, 0});
  EXPECT_DOUBLE_EQ(accuracy(Fixed{{0.5, 0.5}}, mixed).thresholded, 0.6);
  EXPECT_DOUBLE_EQ(accuracy(Fixed{{0.5, 0.5}}, mixed).expected, 0.5);
}

TEST(CfMetric, ConstantPredictorIsZero) {
  const auto d = ex1(2.0, 500, 1);
  EXPECT_EQ(cf_metric(Fixed{{0.3, 0.3}}, d, fit_marginal_mapping(d)), 0.0);
}

TEST(CfMetric, SingleGroupIsZero) {
  const auto d = make_dataset(1, 1, {0, 0, 0}, {1, 2, 3});
  EXPECT_EQ(cf_metric(Linear{}, d, fit_marginal_mapping(d)), 0.0);
}

TEST(CfMetric, NeedsMarginalMapping) {
  const auto d = ex1(1.0, 100, 2);
  EXPECT_THROW(cf_metric(Linear{}, d, fit_orthogonalization(d)), KindError);
}

TEST(CfMetric, TwoGroupReductionAndSymmetry) {
  const auto train = ex1(1.6, 800, 3), test = ex1(1.6, 300, 4);
  const auto prep = fit_marginal_mapping(train);
  double direct = 0, swapped = 0;
  const Linear f;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto a0 = prep.counterfactual(0, test.group(i), test.attrs(i));
    const auto a1 = prep.counterfactual(1, test.group(i), test.attrs(i));
    direct += std::abs(f.score(0, a0) - f.score(1, a1));
    swapped += std::abs(f.score(1, a1) - f.score(0, a0));
  }
  direct /= static_cast<double>(test.size());
  swapped /= static_cast<double>(test.size());
  EXPECT_NEAR(cf_metric(f, test, prep), direct, 1e-12);
  EXPECT_EQ(direct, swapped);
}

TEST(CfMetric, GroupConstantGapIsExact) {
  const auto d = ex1(1.0, 400, 5);
  EXPECT_NEAR(cf_metric(Fixed{{0.2, 0.7}}, d, fit_marginal_mapping(d)), 0.5, 1e-12);
}

TEST(CfMetric, MlFarAboveFlapM) {
  const auto train = ex1(2.0, 5000, 6), test = ex1(2.0, 5000, 7);
  const auto prep = fit_marginal_mapping(train);
  const double ml = cf_metric(fit_ml(train), test, prep);
  const double fm = cf_metric(fit_method(Method::flap1_m, train), test, prep);
  EXPECT_GT(ml, 0.0);
  EXPECT_GE(ml, 10 * fm);
}

TEST(CfMetric, InUnitInterval) {
  const auto train = ex1(2.5, 1000, 8);
  const auto prep = fit_marginal_mapping(train);
  for (Method m : kComparedMethods) {
    const double v = cf_metric(fit_method(m, train), train, prep);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Neighborhood, DeltaOneIsWholeGroup) {
  const auto d = ex1(1.4, 300, 9);
  const RankTable rt(d);
  const auto rows = d.group_rows();
  for (std::size_t i = 0; i < d.size(); i += 17)
    for (int s = 0; s < 2; ++s) EXPECT_EQ(rank_neighborhood(rt, d, s, i, 1.0), rows[static_cast<std::size_t>(s)]);
}

TEST(Neighborhood, DeltaZeroMatchesRank) {
  // equal group sizes, unique values: group 1 = group 0 shifted and rescaled
  std::vector<int> g;
  std::vector<double> a;
  for (int i = 0; i < 20; ++i) {
    g.push_back(0);
    a.push_back(i * 1.5);
    g.push_back(1);
    a.push_back(100 - i * 0.5);
  }
  const auto d = make_dataset(2, 1, g, a);
  const RankTable rt(d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int other = 1 - d.group(i);
    const auto nb = rank_neighborhood(rt, d, other, i, 0.0);
    ASSERT_EQ(nb.size(), 1u);
    EXPECT_DOUBLE_EQ(rt.rank(nb[0], 0), rt.rank(i, 0));
  }
}

TEST(Neighborhood, NestedInDelta) {
  scm::Scm2Params p;
  p.lambda_e1 = -0.4;
  const auto d = scm::simulate(p, 900, 10).data;
  const RankTable rt(d);
  for (std::size_t i = 0; i < d.size(); i += 29)
    for (int s = 0; s < 3; ++s) {
      const auto small = rank_neighborhood(rt, d, s, i, 0.05);
      const auto big = rank_neighborhood(rt, d, s, i, 0.2);
      EXPECT_TRUE(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    }
}

TEST(Neighborhood, HighDimensionCanBeEmpty) {
  // anti-correlated coordinates leave no peer within a tight window
  std::vector<int> g;
  std::vector<double> a;
  for (int i = 0; i < 50; ++i) {
    g.push_back(0);
    a.insert(a.end(), {double(i), double(i)});
    g.push_back(1);
    a.insert(a.end(), {double(i), double(-i)});
  }
  const auto d = make_dataset(2, 2, g, a);
  const RankTable rt(d);
  EXPECT_TRUE(rank_neighborhood(rt, d, 1, 0, 0.01).empty());
}

TEST(CfBound, ConstantPredictorIsZero) {
  const auto d = ex1(1.5, 400, 11);
  MetricConfig mc;
  EXPECT_NEAR(cf_bound(Fixed{{0.4, 0.4}}, d, mc), 0.0, 1e-15);
}

TEST(CfBound, PlanSamplesNestAcrossDelta) {
  // cap the sample: the rows drawn at a small delta are exactly the rows the
  // larger delta's sample keeps from the small neighborhood
  const auto train = ex1(1.8, 2000, 12), units = ex1(1.8, 200, 13);
  MetricConfig small, big;
  small.delta = 0.05;
  big.delta = 0.3;
  small.sample_cap = big.sample_cap = 30;
  small.seed = big.seed = 7;
  const CfBoundPlan ps(train, units, small), pb(train, units, big);
  ASSERT_EQ(ps.pairs(), pb.pairs());
  const RankTable rt(train);
  for (std::size_t q = 0; q < ps.pairs(); ++q) {
    const std::size_t i = ps.unit(q);
    const int sp = 1 - units.group(i);
    const auto nb_small = rt.neighborhood(sp, rt.reference(sp, units.group(i), units.attrs(i)), small.delta);
    if (nb_small.empty()) continue;
    const auto a = ps.sample(q), b = pb.sample(q);
    std::vector<std::uint32_t> b_in_small;
    for (auto r : b)
      if (std::binary_search(nb_small.begin(), nb_small.end(), r)) b_in_small.push_back(r);
    // every big-sample row inside the small neighborhood is in the small sample
    EXPECT_TRUE(std::includes(a.begin(), a.end(), b_in_small.begin(), b_in_small.end()));
  }
}

TEST(CfBound, DeterministicAndBounded) {
  const auto train = ex1(2.0, 1000, 14), test = ex1(2.0, 300, 15);
  MetricConfig mc;
  mc.seed = 3;
  const auto ml = fit_ml(train);
  const double a = cf_bound(ml, train, test, mc), b = cf_bound(ml, train, test, mc);
  EXPECT_EQ(a, b);
  EXPECT_GT(a, 0.0);
  EXPECT_LE(a, 1.0);
}

TEST(CfBound, Validation) {
  const auto d = ex1(1.0, 100, 16);
  MetricConfig mc;
  mc.delta = 1.5;
  EXPECT_THROW(cf_bound(Linear{}, d, mc), DomainError);
  mc.delta = 0.05;
  mc.sample_cap = 0;
  EXPECT_THROW(cf_bound(Linear{}, d, mc), DomainError);
}
