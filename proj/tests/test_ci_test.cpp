#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace flap;
using flap::testing::make_dataset;

namespace {

scm::Scm1Params fair_ex1() {
  scm::Scm1Params p;
  p.sigma_a = 1.0;
  p.lambda_a = 0.0;
  p.beta_s = 0.0;
  return p;
}

double rejection_rate(const std::vector<double>& p, double alpha) {
  return static_cast<double>(std::count_if(p.begin(), p.end(), [&](double v) { return v < alpha; })) /
         static_cast<double>(p.size());
}

}  // namespace

TEST(LogisticTest, DecisionEqualToGroup) {
  const auto sim = scm::simulate(scm::Scm1Params{}, 500, 1).data;
  std::vector<int> y(sim.group_ids().begin(), sim.group_ids().end());
  const auto yd = make_dataset(2, 1, y, {sim.attribute_data().begin(), sim.attribute_data().end()}, y);
  const auto r = logistic_cf_test(yd, fit_marginal_mapping(yd));
  EXPECT_LT(r.p_value, 1e-6);
  EXPECT_TRUE(r.ridge_fallback || r.statistic > 100);
}

TEST(LogisticTest, SingleGroupIsError) {
  const auto d = make_dataset(1, 1, {0, 0, 0, 0}, {1, 2, 3, 4}, {0, 1, 0, 1});
  EXPECT_THROW(logistic_cf_test(d, fit_marginal_mapping(d)), TestError);
}

TEST(LogisticTest, NullRejectionRate) {
  std::vector<double> p;
  for (int r = 0; r < 1000; ++r) {
    const auto d = scm::simulate(fair_ex1(), 2000, counter_hash(1, 2, r)).data;
    p.push_back(logistic_cf_test(d, fit_marginal_mapping(d)).p_value);
  }
  const double rate = rejection_rate(p, 0.05);
  EXPECT_GE(rate, 0.03);
  EXPECT_LE(rate, 0.07);
}

TEST(LogisticTest, OrthogonalizationRoundTrip) {
  // fair under location shift only: tested given the orthogonalized attributes
  std::vector<double> fair, unfair;
  for (int r = 0; r < 200; ++r) {
    const auto d = scm::simulate(fair_ex1(), 1000, counter_hash(3, 4, r)).data;
    fair.push_back(logistic_cf_test(d, fit_orthogonalization(d)).p_value);
    scm::Scm1Params q = fair_ex1();
    q.beta_s = 1.0;
    const auto e = scm::simulate(q, 1000, counter_hash(3, 5, r)).data;
    unfair.push_back(logistic_cf_test(e, fit_orthogonalization(e)).p_value);
  }
  EXPECT_LE(rejection_rate(fair, 0.05), 0.1);
  EXPECT_GE(rejection_rate(unfair, 0.05), 0.95);
}

TEST(LogisticTest, PValueFallsAsStatisticGrows) {
  std::vector<std::pair<double, double>> sp;
  for (double beta : {0.0, 0.3, 0.6, 1.0}) {
    scm::Scm1Params q = fair_ex1();
    q.beta_s = beta;
    const auto d = scm::simulate(q, 800, 6).data;
    const auto r = logistic_cf_test(d, fit_marginal_mapping(d));
    sp.emplace_back(r.statistic, r.p_value);
  }
  std::sort(sp.begin(), sp.end());
  for (std::size_t i = 1; i < sp.size(); ++i) EXPECT_LE(sp[i].second, sp[i - 1].second);
}

TEST(KernelTest, DecisionEqualToGroup) {
  const std::size_t n = 200;
  std::vector<int> s(n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = counter_uniform(7, 1, i) < 0.5;
    z[i] = counter_normal(7, 2, i);
  }
  KernelTestConfig cfg;
  cfg.bootstrap = 199;
  cfg.seed = 3;
  const auto r = kernel_ci_test(s, s, z, 1, cfg);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0 / 200.0);
  EXPECT_EQ(r.bootstrap, 199);
}

TEST(KernelTest, NullCalibration) {
  const std::size_t n = 200;
  std::vector<double> p;
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<int> y(n), s(n);
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = counter_uniform(8, 3 * rep, i) < 0.5;
      s[i] = counter_uniform(8, 3 * rep + 1, i) < 0.5;
      z[i] = counter_normal(8, 3 * rep + 2, i);
    }
    KernelTestConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(rep);
    p.push_back(kernel_ci_test(y, s, z, 1, cfg).p_value);
  }
  const double rate = rejection_rate(p, 0.05);
  EXPECT_GE(rate, 0.03);
  EXPECT_LE(rate, 0.08);
}

TEST(KernelTest, ConstantAttributesFallBackToPermutation) {
  const std::size_t n = 150;
  std::vector<int> y(n), s(n);
  std::vector<double> z(n, 2.5);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = counter_uniform(9, 1, i) < 0.5;
    s[i] = counter_uniform(9, 2, i) < 0.5;
  }
  const auto r = kernel_ci_test(y, s, z, 1, {});
  EXPECT_TRUE(r.permutation_fallback);
  EXPECT_GT(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
}

TEST(KernelTest, Validation) {
  std::vector<int> y{0, 1, 0}, s{0, 1, 1};
  std::vector<double> z{1, 2, 3};
  KernelTestConfig cfg;
  cfg.bootstrap = 10;
  EXPECT_THROW(kernel_ci_test(y, s, z, 1, cfg), DomainError);
  EXPECT_THROW(kernel_ci_test(y, s, std::vector<double>{1, 2}, 1, {}), DomainError);
}

TEST(KernelTest, Deterministic) {
  const auto d = scm::simulate(scm::Scm1Params{}, 300, 10).data;
  const auto prep = fit_marginal_mapping(d);
  EXPECT_EQ(run_cf_test(CfTest::kernel, d, prep, 4).p_value, run_cf_test(CfTest::kernel, d, prep, 4).p_value);
}

TEST(PowerStudy, SmokeCellAndMonotoneGrid) {
  PowerStudyGrid g;
  g.scm_id = "ex1";
  for (double beta : {0.0, 0.5, 1.0}) {
    scm::Scm1Params q = fair_ex1();
    q.beta_s = beta;
    g.points.push_back({"beta_s=" + csv::format_double(beta), beta, q});
  }
  g.sample_sizes = {500};
  g.replications = 1;
  g.oracle_n = 2000;
  const auto smoke = power_study(g, CfTest::logistic, PreprocessKind::marginal_mapping);
  ASSERT_EQ(smoke.size(), 3u);
  for (const auto& c : smoke) EXPECT_TRUE(c.power == 0.0 || c.power == 1.0);
  EXPECT_EQ(smoke[0].cf_metric, 0.0);

  g.replications = 100;
  const auto cells = power_study(g, CfTest::logistic, PreprocessKind::marginal_mapping);
  EXPECT_LT(cells[0].power, 0.12);
  EXPECT_LT(cells[0].power, cells[1].power);
  EXPECT_LT(cells[1].power, cells[2].power);
  EXPECT_EQ(cells[2].p_values.size(), 100u);
}

TEST(PowerStudy, PowerGrowsWithN) {
  PowerStudyGrid g;
  scm::Scm1Params q = fair_ex1();
  q.beta_s = 0.4;
  g.points.push_back({"beta_s=0.4", 0.4, q});
  g.sample_sizes = {200, 1000};
  g.replications = 100;
  g.oracle_n = 1000;
  const auto cells = power_study(g, CfTest::logistic, PreprocessKind::marginal_mapping);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_LE(cells[0].power, cells[1].power);
}

TEST(Tests, NamesParse) {
  EXPECT_EQ(parse_test("logistic"), CfTest::logistic);
  EXPECT_EQ(parse_test("kernel"), CfTest::kernel);
  EXPECT_THROW(parse_test("chi"), ValueError);
}
