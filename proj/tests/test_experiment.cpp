#include <gtest/gtest.h>

#include <json.hpp>
#include <set>

#include "test_util.hpp"

using namespace flap;
using flap::testing::read_text;
using flap::testing::scratch_dir;

namespace {

exp::ExperimentConfig small(const std::string& id, const std::filesystem::path& out) {
  exp::ExperimentConfig c;
  c.id = id;
  c.n = 300;
  c.test_n = 300;
  c.replications = 2;
  c.seed = 17;
  c.methods = {Method::ml, Method::aa, Method::flap1_m};
  c.out_dir = out;
  c.data_dir = std::string(FLAP_SOURCE_DIR) + "/data";
  c.schema_dir = std::string(FLAP_SOURCE_DIR) + "/schemas";
  return c;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = small("fig3b", "x");
  c.test = CfTest::kernel;
  c.deltas = {0.1, 0.5};
  c.power_prep = PreprocessKind::orthogonalization;
  const auto back = exp::ExperimentConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
}

TEST(Config, Validation) {
  auto c = small("fig9", "x");
  EXPECT_THROW(c.validate(), ValueError);
  c.id = "fig2a";
  c.replications = 0;
  EXPECT_THROW(c.validate(), ValueError);
  c.replications = 1;
  c.deltas = {2.0};
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(Config, FamilyDefaults) {
  exp::ExperimentConfig c;
  c.id = "fig2b";
  EXPECT_EQ(c.reps(), 100);
  c.id = "fig4-ex2";
  EXPECT_EQ(c.reps(), 200);
  c.id = "table-compas";
  EXPECT_EQ(c.reps(), 1);
}

TEST(Grids, ShapesAndLabels) {
  for (const auto& id : {"fig2a", "fig2b", "fig3a", "fig3b"}) {
    const auto g = exp::curve_grid(id);
    EXPECT_EQ(g.points.size(), std::string(id) == "fig2a" ? 7u : 5u) << id;
    for (const auto& p : g.points) EXPECT_EQ(p.label.find("0000000"), std::string::npos) << p.label;
  }
  EXPECT_DOUBLE_EQ(exp::curve_grid("fig2a").points.back().x, 2.8);
  for (const auto& id : {"fig4-ex1", "fig4-ex2", "fig4-ex3"}) {
    const auto g = exp::power_grid(id);
    ASSERT_FALSE(g.points.empty());
    EXPECT_EQ(g.points.front().x, 0.0) << id;
  }
}

TEST(Run, CurveOutputsAreByteIdenticalOnRerun) {
  const auto dir = scratch_dir("exp_curve");
  const auto a = exp::run_experiment(small("fig2a", dir / "a"));
  const auto b = exp::run_experiment(small("fig2a", dir / "b"));
  ASSERT_EQ(a.files, b.files);
  for (const auto& f : a.files) EXPECT_EQ(read_text(a.dir / f), read_text(b.dir / f)) << f;

  // 7 grid points x 2 replications x 3 methods, 5 metrics each
  EXPECT_EQ(a.rows.size(), 7u * 2 * 3 * 5);
  std::set<std::string> metrics;
  for (const auto& r : a.rows) metrics.insert(r.metric);
  EXPECT_EQ(metrics, (std::set<std::string>{"accuracy", "accuracy_drawn", "cf_bound", "cf_metric", "cf_true"}));
  EXPECT_TRUE(std::filesystem::exists(a.dir / "fig2a_cf_metric.svg"));
  EXPECT_EQ(read_text(a.dir / "tidy.csv").substr(0, exp::kTidyHeader.size()), exp::kTidyHeader);
}

TEST(Run, ManifestReplaysTheRun) {
  const auto dir = scratch_dir("exp_manifest");
  const auto a = exp::run_experiment(small("fig3a", dir / "a"));
  auto cfg = exp::config_from_manifest(a.dir / "manifest.json");
  cfg.out_dir = dir / "b";
  const auto b = exp::run_experiment(cfg);
  EXPECT_EQ(read_text(a.dir / "tidy.csv"), read_text(b.dir / "tidy.csv"));
  EXPECT_EQ(read_text(a.dir / "manifest.json"), read_text(b.dir / "manifest.json"));

  const auto m = nlohmann::json::parse(read_text(a.dir / "manifest.json"));
  for (const auto& f : m.at("outputs"))
    EXPECT_EQ(f.at("fnv1a64").get<std::string>(), exp::file_digest(a.dir / f.at("file").get<std::string>()));
}

TEST(Run, SummaryAndPlotsRegenerateFromTidyCsv) {
  const auto dir = scratch_dir("exp_render");
  const auto a = exp::run_experiment(small("fig2b", dir / "a"));
  std::filesystem::create_directories(dir / "re");
  const auto written = exp::render_from_tidy(a.dir / "tidy.csv", dir / "re", "fig2b");
  ASSERT_FALSE(written.empty());
  for (const auto& f : written) EXPECT_EQ(read_text(a.dir / f), read_text(dir / "re" / f)) << f;
}

TEST(Run, SummaryMeans) {
  csv::Table t;
  t.header = {"experiment", "dataset", "replication", "x", "n", "method", "metric", "value", "delta", "seed"};
  t.rows = {{"fig2a", "ex1", "0", "1", "10", "ML", "cf_metric", "0.2", "0.05", "1"},
            {"fig2a", "ex1", "1", "1", "10", "ML", "cf_metric", "0.4", "0.05", "2"}};
  const auto s = exp::summarize(t);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s[0].mean, 0.3, 1e-15);
  EXPECT_EQ(s[0].count, 2u);
  EXPECT_GT(s[0].sd, 0.0);
}

TEST(Run, PowerWritesPowerTable) {
  const auto dir = scratch_dir("exp_power");
  auto c = small("fig4-ex3", dir);
  c.replications = 3;
  c.power_ns = {100};
  const auto r = exp::run_experiment(c);
  const auto power = read_text(r.dir / "power.csv");
  EXPECT_EQ(power.substr(0, power.find('\n')), "example,param_point,n,cf_metric,power,R,alpha,test,prep");
  EXPECT_TRUE(std::filesystem::exists(r.dir / "fig4-ex3_power.svg"));
}

TEST(Run, CompasTableAndDeltaTable) {
  const auto dir = scratch_dir("exp_compas");
  auto c = small("table-compas", dir);
  c.replications = 1;
  const auto t = exp::run_experiment(c);
  std::set<std::string> methods;
  for (const auto& r : t.rows) methods.insert(r.method);
  EXPECT_TRUE(methods.count("FLAP-1(M)"));

  c.id = "table-delta-compas";
  c.deltas = {0.05, 1.0};
  const auto d = exp::run_experiment(c);
  std::size_t bounds = 0;
  for (const auto& r : d.rows) bounds += r.metric == "cf_bound";
  EXPECT_EQ(bounds, 2u * 3u);
}

TEST(Run, UnknownIdThrowsBeforeWriting) {
  const auto dir = scratch_dir("exp_unknown");
  EXPECT_THROW(exp::run_experiment(small("fig5", dir)), ValueError);
  EXPECT_FALSE(std::filesystem::exists(dir / "fig5"));
}

TEST(Audit, SimulatedExports) {
  const auto dir = scratch_dir("audit");
  scm::Scm1Params fair;
  fair.sigma_a = 1.0;
  fair.lambda_a = 0.0;
  fair.beta_s = 0.0;
  scm::Scm1Params unfair = fair;
  unfair.beta_s = 1.0;
  const auto f = scm::simulate(fair, 5000, 3).data, u = scm::simulate(unfair, 5000, 3).data;
  write_csv(f, (dir / "fair.csv").string());
  write_csv(u, (dir / "unfair.csv").string());
  flap::testing::write_text(dir / "s.schema", native_schema(f).to_text());

  exp::AuditConfig cfg;
  cfg.schema = (dir / "s.schema").string();
  cfg.dataset = (dir / "unfair.csv").string();
  const auto ru = exp::audit(cfg);
  EXPECT_LT(ru.at("test").at("p_value").get<double>(), 0.001);
  cfg.dataset = (dir / "fair.csv").string();
  cfg.fit = true;
  const auto rf = exp::audit(cfg);
  EXPECT_EQ(rf.at("rows").get<std::size_t>(), 5000u);
  EXPECT_TRUE(rf.at("methods").contains("FLAP-1(M)"));
  EXPECT_TRUE(rf.at("methods").at("FLAP-1(M)").contains("cf_metric"));

  cfg.schema = (dir / "missing.schema").string();
  EXPECT_THROW(exp::audit(cfg), IoError);
}
