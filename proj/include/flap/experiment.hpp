#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flap/ci_test.hpp"
#include "flap/csv.hpp"
#include "flap/metrics.hpp"
#include "flap/parallel.hpp"
#include "flap/pipeline.hpp"
#include "flap/schema.hpp"
#include "flap/scm.hpp"

// Figure and table reproduction: replication loops, tidy CSV output, summary
// tables, SVG plots rendered from the tidy CSV, and a manifest from which a
// run can be repeated byte for byte.
namespace flap::exp {

inline constexpr std::string_view kVersion = "1.0.0";

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids = {
      "fig2a",      "fig2b",        "fig3a",       "fig3b",           "fig4-ex1",
      "fig4-ex2",   "fig4-ex3",     "table-adult", "table-compas",    "table-delta-adult",
      "table-delta-compas"};
  return ids;
}

enum class Family { curve, power, table, delta };

inline Family family_of(std::string_view id) {
  if (id.starts_with("fig4")) return Family::power;
  if (id.starts_with("fig")) return Family::curve;
  if (id.starts_with("table-delta")) return Family::delta;
  return Family::table;
}

struct ExperimentConfig {
  std::string id;
  std::size_t n = 2000;       // training rows per replication (simulations)
  std::size_t test_n = 2000;  // test rows per replication (simulations)
  std::optional<int> replications;  // default depends on the family
  std::uint64_t seed = 1;
  std::vector<double> deltas = {0.025, 0.05, 0.1, 1.0};
  double delta = 0.05;
  std::size_t sample_cap = 50;
  std::vector<Method> methods{std::begin(kComparedMethods), std::end(kComparedMethods)};
  std::vector<std::size_t> power_ns = {200, 500};
  double alpha = 0.05;
  CfTest test = CfTest::logistic;
  PreprocessKind power_prep = PreprocessKind::marginal_mapping;
  int bootstrap = 199;
  std::string data_dir = "data";
  std::string schema_dir = "schemas";
  std::filesystem::path out_dir = "results";

  int reps() const {
    if (replications) return *replications;
    switch (family_of(id)) {
      case Family::curve: return 100;
      case Family::power: return 200;
      default: return 1;
    }
  }

  void validate() const {
    if (std::find(experiment_ids().begin(), experiment_ids().end(), id) == experiment_ids().end())
      throw ValueError("unknown experiment id '" + id + "'");
    if (reps() < 1) throw ValueError("replications must be at least 1");
    if (n < 2 || test_n < 1) throw ValueError("sample sizes are too small");
    if (methods.empty()) throw ValueError("method list is empty");
    for (double d : deltas)
      if (!(d >= 0 && d <= 1)) throw ValueError("every delta must lie in [0, 1]");
    if (power_ns.empty()) throw ValueError("power study needs at least one n");
  }

  // Everything that determines the outputs; the output directory is left out
  // so a manifest can be replayed elsewhere.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["n"] = n;
    j["test_n"] = test_n;
    j["replications"] = reps();
    j["seed"] = seed;
    j["deltas"] = deltas;
    j["delta"] = delta;
    j["sample_cap"] = sample_cap;
    std::vector<std::string> names;
    for (Method m : methods) names.emplace_back(method_name(m));
    j["methods"] = names;
    j["power_ns"] = power_ns;
    j["alpha"] = alpha;
    j["test"] = std::string(test_name(test));
    j["power_prep"] = std::string(kind_name(power_prep));
    j["bootstrap"] = bootstrap;
    j["data_dir"] = data_dir;
    j["schema_dir"] = schema_dir;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.id = j.at("id").get<std::string>();
    c.n = j.value("n", c.n);
    c.test_n = j.value("test_n", c.test_n);
    if (j.contains("replications")) c.replications = j.at("replications").get<int>();
    c.seed = j.value("seed", c.seed);
    c.deltas = j.value("deltas", c.deltas);
    c.delta = j.value("delta", c.delta);
    c.sample_cap = j.value("sample_cap", c.sample_cap);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    c.power_ns = j.value("power_ns", c.power_ns);
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("test")) c.test = parse_test(j.at("test").get<std::string>());
    if (j.contains("power_prep"))
      c.power_prep = j.at("power_prep").get<std::string>() == "orthogonalization"
                         ? PreprocessKind::orthogonalization
                         : PreprocessKind::marginal_mapping;
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.schema_dir = j.value("schema_dir", c.schema_dir);
    return c;
  }
};

// ---- grids -------------------------------------------------------------------

struct GridPoint {
  double x = 0.0;
  std::string label;
  scm::Params params;
};

struct Grid {
  std::string dataset;
  std::string x_name;
  std::vector<GridPoint> points;
};

inline std::string fmt(double v) { return csv::format_double(v); }

inline Grid curve_grid(std::string_view id) {
  Grid g;
  if (id == "fig2a") {
    g.dataset = "ex1";
    g.x_name = "sigma_a";
    for (int k = 0; k <= 6; ++k) {
      scm::Scm1Params p;
      p.sigma_a = (10 + 3 * k) / 10.0;
      g.points.push_back({p.sigma_a, "sigma_a=" + fmt(p.sigma_a), p});
    }
  } else if (id == "fig2b") {
    g.dataset = "ex3";
    g.x_name = "lambda";
    for (int k = 0; k <= 4; ++k) {
      scm::Scm3Params p;
      p.lambda = k / 5.0;
      g.points.push_back({p.lambda, "lambda=" + fmt(p.lambda), p});
    }
  } else if (id == "fig3a") {
    g.dataset = "ex2";
    g.x_name = "-lambda_a2";
    for (int k = 0; k <= 4; ++k) {
      scm::Scm2Params p;
      p.lambda_a1 = -k / 20.0;
      p.lambda_a2 = -k / 10.0;
      g.points.push_back({k / 10.0, "lambda_a=(" + fmt(p.lambda_a1) + "," + fmt(p.lambda_a2) + ")", p});
    }
  } else if (id == "fig3b") {
    g.dataset = "ex2";
    g.x_name = "-lambda_e2";
    for (int k = 0; k <= 4; ++k) {
      scm::Scm2Params p;
      p.lambda_e1 = -k / 10.0;
      p.lambda_e2 = -k / 5.0;
      g.points.push_back({k / 5.0, "lambda_e=(" + fmt(p.lambda_e1) + "," + fmt(p.lambda_e2) + ")", p});
    }
  } else {
    throw ValueError("'" + std::string(id) + "' is not a metric-curve experiment");
  }
  return g;
}

// Fair point first, then increasingly direct group effects on the decision.
inline Grid power_grid(std::string_view id) {
  Grid g;
  if (id == "fig4-ex1") {
    g.dataset = "ex1";
    g.x_name = "beta_s";
    for (int k = 0; k <= 4; ++k) {
      scm::Scm1Params p;
      p.sigma_a = 1.0;
      p.lambda_a = 0.0;
      p.beta_s = k / 5.0;
      g.points.push_back({p.beta_s, "beta_s=" + fmt(p.beta_s), p});
    }
  } else if (id == "fig4-ex2") {
    g.dataset = "ex2";
    g.x_name = "beta_1=beta_2";
    for (int k = 0; k <= 4; ++k) {
      scm::Scm2Params p;
      p.beta_1 = p.beta_2 = 7 * k / 20.0;
      g.points.push_back({p.beta_1, "beta_1=beta_2=" + fmt(p.beta_1), p});
    }
  } else if (id == "fig4-ex3") {
    g.dataset = "ex3";
    g.x_name = "beta_s";
    for (int k = 0; k <= 4; ++k) {
      scm::Scm3Params p;
      p.lambda = 0.0;
      p.beta_s = k / 5.0;
      g.points.push_back({p.beta_s, "beta_s=" + fmt(p.beta_s), p});
    }
  } else {
    throw ValueError("'" + std::string(id) + "' is not a power experiment");
  }
  return g;
}

// ---- tidy rows -----------------------------------------------------------------

struct TidyRow {
  std::string dataset;
  int replication = 0;
  double x = 0.0;
  std::size_t n = 0;
  std::string method;
  std::string metric;
  double value = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kTidyHeader =
    "experiment,dataset,replication,x,n,method,metric,value,delta,seed";

inline void write_tidy(const std::string& id, const std::vector<TidyRow>& rows, std::ostream& out) {
  out << kTidyHeader << '\n';
  for (const auto& r : rows)
    out << id << ',' << csv::quote(r.dataset) << ',' << r.replication << ',' << fmt(r.x) << ',' << r.n << ','
        << csv::quote(r.method) << ',' << r.metric << ',' << fmt(r.value) << ',' << fmt(r.delta) << ','
        << r.seed << '\n';
}

// ---- seeds ---------------------------------------------------------------------

// Replication r draws the same training and test units at every grid point.
struct ReplicationSeeds {
  std::uint64_t train, test, metric, draw;
};

inline ReplicationSeeds replication_seeds(std::uint64_t master, int r) {
  const auto rr = static_cast<std::uint64_t>(r);
  return {counter_hash(master, 0x7a, rr), counter_hash(master, 0x7e, rr), counter_hash(master, 0xcf, rr),
          counter_hash(master, 0xd4, rr)};
}

// ---- one evaluation: every method on one (train, test) pair --------------------

struct EvalSettings {
  std::vector<Method> methods;
  double delta = 0.05;
  std::size_t sample_cap = 50;
  std::uint64_t metric_seed = 0;
  std::uint64_t draw_seed = 0;
  // Simulations only: the test units' true counterfactuals give cf_true.
  const scm::Params* truth = nullptr;
  std::uint64_t truth_seed = 0;
};

inline std::vector<TidyRow> evaluate_methods(const Dataset& train, const Dataset& test, const EvalSettings& es,
                                             const TidyRow& base) {
  const auto prep_m = fit_marginal_mapping(train);
  MetricConfig mc;
  mc.delta = es.delta;
  mc.sample_cap = es.sample_cap;
  mc.seed = es.metric_seed;
  const CfBoundPlan plan(train, test, mc);
  std::vector<TidyRow> rows;
  for (Method m : es.methods) {
    const auto pred = fit_method(m, train);
    const auto acc = accuracy(pred, test, es.draw_seed);
    const std::pair<const char*, double> values[] = {
        {"cf_metric", cf_metric(pred, test, prep_m)},
        {"cf_bound", cf_bound(pred, train, test, plan)},
        {"accuracy", acc.thresholded},
        {"accuracy_drawn", acc.drawn},
    };
    for (const auto& [metric, value] : values) {
      TidyRow r = base;
      r.method = std::string(method_name(m));
      r.metric = metric;
      r.value = value;
      r.delta = es.delta;
      rows.push_back(r);
    }
    if (es.truth) {
      TidyRow r = base;
      r.method = std::string(method_name(m));
      r.metric = "cf_true";
      r.value = scm::true_cf_gap(pred, *es.truth, test.size(), es.truth_seed);
      r.delta = es.delta;
      rows.push_back(r);
    }
  }
  return rows;
}

// ---- families --------------------------------------------------------------------

inline std::vector<TidyRow> run_curves(const ExperimentConfig& cfg) {
  const Grid grid = curve_grid(cfg.id);
  const int reps = cfg.reps();
  const std::size_t jobs = grid.points.size() * static_cast<std::size_t>(reps);
  std::vector<std::vector<TidyRow>> out(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    const auto& pt = grid.points[job / static_cast<std::size_t>(reps)];
    const int r = static_cast<int>(job % static_cast<std::size_t>(reps));
    const auto seeds = replication_seeds(cfg.seed, r);
    const auto train = scm::simulate(pt.params, cfg.n, seeds.train).data;
    const auto test = scm::simulate(pt.params, cfg.test_n, seeds.test).data;
    TidyRow base;
    base.dataset = grid.dataset;
    base.replication = r;
    base.x = pt.x;
    base.n = cfg.n;
    base.seed = seeds.train;
    out[job] = evaluate_methods(
        train, test,
        {cfg.methods, cfg.delta, cfg.sample_cap, seeds.metric, seeds.draw, &pt.params, seeds.test}, base);
  });
  std::vector<TidyRow> rows;
  for (auto& v : out) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

inline std::vector<TidyRow> run_power(const ExperimentConfig& cfg, std::vector<PowerCell>* cells_out = nullptr) {
  const Grid grid = power_grid(cfg.id);
  PowerStudyGrid pg;
  pg.scm_id = grid.dataset;
  for (const auto& p : grid.points) pg.points.push_back({p.label, p.x, p.params});
  pg.sample_sizes = cfg.power_ns;
  pg.replications = cfg.reps();
  pg.alpha = cfg.alpha;
  pg.seed = cfg.seed;
  pg.bootstrap = cfg.bootstrap;
  const auto cells = power_study(pg, cfg.test, cfg.power_prep);
  std::vector<TidyRow> rows;
  for (const auto& c : cells) {
    TidyRow base;
    base.dataset = grid.dataset;
    base.x = c.x;
    base.n = c.n;
    base.method = c.test;
    TidyRow oracle = base;
    oracle.replication = 0;
    oracle.metric = "cf_metric_oracle";
    oracle.value = c.cf_metric;
    oracle.seed = cfg.seed;
    rows.push_back(oracle);
    for (std::size_t r = 0; r < c.p_values.size(); ++r) {
      TidyRow row = base;
      row.replication = static_cast<int>(r);
      row.seed = counter_hash(cfg.seed, 0x9091, r);
      row.metric = "p_value";
      row.value = c.p_values[r];
      rows.push_back(row);
      row.metric = "reject";
      row.value = c.p_values[r] < cfg.alpha ? 1.0 : 0.0;
      rows.push_back(row);
    }
  }
  if (cells_out) *cells_out = cells;
  return rows;
}

struct RealData {
  std::string name;
  Dataset train, test;
  IngestReport train_report, test_report;
};

// COMPAS is split at random (1697 test rows); adult ships its own test file.
inline RealData load_real(const std::string& name, const ExperimentConfig& cfg, std::uint64_t split_seed) {
  namespace fs = std::filesystem;
  const fs::path data(cfg.data_dir), schemas(cfg.schema_dir);
  RealData out;
  out.name = name;
  if (name == "compas") {
    const auto schema = DatasetSchema::load((schemas / "compas.schema").string());
    auto loaded = load_csv((data / "compas.csv").string(), schema);
    auto [train, test] = split(loaded.data, 1697, split_seed);
    out.train = std::move(train);
    out.test = std::move(test);
    out.train_report = loaded.report;
  } else if (name == "adult") {
    const auto schema = DatasetSchema::load((schemas / "adult.schema").string());
    auto tr = load_csv((data / "adult_train.csv").string(), schema);
    auto te = load_csv((data / "adult_test.csv").string(), schema, &tr.encoding);
    out.train = std::move(tr.data);
    out.test = std::move(te.data);
    out.train_report = tr.report;
    out.test_report = te.report;
  } else {
    throw ValueError("unknown dataset '" + name + "'");
  }
  return out;
}

inline std::string real_name(std::string_view id) {
  return id.ends_with("adult") ? "adult" : "compas";
}

inline std::vector<TidyRow> run_table(const ExperimentConfig& cfg) {
  const std::string name = real_name(cfg.id);
  std::vector<TidyRow> rows;
  for (int r = 0; r < cfg.reps(); ++r) {
    const auto seeds = replication_seeds(cfg.seed, r);
    const auto data = load_real(name, cfg, seeds.train);
    TidyRow base;
    base.dataset = name;
    base.replication = r;
    base.n = data.train.size();
    base.seed = seeds.train;
    auto part = evaluate_methods(data.train, data.test,
                                 {cfg.methods, cfg.delta, cfg.sample_cap, seeds.metric, seeds.draw}, base);
    rows.insert(rows.end(), part.begin(), part.end());
    // Group test of the recorded decisions themselves, on the training part.
    for (PreprocessKind k : {PreprocessKind::marginal_mapping, PreprocessKind::orthogonalization}) {
      const auto prep = k == PreprocessKind::marginal_mapping ? fit_marginal_mapping(data.train)
                                                             : fit_orthogonalization(data.train);
      const auto res = logistic_cf_test(data.train, prep);
      TidyRow t = base;
      t.method = "recorded-decisions";
      t.metric = std::string("lr_p_value_") + (k == PreprocessKind::marginal_mapping ? "M" : "O");
      t.value = res.p_value;
      t.delta = 0.0;
      rows.push_back(t);
    }
  }
  return rows;
}

inline std::vector<TidyRow> run_delta(const ExperimentConfig& cfg) {
  const std::string name = real_name(cfg.id);
  std::vector<TidyRow> rows;
  for (int r = 0; r < cfg.reps(); ++r) {
    const auto seeds = replication_seeds(cfg.seed, r);
    const auto data = load_real(name, cfg, seeds.train);
    std::vector<Predictor> preds;
    for (Method m : cfg.methods) preds.push_back(fit_method(m, data.train));
    for (double d : cfg.deltas) {
      MetricConfig mc;
      mc.delta = d;
      mc.sample_cap = cfg.sample_cap;
      mc.seed = seeds.metric;
      const CfBoundPlan plan(data.train, data.test, mc);
      for (std::size_t q = 0; q < preds.size(); ++q) {
        TidyRow row;
        row.dataset = name;
        row.replication = r;
        row.x = d;
        row.n = data.train.size();
        row.method = std::string(method_name(cfg.methods[q]));
        row.metric = "cf_bound";
        row.value = cf_bound(preds[q], data.train, data.test, plan);
        row.delta = d;
        row.seed = seeds.train;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline std::vector<TidyRow> run_rows(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (family_of(cfg.id)) {
    case Family::curve: return run_curves(cfg);
    case Family::power: return run_power(cfg);
    case Family::table: return run_table(cfg);
    case Family::delta: return run_delta(cfg);
  }
  return {};
}

// ---- summary and plots, derived from the tidy CSV only ----------------------------

struct SummaryRow {
  std::string dataset;
  double x = 0.0;
  std::size_t n = 0;
  std::string method, metric;
  double delta = 0.0;
  double mean = 0.0, sd = 0.0;
  std::size_t count = 0;
};

inline std::vector<SummaryRow> summarize(const csv::Table& tidy) {
  const auto col = [&](std::string_view name) {
    const auto it = std::find(tidy.header.begin(), tidy.header.end(), name);
    if (it == tidy.header.end()) throw SchemaError("tidy CSV lacks column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - tidy.header.begin());
  };
  const std::size_t c_ds = col("dataset"), c_x = col("x"), c_n = col("n"), c_m = col("method"),
                    c_metric = col("metric"), c_v = col("value"), c_d = col("delta");
  std::map<std::string, std::size_t> index;
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> values;
  for (const auto& row : tidy.rows) {
    const std::string key = row[c_ds] + '\x1f' + row[c_x] + '\x1f' + row[c_n] + '\x1f' + row[c_m] + '\x1f' +
                            row[c_metric] + '\x1f' + row[c_d];
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) {
      SummaryRow s;
      s.dataset = row[c_ds];
      csv::parse_double(row[c_x], s.x);
      s.n = static_cast<std::size_t>(std::stoull(row[c_n]));
      s.method = row[c_m];
      s.metric = row[c_metric];
      csv::parse_double(row[c_d], s.delta);
      out.push_back(s);
      values.emplace_back();
    }
    double v = 0.0;
    if (!csv::parse_double(row[c_v], v)) throw ValueError("bad value '" + row[c_v] + "' in tidy CSV");
    values[it->second].push_back(v);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    out[i].count = v.size();
    out[i].mean = compensated_mean(v);
    if (v.size() > 1) {
      CompensatedSum sq;
      for (double x : v) sq.add((x - out[i].mean) * (x - out[i].mean));
      out[i].sd = std::sqrt(sq.value() / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

inline void write_summary(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "dataset,x,n,method,metric,delta,mean,sd,count\n";
  for (const auto& r : rows)
    out << csv::quote(r.dataset) << ',' << fmt(r.x) << ',' << r.n << ',' << csv::quote(r.method) << ','
        << r.metric << ',' << fmt(r.delta) << ',' << fmt(r.mean) << ',' << fmt(r.sd) << ',' << r.count << '\n';
}

struct SeriesPoint {
  double x, y, err;
};

struct Series {
  std::string name;
  std::vector<SeriesPoint> points;
};

inline std::string svg_escape(std::string_view s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string tick(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// Line chart with +-err bars and a legend; fixed layout so output is stable.
inline std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<Series>& series) {
  static const char* colors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                 "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  const double w = 640, h = 420, left = 70, right = 170, top = 40, bottom = 60;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y - p.err);
      y1 = std::max(y1, p.y + p.err);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  y0 = std::min(y0, 0.0);
  if (y1 <= y0) y1 = y0 + 1;
  const double pw = w - left - right, ph = h - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    o << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << tick(xv)
      << "</text>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 15 << "\" text-anchor=\"middle\">" << svg_escape(xlabel)
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << top + ph / 2 << ")\">" << svg_escape(ylabel) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % std::size(colors)];
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : s.points) o << sx(p.x) << ',' << sy(p.y) << ' ';
    o << "\"/>\n";
    for (const auto& p : s.points) {
      if (p.err > 0)
        o << "<line x1=\"" << sx(p.x) << "\" y1=\"" << sy(p.y - p.err) << "\" x2=\"" << sx(p.x) << "\" y2=\""
          << sy(p.y + p.err) << "\" stroke=\"" << c << "\"/>\n";
      o << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"2.5\" fill=\"" << c << "\"/>\n";
    }
    const double ly = top + 14 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32 << "\" y2=\""
      << ly - 4 << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << svg_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// Writes summary.csv and the figure panels next to the tidy CSV. Returns the
// file names written.
inline std::vector<std::string> render_from_tidy(const std::filesystem::path& tidy_path,
                                                 const std::filesystem::path& out_dir, const std::string& id) {
  const auto tidy = csv::read_file(tidy_path.string());
  const auto summary = summarize(tidy);
  std::vector<std::string> written;
  {
    std::ofstream out(out_dir / "summary.csv");
    if (!out) throw IoError("cannot write summary into '" + out_dir.string() + "'");
    write_summary(summary, out);
    written.push_back("summary.csv");
  }
  auto emit = [&](const std::string& file, const std::string& svg) {
    std::ofstream out(out_dir / file);
    if (!out) throw IoError("cannot write '" + file + "'");
    out << svg;
    written.push_back(file);
  };
  const Family fam = family_of(id);
  if (fam == Family::curve) {
    const std::string xname = curve_grid(id).x_name;
    for (const char* metric : {"cf_metric", "cf_bound", "accuracy", "accuracy_drawn", "cf_true"}) {
      std::vector<Series> series;
      for (const auto& r : summary) {
        if (r.metric != metric) continue;
        auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == r.method; });
        if (it == series.end()) {
          series.push_back({r.method, {}});
          it = series.end() - 1;
        }
        it->points.push_back({r.x, r.mean, r.sd});
      }
      emit(id + "_" + metric + ".svg", line_chart_svg(id + ": " + metric, xname, metric, series));
    }
  } else if (fam == Family::power) {
    std::vector<Series> series;
    for (const auto& r : summary) {
      if (r.metric != "reject") continue;
      const auto oracle = std::find_if(summary.begin(), summary.end(), [&](const SummaryRow& o) {
        return o.metric == "cf_metric_oracle" && o.x == r.x && o.n == r.n;
      });
      const std::string name = "n=" + std::to_string(r.n);
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
      if (it == series.end()) {
        series.push_back({name, {}});
        it = series.end() - 1;
      }
      it->points.push_back({oracle == summary.end() ? r.x : oracle->mean, r.mean, 0.0});
    }
    emit(id + "_power.svg", line_chart_svg(id + ": rejection rate", "CF-metric of the generating rule", "power",
                                           series));
  } else if (fam == Family::delta) {
    std::vector<Series> series;
    for (const auto& r : summary) {
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == r.method; });
      if (it == series.end()) {
        series.push_back({r.method, {}});
        it = series.end() - 1;
      }
      it->points.push_back({r.x, r.mean, r.sd});
    }
    emit(id + "_cf_bound.svg", line_chart_svg(id + ": CF-bound", "delta", "cf_bound", series));
  }
  return written;
}

// FNV-1a over a file's bytes; recorded in the manifest so reruns can be
// compared without keeping old outputs around.
inline std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << h;
  return s.str();
}

struct RunResult {
  std::filesystem::path dir;
  std::vector<std::string> files;
  std::vector<TidyRow> rows;
};

inline nlohmann::ordered_json grid_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json g = nlohmann::ordered_json::array();
  const Family fam = family_of(cfg.id);
  if (fam == Family::curve || fam == Family::power) {
    const Grid grid = fam == Family::curve ? curve_grid(cfg.id) : power_grid(cfg.id);
    for (const auto& p : grid.points) g.push_back({{"x", p.x}, {"label", p.label}});
  }
  return g;
}

// Runs one experiment into cfg.out_dir / cfg.id.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  RunResult res;
  res.dir = cfg.out_dir / cfg.id;
  std::error_code ec;
  fs::create_directories(res.dir, ec);
  if (ec) throw IoError("cannot create output directory '" + res.dir.string() + "': " + ec.message());

  std::vector<PowerCell> cells;
  res.rows = family_of(cfg.id) == Family::power ? run_power(cfg, &cells) : run_rows(cfg);
  {
    std::ofstream out(res.dir / "tidy.csv");
    if (!out) throw IoError("cannot write into '" + res.dir.string() + "'");
    write_tidy(cfg.id, res.rows, out);
  }
  res.files.push_back("tidy.csv");
  if (!cells.empty()) {
    std::ofstream out(res.dir / "power.csv");
    out << "example,param_point,n,cf_metric,power,R,alpha,test,prep\n";
    for (const auto& c : cells)
      out << power_grid(cfg.id).dataset << ',' << csv::quote(c.label) << ',' << c.n << ',' << fmt(c.cf_metric)
          << ',' << fmt(c.power) << ',' << c.replications << ',' << fmt(c.alpha) << ',' << c.test << ','
          << c.prep << '\n';
    res.files.push_back("power.csv");
  }
  for (auto& f : render_from_tidy(res.dir / "tidy.csv", res.dir, cfg.id)) res.files.push_back(f);

  nlohmann::ordered_json m;
  m["experiment"] = cfg.id;
  m["version"] = kVersion;
  m["config"] = cfg.to_json();
  m["grid"] = grid_json(cfg);
  m["seed_scheme"] =
      "replication r: train/test/metric/draw seeds = counter_hash(seed, 0x7a/0x7e/0xcf/0xd4, r); power "
      "replication r: counter_hash(seed, 0x9091, r)";
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& f : res.files)
    files.push_back({{"file", f}, {"bytes", fs::file_size(res.dir / f)}, {"fnv1a64", file_digest(res.dir / f)}});
  m["outputs"] = files;
  {
    std::ofstream out(res.dir / "manifest.json");
    out << m.dump(2) << '\n';
  }
  res.files.push_back("manifest.json");
  return res;
}

inline ExperimentConfig config_from_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("config")) throw ValueError("'" + manifest.string() + "' is not a manifest");
  return ExperimentConfig::from_json(j.at("config"));
}

// ---- audit ---------------------------------------------------------------------------

struct AuditConfig {
  std::string dataset;
  std::string schema;
  PreprocessKind prep = PreprocessKind::marginal_mapping;
  CfTest test = CfTest::logistic;
  bool fit = false;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
  int bootstrap = 199;
  double delta = 0.05;
};

// Load, preprocess, test the recorded decisions; optionally fit FLAP on a
// training split and report its fairness metrics.
inline nlohmann::ordered_json audit(const AuditConfig& cfg) {
  const auto schema = DatasetSchema::load(cfg.schema);
  const auto loaded = load_csv(cfg.dataset, schema);
  const Dataset& data = loaded.data;
  const auto prep = cfg.prep == PreprocessKind::marginal_mapping ? fit_marginal_mapping(data)
                                                                 : fit_orthogonalization(data);
  const auto res = run_cf_test(cfg.test, data, prep, cfg.seed, cfg.bootstrap);
  nlohmann::ordered_json j;
  j["dataset"] = cfg.dataset;
  j["rows_read"] = loaded.report.rows_read;
  j["rows_dropped"] = loaded.report.rows_dropped;
  j["rows_filtered"] = loaded.report.rows_filtered;
  j["rows"] = data.size();
  std::vector<std::string> labels;
  for (int s = 0; s < data.group_count(); ++s) labels.push_back(data.groups().label(s));
  j["groups"] = labels;
  j["group_sizes"] = data.group_sizes();
  j["preprocessing"] = std::string(kind_name(cfg.prep));
  j["test"] = {{"method", res.method},
               {"statistic", res.statistic},
               {"p_value", res.p_value},
               {"df", res.df},
               {"bootstrap", res.bootstrap},
               {"permutation_fallback", res.permutation_fallback},
               {"ridge_fallback", res.ridge_fallback}};
  j["verdict"] = res.p_value < 0.05 ? "group signal remains given the processed attributes at the 5% level"
                                    : "no evidence against counterfactual fairness at the 5% level";
  if (cfg.fit) {
    const auto test_n = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(data.size())));
    auto [train, test] = split(data, std::max<std::size_t>(1, test_n), cfg.seed);
    const auto seeds = replication_seeds(cfg.seed, 0);
    const auto rows = evaluate_methods(train, test,
                                       {{Method::ml, Method::flap1_m, Method::flap2_m, Method::flap1_o, Method::flap2_o},
                                        cfg.delta, 50, seeds.metric, seeds.draw},
                                       TidyRow{});
    nlohmann::ordered_json methods = nlohmann::ordered_json::object();
    for (const auto& r : rows) methods[r.method][r.metric] = r.value;
    j["methods"] = methods;
  }
  return j;
}

}  // namespace flap::exp
