// flap: simulate, preprocess, fit, score, evaluate and test decision data, and
// reproduce the figure and table experiments.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 unreadable or unwritable file,
// 3 schema or ingestion error, 4 invalid value or failed fit/test, 5 bad flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flap/flap.hpp"

namespace {

using namespace flap;
using nlohmann::ordered_json;

PreprocessKind parse_kind(const std::string& s) {
  if (s == "M" || s == "marginal" || s == "marginal-mapping") return PreprocessKind::marginal_mapping;
  if (s == "O" || s == "orth" || s == "orthogonalization") return PreprocessKind::orthogonalization;
  throw ValueError("unknown preprocessing '" + s + "' (use M or O)");
}

Preprocessor fit_prep(PreprocessKind k, const Dataset& d) {
  return k == PreprocessKind::marginal_mapping ? fit_marginal_mapping(d) : fit_orthogonalization(d);
}

// --set key=value on the chosen example's parameter record.
void set_param(scm::Params& params, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValueError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  double v = 0.0;
  if (!csv::parse_double(assignment.substr(eq + 1), v)) throw ValueError("bad number in '" + assignment + "'");
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        std::map<std::string, double*> fields;
        if constexpr (std::is_same_v<P, scm::Scm1Params>)
          fields = {{"c1", &p.c1},         {"c2", &p.c2},         {"c3", &p.c3},
                    {"lambda_a", &p.lambda_a}, {"sigma_a", &p.sigma_a}, {"beta_0", &p.beta_0},
                    {"beta_a", &p.beta_a}, {"beta_s", &p.beta_s}, {"p_s", &p.p_s}};
        else if constexpr (std::is_same_v<P, scm::Scm2Params>)
          fields = {{"p0", &p.p0},           {"p1", &p.p1},           {"p2", &p.p2},
                    {"lambda_e0", &p.lambda_e0}, {"lambda_e1", &p.lambda_e1}, {"lambda_e2", &p.lambda_e2},
                    {"lambda_a0", &p.lambda_a0}, {"lambda_a1", &p.lambda_a1}, {"lambda_a2", &p.lambda_a2},
                    {"beta_0", &p.beta_0},   {"beta_1", &p.beta_1},   {"beta_2", &p.beta_2},
                    {"beta_a", &p.beta_a},   {"beta_e", &p.beta_e}};
        else
          fields = {{"lambda", &p.lambda}, {"beta_0", &p.beta_0}, {"beta_t", &p.beta_t}, {"beta_s", &p.beta_s}};
        const auto it = fields.find(key);
        if (it == fields.end()) throw ValueError("unknown parameter '" + key + "' for this example");
        *it->second = v;
      },
      params);
}

scm::Params example_params(const std::string& id) {
  if (id == "ex1") return scm::Scm1Params{};
  if (id == "ex2") return scm::Scm2Params{};
  if (id == "ex3") return scm::Scm3Params{};
  throw ValueError("unknown example '" + id + "' (use ex1, ex2 or ex3)");
}

LoadResult load(const std::string& data, const std::string& schema, const Encoding* ref = nullptr) {
  return load_csv(data, DatasetSchema::load(schema), ref);
}

void write_json(const ordered_json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot write '" + out + "'");
  f << j.dump(2) << '\n';
}

ordered_json result_json(const TestResult& r) {
  return {{"method", r.method},         {"statistic", r.statistic},
          {"p_value", r.p_value},       {"df", r.df},
          {"bandwidth", r.bandwidth},   {"bootstrap", r.bootstrap},
          {"permutation_fallback", r.permutation_fallback}, {"ridge_fallback", r.ridge_fallback}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactually fair decisions: preprocessing, learners, metrics and tests"};
  app.require_subcommand(1);
  app.footer("Worker threads: FLAP_WORKERS (default: hardware concurrency).");

  // simulate
  std::string sim_example = "ex1", sim_out, sim_exo;
  std::size_t sim_n = 2000;
  std::uint64_t sim_seed = 1;
  std::vector<std::string> sim_set;
  auto* sim = app.add_subcommand("simulate", "Draw a dataset from one of the three structural causal models");
  sim->add_option("--example", sim_example, "ex1, ex2 or ex3")->capture_default_str();
  sim->add_option("-n,--n", sim_n, "Number of units")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Seed")->capture_default_str();
  sim->add_option("--set", sim_set, "Parameter override key=value (repeatable)");
  sim->add_option("-o,--out", sim_out, "Output CSV; a matching .schema file is written next to it")->required();
  sim->add_option("--exogenous", sim_exo, "Also write the exogenous draws to this CSV");

  // preprocess
  std::string pre_data, pre_schema, pre_kind = "M", pre_out, pre_apply;
  auto* pre = app.add_subcommand("preprocess", "Fit a preprocessor and optionally write processed attributes");
  pre->add_option("--data", pre_data, "Training CSV")->required();
  pre->add_option("--schema", pre_schema, "Schema file")->required();
  pre->add_option("--kind", pre_kind, "M (marginal mapping) or O (orthogonalization)")->capture_default_str();
  pre->add_option("-o,--out", pre_out, "Fitted preprocessor file")->required();
  pre->add_option("--apply", pre_apply, "Write processed training attributes to this CSV");

  // fit
  std::string fit_data, fit_schema, fit_name = "FLAP-1(M)", fit_out;
  double fit_ridge = kDefaultRidge;
  auto* fit = app.add_subcommand("fit", "Fit one method and save it as a model directory");
  fit->add_option("--data", fit_data, "Training CSV")->required();
  fit->add_option("--schema", fit_schema, "Schema file")->required();
  fit->add_option("--method", fit_name, "ML, FTU, AML, FL-lite, AA, FLAP-1(O), FLAP-2(O), FLAP-1(M), FLAP-2(M)")
      ->capture_default_str();
  fit->add_option("--ridge", fit_ridge, "Ridge penalty")->capture_default_str();
  fit->add_option("-o,--out", fit_out, "Model directory")->required();

  // score
  std::string sc_model, sc_data, sc_schema, sc_train, sc_out;
  std::uint64_t sc_seed = 1;
  auto* sc = app.add_subcommand("score", "Score rows and draw Bernoulli decisions");
  sc->add_option("--model", sc_model, "Model directory")->required();
  sc->add_option("--data", sc_data, "CSV to score")->required();
  sc->add_option("--schema", sc_schema, "Schema file")->required();
  sc->add_option("--train", sc_train, "Training CSV, fixes the categorical encoding (recommended)");
  sc->add_option("--seed", sc_seed, "Decision seed")->capture_default_str();
  sc->add_option("-o,--out", sc_out, "Output CSV (row,group,score,decision)")->required();

  // metrics
  std::string me_model, me_train, me_test, me_schema, me_out;
  MetricConfig me_cfg;
  auto* me = app.add_subcommand("metrics", "Accuracy, CF-metric and CF-bound of a saved model");
  me->add_option("--model", me_model, "Model directory")->required();
  me->add_option("--train", me_train, "Training CSV")->required();
  me->add_option("--test", me_test, "Test CSV")->required();
  me->add_option("--schema", me_schema, "Schema file")->required();
  me->add_option("--delta", me_cfg.delta, "CF-bound window")->capture_default_str();
  me->add_option("--cap", me_cfg.sample_cap, "Peers averaged per unit and group")->capture_default_str();
  me->add_option("--seed", me_cfg.seed, "Sampling seed")->capture_default_str();
  me->add_option("-o,--out", me_out, "Report JSON (default stdout)");

  // test
  std::string te_data, te_schema, te_kind = "M", te_test = "logistic", te_out;
  int te_boot = 199;
  std::uint64_t te_seed = 1;
  auto* te = app.add_subcommand("test", "Test recorded decisions for counterfactual fairness");
  te->add_option("--data", te_data, "CSV with recorded decisions")->required();
  te->add_option("--schema", te_schema, "Schema file")->required();
  te->add_option("--prep", te_kind, "M or O")->capture_default_str();
  te->add_option("--test", te_test, "logistic or kernel")->capture_default_str();
  te->add_option("--bootstrap", te_boot, "Kernel test bootstrap draws")->capture_default_str();
  te->add_option("--seed", te_seed, "Kernel test seed")->capture_default_str();
  te->add_option("-o,--out", te_out, "Result JSON (default stdout)");

  // reproduce
  std::string rp_id, rp_config, rp_manifest, rp_out = "results", rp_data, rp_schemas, rp_test;
  std::optional<std::size_t> rp_n, rp_test_n;
  std::optional<int> rp_reps, rp_boot;
  std::optional<std::uint64_t> rp_seed;
  std::vector<std::string> rp_methods;
  std::vector<double> rp_deltas;
  std::vector<std::size_t> rp_ns;
  auto* rp = app.add_subcommand("reproduce", "Run one figure or table experiment");
  rp->add_option("id", rp_id, "fig2a fig2b fig3a fig3b fig4-ex1 fig4-ex2 fig4-ex3 table-adult table-compas "
                              "table-delta-adult table-delta-compas");
  rp->add_option("--config", rp_config, "JSON config; flags override it");
  rp->add_option("--manifest", rp_manifest, "Replay the config recorded in a manifest.json");
  rp->add_option("-o,--out", rp_out, "Output root; files go to <out>/<id>/")->capture_default_str();
  rp->add_option("-n,--n", rp_n, "Training rows per replication");
  rp->add_option("--test-n", rp_test_n, "Test rows per replication");
  rp->add_option("-R,--replications", rp_reps, "Replications");
  rp->add_option("--seed", rp_seed, "Master seed");
  rp->add_option("--methods", rp_methods, "Method list");
  rp->add_option("--deltas", rp_deltas, "CF-bound windows for the delta tables");
  rp->add_option("--power-ns", rp_ns, "Sample sizes of the power study");
  rp->add_option("--test", rp_test, "Power-study test: logistic or kernel");
  rp->add_option("--bootstrap", rp_boot, "Kernel test bootstrap draws");
  rp->add_option("--data-dir", rp_data, "Directory with compas.csv, adult_train.csv, adult_test.csv");
  rp->add_option("--schema-dir", rp_schemas, "Directory with compas.schema and adult.schema");

  // audit
  exp::AuditConfig au;
  std::string au_kind = "M", au_test = "logistic", au_out = "fairness_report.json";
  auto* aud = app.add_subcommand("audit", "Load, preprocess, test, and optionally fit FLAP; writes a report");
  aud->add_option("--data", au.dataset, "CSV with recorded decisions")->required();
  aud->add_option("--schema", au.schema, "Schema file")->required();
  aud->add_option("--prep", au_kind, "M or O")->capture_default_str();
  aud->add_option("--test", au_test, "logistic or kernel")->capture_default_str();
  aud->add_flag("--fit", au.fit, "Also fit FLAP on a training split and report its metrics");
  aud->add_option("--test-fraction", au.test_fraction, "Held-out share when fitting")->capture_default_str();
  aud->add_option("--seed", au.seed, "Seed")->capture_default_str();
  aud->add_option("--bootstrap", au.bootstrap, "Kernel test bootstrap draws")->capture_default_str();
  aud->add_option("-o,--out", au_out, "Report file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 5;
  }

  try {
    if (*sim) {
      auto params = example_params(sim_example);
      for (const auto& s : sim_set) set_param(params, s);
      const auto result = scm::simulate(params, sim_n, sim_seed);
      write_csv(result.data, sim_out);
      std::ofstream schema(sim_out + ".schema");
      if (!schema) throw IoError("cannot write '" + sim_out + ".schema'");
      schema << native_schema(result.data).to_text();
      if (!sim_exo.empty()) scm::write_exogenous_csv(result.exogenous, sim_exo);
      std::cerr << "wrote " << result.data.size() << " rows to " << sim_out << '\n';
    } else if (*pre) {
      const auto d = load(pre_data, pre_schema).data;
      const auto p = fit_prep(parse_kind(pre_kind), d);
      p.save(pre_out);
      if (!pre_apply.empty()) write_csv(d.with_attributes(p.apply_all(d)), pre_apply);
    } else if (*fit) {
      const auto d = load(fit_data, fit_schema).data;
      save_model(fit_method(parse_method(fit_name), d, fit_ridge), fit_out);
    } else if (*sc) {
      const auto schema = DatasetSchema::load(sc_schema);
      std::optional<LoadResult> train;
      if (!sc_train.empty()) train = load_csv(sc_train, schema);
      const auto d = load_csv(sc_data, schema, train ? &train->encoding : nullptr).data;
      const auto model = load_model(sc_model);
      std::ofstream out(sc_out);
      if (!out) throw IoError("cannot write '" + sc_out + "'");
      out << "row,group,score,decision\n";
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double p = model.score(d.group(i), d.attrs(i));
        out << i << ',' << csv::quote(d.groups().label(d.group(i))) << ',' << csv::format_double(p) << ','
            << (counter_uniform(sc_seed, 0xdec1, i) < p) << '\n';
      }
    } else if (*me) {
      me_cfg.validate();
      const auto schema = DatasetSchema::load(me_schema);
      const auto train = load_csv(me_train, schema);
      const auto test = load_csv(me_test, schema, &train.encoding).data;
      const auto model = load_model(me_model);
      const auto acc = accuracy(model, test, me_cfg.seed);
      ordered_json j;
      j["method"] = std::string(method_name(model.method));
      j["accuracy"] = acc.thresholded;
      j["accuracy_drawn"] = acc.drawn;
      j["cf_metric"] = cf_metric(model, test, fit_marginal_mapping(train.data));
      j["cf_bound"] = cf_bound(model, train.data, test, me_cfg);
      j["delta"] = me_cfg.delta;
      write_json(j, me_out);
    } else if (*te) {
      const auto d = load(te_data, te_schema).data;
      const auto res = run_cf_test(parse_test(te_test), d, fit_prep(parse_kind(te_kind), d), te_seed, te_boot);
      write_json(result_json(res), te_out);
    } else if (*rp) {
      exp::ExperimentConfig cfg;
      if (!rp_manifest.empty()) {
        cfg = exp::config_from_manifest(rp_manifest);
      } else if (!rp_config.empty()) {
        std::ifstream in(rp_config);
        if (!in) throw IoError("cannot open config '" + rp_config + "'");
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ValueError("'" + rp_config + "' is not valid JSON");
        auto jj = j;
        if (!rp_id.empty()) jj["id"] = rp_id;
        cfg = exp::ExperimentConfig::from_json(jj);
      } else {
        if (rp_id.empty()) throw ValueError("reproduce needs an experiment id, --config or --manifest");
        cfg.id = rp_id;
      }
      if (!rp_id.empty()) cfg.id = rp_id;
      cfg.out_dir = rp_out;
      if (rp_n) cfg.n = *rp_n;
      if (rp_test_n) cfg.test_n = *rp_test_n;
      if (rp_reps) cfg.replications = *rp_reps;
      if (rp_seed) cfg.seed = *rp_seed;
      if (rp_boot) cfg.bootstrap = *rp_boot;
      if (!rp_methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : rp_methods) cfg.methods.push_back(parse_method(m));
      }
      if (!rp_deltas.empty()) cfg.deltas = rp_deltas;
      if (!rp_ns.empty()) cfg.power_ns = rp_ns;
      if (!rp_test.empty()) cfg.test = parse_test(rp_test);
      if (!rp_data.empty()) cfg.data_dir = rp_data;
      if (!rp_schemas.empty()) cfg.schema_dir = rp_schemas;
      const auto res = exp::run_experiment(cfg);
      for (const auto& f : res.files) std::cout << (res.dir / f).string() << '\n';
    } else if (*aud) {
      au.prep = parse_kind(au_kind);
      au.test = parse_test(au_test);
      write_json(exp::audit(au), au_out);
      std::cerr << "wrote " << au_out << '\n';
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const EmptyGroupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
