#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flap/csv.hpp"
#include "flap/predictors.hpp"
#include "flap/preprocess.hpp"
#include "flap/rng.hpp"

namespace flap {

// Learn on preprocessed attributes a' = P(s, a) only, score new points at
// P(s, a), draw decisions Bernoulli(score).
struct FlapModel {
  Preprocessor prep;
  LearnerKind learner = LearnerKind::aml;  // aml -> FLAP-1, ftu -> FLAP-2
  LogisticModel model;
  std::vector<double> group_probs;

  double score(int s, std::span<const double> a) const {
    const auto x = prep.apply(s, a);
    return learner == LearnerKind::aml ? predict_aml(model, group_probs, x)
                                       : predict_ftu(model, x);
  }

  Method method() const {
    const bool orth = prep.kind() == PreprocessKind::orthogonalization;
    if (learner == LearnerKind::aml) return orth ? Method::flap1_o : Method::flap1_m;
    return orth ? Method::flap2_o : Method::flap2_m;
  }
};

struct DecisionDraw {
  double score = 0.0;
  int decision = 0;
  std::uint64_t stream = 0;
};

inline FlapModel flap_fit(const Dataset& train, PreprocessKind procedure, LearnerKind learner,
                          double ridge = kDefaultRidge) {
  if (learner == LearnerKind::ml)
    throw KindError("FLAP learners must not take the sensitive attribute as input");
  FlapModel m;
  m.prep = procedure == PreprocessKind::orthogonalization ? fit_orthogonalization(train)
                                                          : fit_marginal_mapping(train);
  m.learner = learner;
  m.group_probs = train.group_probabilities();
  const auto processed = m.prep.apply_all(train);
  const Design design = learner == LearnerKind::ftu
                            ? Design::attributes_only(train.dim())
                            : Design::with_groups(train.group_count(), train.dim());
  m.model = fit_logistic(design, train, processed, ridge);
  return m;
}

inline double flap_score(const FlapModel& m, int s, std::span<const double> a) {
  return m.score(s, a);
}

// Decision 1{U < score} with U the `unit`-th draw of stream `seed`.
inline DecisionDraw flap_decide(const FlapModel& m, int s, std::span<const double> a,
                                std::uint64_t seed, std::uint64_t unit) {
  DecisionDraw d;
  d.score = m.score(s, a);
  d.stream = unit;
  d.decision = counter_uniform(seed, 0xdec1, unit) < d.score;
  return d;
}

inline Predictor to_predictor(const FlapModel& m) {
  Predictor p;
  p.method = m.method();
  p.input = m.prep;
  p.learner = m.learner;
  p.model = m.model;
  p.group_probs = m.group_probs;
  return p;
}

inline Predictor fit_method(Method method, const Dataset& train, double ridge = kDefaultRidge) {
  switch (method) {
    case Method::ml: return fit_ml(train, ridge);
    case Method::ftu: return fit_ftu(train, ridge);
    case Method::aml: return fit_aml(train, ridge);
    case Method::fl: return fit_fl(train, ridge);
    case Method::aa: return fit_aa(train, ridge);
    case Method::flap1_o:
      return to_predictor(flap_fit(train, PreprocessKind::orthogonalization, LearnerKind::aml, ridge));
    case Method::flap2_o:
      return to_predictor(flap_fit(train, PreprocessKind::orthogonalization, LearnerKind::ftu, ridge));
    case Method::flap1_m:
      return to_predictor(flap_fit(train, PreprocessKind::marginal_mapping, LearnerKind::aml, ridge));
    case Method::flap2_m:
      return to_predictor(flap_fit(train, PreprocessKind::marginal_mapping, LearnerKind::ftu, ridge));
  }
  throw ValueError("unknown method");
}

// ---- model directory: model.txt (+ preprocessor.txt) + manifest.json -------

namespace detail {

inline void write_row(std::ostream& out, std::string_view key, std::span<const double> xs) {
  out << key;
  for (double x : xs) out << ' ' << csv::format_double(x);
  out << '\n';
}

inline std::vector<double> read_row(std::istream& in) {
  std::vector<double> out;
  std::string v;
  while (in >> v) {
    double x;
    if (!csv::parse_double(v, x)) throw ValueError("bad number '" + v + "' in model file");
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

inline void save_model(const Predictor& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "model.txt");
  if (!out) throw IoError("cannot write model into '" + dir.string() + "'");
  out << "flap-model 1\n";
  out << "method " << method_name(p.method) << '\n';
  out << "learner " << learner_name(p.learner) << '\n';
  out << "design " << p.model.design.groups << ' ' << p.model.design.dim << '\n';
  detail::write_row(out, "probs", p.group_probs);
  detail::write_row(out, "coef", {p.model.coef.data(), static_cast<std::size_t>(p.model.coef.size())});
  const auto& dg = p.model.diagnostics;
  out << "diagnostics " << dg.iterations << ' ' << csv::format_double(dg.log_likelihood) << ' '
      << dg.converged << ' ' << csv::format_double(dg.ridge) << ' ' << dg.ridge_fallback << '\n';
  if (const auto* prep = std::get_if<Preprocessor>(&p.input)) {
    out << "input preprocessor preprocessor.txt\n";
    prep->save((dir / "preprocessor.txt").string());
  } else if (const auto* st = std::get_if<GroupStandardizer>(&p.input)) {
    out << "input standardizer " << st->scale << ' ' << st->means.size() << '\n';
    for (std::size_t s = 0; s < st->means.size(); ++s) {
      detail::write_row(out, "mean", st->means[s]);
      detail::write_row(out, "sd", st->sds[s]);
    }
  } else {
    out << "input none\n";
  }
  out << "end\n";
}

inline Predictor load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.txt");
  if (!in) throw IoError("no model.txt in '" + dir.string() + "'");
  std::string line, word;
  if (!std::getline(in, line) || line != "flap-model 1") throw ValueError("bad model header");
  Predictor p;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ls >> word;
    if (word == "end") break;
    if (word == "method") {
      std::string rest;
      std::getline(ls, rest);
      p.method = parse_method(csv::trim(rest));
    } else if (word == "learner") {
      ls >> word;
      p.learner = word == "ml" ? LearnerKind::ml : word == "ftu" ? LearnerKind::ftu : LearnerKind::aml;
    } else if (word == "design") {
      ls >> p.model.design.groups >> p.model.design.dim;
    } else if (word == "probs") {
      p.group_probs = detail::read_row(ls);
    } else if (word == "coef") {
      const auto c = detail::read_row(ls);
      p.model.coef = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    } else if (word == "diagnostics") {
      std::string ll, ridge;
      auto& dg = p.model.diagnostics;
      ls >> dg.iterations >> ll >> dg.converged >> ridge >> dg.ridge_fallback;
      csv::parse_double(ll, dg.log_likelihood);
      csv::parse_double(ridge, dg.ridge);
    } else if (word == "input") {
      ls >> word;
      if (word == "preprocessor") {
        std::string file;
        ls >> file;
        p.input = Preprocessor::load((dir / file).string());
      } else if (word == "standardizer") {
        GroupStandardizer st;
        std::size_t k;
        ls >> st.scale >> k;
        for (std::size_t s = 0; s < k; ++s) {
          std::string l2;
          std::getline(in, l2);
          std::istringstream m(l2);
          m >> word;
          st.means.push_back(detail::read_row(m));
          std::getline(in, l2);
          std::istringstream sd(l2);
          sd >> word;
          st.sds.push_back(detail::read_row(sd));
        }
        p.input = std::move(st);
      }
    } else {
      throw ValueError("unknown record '" + word + "' in model file");
    }
  }
  if (static_cast<std::size_t>(p.model.coef.size()) != p.model.design.width())
    throw ValueError("coefficient count does not match the design");
  return p;
}

}  // namespace flap
