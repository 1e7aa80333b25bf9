#pragma once

#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "flap/dataset.hpp"
#include "flap/errors.hpp"
#include "flap/logistic.hpp"
#include "flap/preprocess.hpp"

namespace flap {

// Anything that maps (s, a) to a score in [0, 1].
template <class P>
concept Scorer = requires(const P& p, int s, std::span<const double> a) {
  { p.score(s, a) } -> std::convertible_to<double>;
};

enum class Method { ml, ftu, aml, fl, aa, flap1_o, flap2_o, flap1_m, flap2_m };

inline constexpr Method kComparedMethods[] = {Method::ml,      Method::ftu,     Method::fl,
                                              Method::aa,      Method::flap1_o, Method::flap2_o,
                                              Method::flap1_m, Method::flap2_m};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::ml: return "ML";
    case Method::ftu: return "FTU";
    case Method::aml: return "AML";
    case Method::fl: return "FL-lite";
    case Method::aa: return "AA";
    case Method::flap1_o: return "FLAP-1(O)";
    case Method::flap2_o: return "FLAP-2(O)";
    case Method::flap1_m: return "FLAP-1(M)";
    case Method::flap2_m: return "FLAP-2(M)";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  for (Method m : {Method::ml, Method::ftu, Method::aml, Method::fl, Method::aa, Method::flap1_o,
                   Method::flap2_o, Method::flap1_m, Method::flap2_m})
    if (method_name(m) == name) return m;
  if (name == "FL") return Method::fl;
  throw ValueError("unknown method '" + std::string(name) + "'");
}

enum class LearnerKind { ml, ftu, aml };

inline std::string_view learner_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::ml: return "ml";
    case LearnerKind::ftu: return "ftu";
    case LearnerKind::aml: return "aml";
  }
  return "?";
}

inline double predict_ftu(const LogisticModel& m, std::span<const double> a) {
  if (m.design.uses_groups()) throw KindError("FTU prediction needs an attributes-only model");
  return m.predict(0, a);
}

inline double predict_ml(const LogisticModel& m, int s, std::span<const double> a) {
  return m.predict(s, a);
}

inline void check_probabilities(std::span<const double> probs) {
  CompensatedSum total;
  for (double p : probs) {
    if (p < 0) throw DomainError("group probabilities must be non-negative");
    total.add(p);
  }
  if (std::abs(total.value() - 1.0) > 1e-9) throw DomainError("group probabilities must sum to 1");
}

// f_AML(a) = sum_s f_ML(s, a) P_n(S = s).
inline double predict_aml(const LogisticModel& m, std::span<const double> probs,
                          std::span<const double> a) {
  check_probabilities(probs);
  CompensatedSum acc;
  for (std::size_t s = 0; s < probs.size(); ++s)
    acc.add(probs[s] * m.predict(static_cast<int>(s), a));
  return acc.value();
}

// Per-group centering (AA) or standardization (FL-lite abduction of U_A).
struct GroupStandardizer {
  bool scale = true;
  std::vector<std::vector<double>> means;  // [s][j]
  std::vector<std::vector<double>> sds;    // [s][j]; 0 marks a constant coordinate
  std::vector<std::pair<int, std::size_t>> zero_variance;

  static GroupStandardizer fit(const Dataset& data, bool scale) {
    GroupStandardizer g;
    g.scale = scale;
    const auto rows = data.group_rows();
    const std::size_t d = data.dim();
    g.means.assign(rows.size(), std::vector<double>(d));
    g.sds.assign(rows.size(), std::vector<double>(d, 1.0));
    for (std::size_t s = 0; s < rows.size(); ++s) {
      for (std::size_t j = 0; j < d; ++j) {
        CompensatedSum sum;
        for (std::size_t i : rows[s]) sum.add(data.attr(i, j));
        const double mean = sum.value() / static_cast<double>(rows[s].size());
        CompensatedSum sq;
        for (std::size_t i : rows[s]) sq.add((data.attr(i, j) - mean) * (data.attr(i, j) - mean));
        g.means[s][j] = mean;
        if (scale) {
          const double sd = std::sqrt(sq.value() / static_cast<double>(rows[s].size()));
          g.sds[s][j] = sd;
          if (!(sd > 0)) g.zero_variance.emplace_back(static_cast<int>(s), j);
        }
      }
    }
    return g;
  }

  std::vector<double> apply(int s, std::span<const double> a) const {
    const auto& m = means.at(static_cast<std::size_t>(s));
    const auto& sd = sds[static_cast<std::size_t>(s)];
    if (a.size() != m.size()) throw DomainError("attribute vector has the wrong dimension");
    std::vector<double> out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (!scale)
        out[j] = a[j] - m[j];
      else
        out[j] = sd[j] > 0 ? (a[j] - m[j]) / sd[j] : 0.0;
    }
    return out;
  }
};

using InputMap = std::variant<std::monostate, Preprocessor, GroupStandardizer>;

// A fitted score function p(s, a; D): an input map followed by a logistic
// learner (ML, FTU, or group-averaged AML).
struct Predictor {
  Method method = Method::ml;
  InputMap input;
  LearnerKind learner = LearnerKind::ml;
  LogisticModel model;
  std::vector<double> group_probs;

  std::vector<double> features(int s, std::span<const double> a) const {
    return std::visit(
        [&](const auto& in) -> std::vector<double> {
          using T = std::decay_t<decltype(in)>;
          if constexpr (std::is_same_v<T, std::monostate>)
            return {a.begin(), a.end()};
          else
            return in.apply(s, a);
        },
        input);
  }

  double score(int s, std::span<const double> a) const {
    const auto x = features(s, a);
    switch (learner) {
      case LearnerKind::ml: return predict_ml(model, s, x);
      case LearnerKind::ftu: return predict_ftu(model, x);
      case LearnerKind::aml: return predict_aml(model, group_probs, x);
    }
    return 0.0;
  }

  const Preprocessor* preprocessor() const { return std::get_if<Preprocessor>(&input); }
};

namespace detail {

inline Predictor fit_with(Method method, const Dataset& train, InputMap input, LearnerKind learner,
                          double ridge) {
  Predictor p;
  p.method = method;
  p.learner = learner;
  p.group_probs = train.group_probabilities();
  p.input = std::move(input);
  std::vector<double> x(train.size() * train.dim());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto f = p.features(train.group(i), train.attrs(i));
    std::copy(f.begin(), f.end(), x.begin() + static_cast<std::ptrdiff_t>(i * train.dim()));
  }
  const Design design = learner == LearnerKind::ftu
                            ? Design::attributes_only(train.dim())
                            : Design::with_groups(train.group_count(), train.dim());
  p.model = fit_logistic(design, train, x, ridge);
  return p;
}

}  // namespace detail

inline Predictor fit_ml(const Dataset& train, double ridge = kDefaultRidge) {
  return detail::fit_with(Method::ml, train, std::monostate{}, LearnerKind::ml, ridge);
}

inline Predictor fit_ftu(const Dataset& train, double ridge = kDefaultRidge) {
  return detail::fit_with(Method::ftu, train, std::monostate{}, LearnerKind::ftu, ridge);
}

inline Predictor fit_aml(const Dataset& train, double ridge = kDefaultRidge) {
  return detail::fit_with(Method::aml, train, std::monostate{}, LearnerKind::aml, ridge);
}

// FL-lite: deterministic abduction u_hat = (a - E_n(A|s)) / SD_n(A|s), then an
// attributes-only learner on u_hat.
inline Predictor fit_fl(const Dataset& train, double ridge = kDefaultRidge) {
  return detail::fit_with(Method::fl, train, GroupStandardizer::fit(train, true), LearnerKind::ftu,
                          ridge);
}

// AA: counterfactual attributes a - E_n(A|s) + E_n(A|s') scored by an ML
// learner trained on group-centered attributes and averaged over s' with
// weights P_n(S = s').
inline Predictor fit_aa(const Dataset& train, double ridge = kDefaultRidge) {
  return detail::fit_with(Method::aa, train, GroupStandardizer::fit(train, false),
                          LearnerKind::aml, ridge);
}

}  // namespace flap
