#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flap/csv.hpp"
#include "flap/dataset.hpp"
#include "flap/errors.hpp"
#include "flap/numeric.hpp"
#include "flap/rng.hpp"

// Simulators for the three loan/admission structural causal models and a
// ground-truth counterfactual oracle. Every unit draws its exogenous noise
// from its own counter-based substream, so unit i is identical across runs
// with different n.
namespace flap::scm {

// Log-normal income model with a binary sensitive attribute.
//   S = 1{U_S < p_s}
//   A = c1 exp(c2 + lambda_a S + c3 sigma_a^S U_A)
//   Y = 1{U_Y < expit(beta_0 + beta_a A + beta_s S)}
struct Scm1Params {
  double c1 = 0.01, c2 = 4.0, c3 = 0.2;
  double lambda_a = 0.5;
  double sigma_a = 1.0;
  double beta_0 = -1.0, beta_a = 2.0, beta_s = 1.0;
  double p_s = 0.7;

  void validate() const {
    if (!(c1 > 0) || !(c3 > 0) || !(sigma_a > 0))
      throw DomainError("Scm1Params: c1, c3 and sigma_a must be positive");
    if (!(p_s > 0 && p_s < 1)) throw DomainError("Scm1Params: p_s must lie in (0, 1)");
  }
};

// Three race groups with education E and income A, correlated through U_E.
struct Scm2Params {
  double p0 = 0.76, p1 = 0.16, p2 = 0.08;
  double lambda_e0 = 1.07, lambda_e1 = 0.0, lambda_e2 = 0.0;
  double lambda_a0 = 0.58, lambda_a1 = 0.0, lambda_a2 = 0.0;
  double beta_0 = -1.0, beta_1 = 0.0, beta_2 = 0.0, beta_a = 1.0, beta_e = 2.0;

  double mu_e(int s) const { return lambda_e0 + (s == 1) * lambda_e1 + (s == 2) * lambda_e2; }
  double income_median(int s) const {
    return lambda_a0 + (s == 1) * lambda_a1 + (s == 2) * lambda_a2;
  }

  void validate() const {
    if (!(p0 > 0 && p1 > 0 && p2 > 0) || std::abs(p0 + p1 + p2 - 1.0) > 1e-12)
      throw DomainError("Scm2Params: group probabilities must be positive and sum to 1");
    for (int s = 0; s < 3; ++s) {
      if (!std::isfinite(mu_e(s))) throw DomainError("Scm2Params: education mean not finite");
      if (!(income_median(s) > 0))
        throw DomainError("Scm2Params: income medians must stay positive");
    }
  }
};

// Admission model: T = min(max(0, lambda S + U_T), 1), S = 1{U_S < 0.5}.
struct Scm3Params {
  double lambda = 0.0;
  double beta_0 = -1.0, beta_t = 2.0, beta_s = 1.0;

  void validate() const {
    if (!(lambda >= 0 && lambda < 1)) throw DomainError("Scm3Params: lambda must lie in [0, 1)");
  }
};

using Params = std::variant<Scm1Params, Scm2Params, Scm3Params>;

// u_a holds U_T for the admission model; u_e is used by the education model only.
struct ExogenousRecord {
  double u_s = 0.5;
  double u_a = 0.0;
  double u_e = 0.0;
  double u_y = 0.5;
};

struct Simulation {
  Dataset data;
  std::vector<ExogenousRecord> exogenous;
};

inline int group_count(const Params& p) {
  return std::holds_alternative<Scm2Params>(p) ? 3 : 2;
}

inline int attribute_dim(const Params& p) {
  return std::holds_alternative<Scm2Params>(p) ? 2 : 1;
}

// Substream ids for the exogenous variables.
enum Stream : std::uint64_t { kUs = 1, kUa = 2, kUe = 3, kUy = 4 };

inline int sensitive_from(const Scm1Params& p, const ExogenousRecord& u) { return u.u_s < p.p_s; }
inline int sensitive_from(const Scm2Params& p, const ExogenousRecord& u) {
  return (u.u_s > p.p0) + (u.u_s > p.p0 + p.p1);
}
inline int sensitive_from(const Scm3Params&, const ExogenousRecord& u) { return u.u_s < 0.5; }

// Structural equation f_A(s, u).
inline std::vector<double> attributes(const Scm1Params& p, int s, const ExogenousRecord& u) {
  return {p.c1 * std::exp(p.c2 + p.lambda_a * s + p.c3 * std::pow(p.sigma_a, s) * u.u_a)};
}
inline std::vector<double> attributes(const Scm2Params& p, int s, const ExogenousRecord& u) {
  const double mu_e = p.mu_e(s);
  const double e = std::max(0.0, mu_e + 0.4 * mu_e * u.u_e);
  const double a = std::exp(std::log(p.income_median(s)) + 0.4 * mu_e * u.u_e + 0.1 * u.u_a);
  return {e, a};
}
inline std::vector<double> attributes(const Scm3Params& p, int s, const ExogenousRecord& u) {
  return {std::min(std::max(0.0, p.lambda * s + u.u_a), 1.0)};
}

// Linear predictor of the decision given the observed (s, a).
inline double decision_logit(const Scm1Params& p, int s, std::span<const double> a) {
  return p.beta_0 + p.beta_a * a[0] + p.beta_s * s;
}
inline double decision_logit(const Scm2Params& p, int s, std::span<const double> a) {
  return p.beta_0 + (s == 1) * p.beta_1 + (s == 2) * p.beta_2 + p.beta_a * a[1] + p.beta_e * a[0];
}
inline double decision_logit(const Scm3Params& p, int s, std::span<const double> a) {
  return p.beta_0 + p.beta_t * a[0] + p.beta_s * s;
}

inline std::vector<AttributeColumn> attribute_columns(const Params& p) {
  if (std::holds_alternative<Scm2Params>(p))
    return {{"education", ColumnKind::continuous, {}}, {"income", ColumnKind::continuous, {}}};
  if (std::holds_alternative<Scm3Params>(p)) return {{"score", ColumnKind::continuous, {}}};
  return {{"income", ColumnKind::continuous, {}}};
}

inline ExogenousRecord draw_exogenous(const Params& p, std::uint64_t seed, std::uint64_t unit) {
  ExogenousRecord u;
  u.u_s = counter_uniform(seed, kUs, unit);
  u.u_y = counter_uniform(seed, kUy, unit);
  if (std::holds_alternative<Scm3Params>(p)) {
    u.u_a = counter_uniform(seed, kUa, unit);
  } else {
    u.u_a = counter_normal(seed, kUa, unit);
    if (std::holds_alternative<Scm2Params>(p)) u.u_e = counter_normal(seed, kUe, unit);
  }
  return u;
}

inline void validate(const Params& p) {
  std::visit([](const auto& q) { q.validate(); }, p);
}

// Generates n units; rows follow the structural equations exactly.
inline Simulation simulate(const Params& params, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("simulate needs n >= 1");
  validate(params);
  const int k = group_count(params);
  const std::size_t d = static_cast<std::size_t>(attribute_dim(params));
  std::vector<int> g(n), y(n);
  std::vector<double> attrs(n * d);
  std::vector<ExogenousRecord> exo(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = draw_exogenous(params, seed, i);
    std::visit(
        [&](const auto& p) {
          const int s = sensitive_from(p, u);
          const auto a = attributes(p, s, u);
          g[i] = s;
          std::copy(a.begin(), a.end(), attrs.begin() + static_cast<std::ptrdiff_t>(i * d));
          y[i] = u.u_y < expit(decision_logit(p, s, a));
        },
        params);
    exo[i] = u;
  }
  return {Dataset(GroupTable::numbered(k), attribute_columns(params), std::move(g),
                  std::move(attrs), std::move(y)),
          std::move(exo)};
}

inline Simulation simulate_ex1(const Scm1Params& p, std::size_t n, std::uint64_t seed) {
  return simulate(p, n, seed);
}
inline Simulation simulate_ex2(const Scm2Params& p, std::size_t n, std::uint64_t seed) {
  return simulate(p, n, seed);
}
inline Simulation simulate_ex3(const Scm3Params& p, std::size_t n, std::uint64_t seed) {
  return simulate(p, n, seed);
}

// P(Y_{s'}(u) = 1): abduction is trivial because u is known; the action
// forces S = s' and prediction propagates through f_A and f_Y.
inline double counterfactual_decision_prob(const Params& params, const ExogenousRecord& u,
                                           int s_prime) {
  if (s_prime < 0 || s_prime >= group_count(params))
    throw DomainError("counterfactual group " + std::to_string(s_prime) + " is not in the model");
  return std::visit(
      [&](const auto& p) { return expit(decision_logit(p, s_prime, attributes(p, s_prime, u))); },
      params);
}

// The generating decision rule as a score function p(s, a).
struct TrueDecisionRule {
  Params params;
  double score(int s, std::span<const double> a) const {
    return std::visit([&](const auto& p) { return expit(decision_logit(p, s, a)); }, params);
  }
};

// Unfairness of any score rule under the true counterfactuals: max over group
// pairs of the mean |p(r, a_r(u)) - p(t, a_t(u))| over units 0..n-1 of the
// exogenous stream `seed` (the same units simulate(params, n, seed) draws).
template <class Rule>
double true_cf_gap(const Rule& rule, const Params& params, std::size_t n, std::uint64_t seed) {
  validate(params);
  const int k = group_count(params);
  std::vector<CompensatedSum> sums(static_cast<std::size_t>(k * (k - 1) / 2));
  std::vector<double> prob(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = draw_exogenous(params, seed, i);
    for (int r = 0; r < k; ++r) {
      const auto a = std::visit([&](const auto& p) { return attributes(p, r, u); }, params);
      prob[static_cast<std::size_t>(r)] = rule.score(r, a);
    }
    std::size_t idx = 0;
    for (int r = 0; r < k; ++r)
      for (int t = r + 1; t < k; ++t)
        sums[idx++].add(std::abs(prob[static_cast<std::size_t>(r)] - prob[static_cast<std::size_t>(t)]));
  }
  double best = 0.0;
  for (const auto& s : sums) best = std::max(best, s.value() / static_cast<double>(n));
  return best;
}

// Ground-truth unfairness of the generating rule.
inline double oracle_cf_metric(const Params& params, std::size_t n, std::uint64_t seed) {
  return true_cf_gap(TrueDecisionRule{params}, params, n, seed);
}

inline void write_exogenous_csv(std::span<const ExogenousRecord> exo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "unit,u_s,u_a,u_e,u_y\n";
  for (std::size_t i = 0; i < exo.size(); ++i)
    out << i << ',' << csv::format_double(exo[i].u_s) << ',' << csv::format_double(exo[i].u_a)
        << ',' << csv::format_double(exo[i].u_e) << ',' << csv::format_double(exo[i].u_y) << '\n';
}

inline std::vector<ExogenousRecord> read_exogenous_csv(const std::string& path) {
  const auto t = csv::read_file(path);
  if (t.header != std::vector<std::string>{"unit", "u_s", "u_a", "u_e", "u_y"})
    throw SchemaError("'" + path + "' is not an exogenous-record file");
  std::vector<ExogenousRecord> out;
  for (const auto& r : t.rows) {
    ExogenousRecord u;
    if (!csv::parse_double(r[1], u.u_s) || !csv::parse_double(r[2], u.u_a) ||
        !csv::parse_double(r[3], u.u_e) || !csv::parse_double(r[4], u.u_y))
      throw ValueError("bad exogenous record in '" + path + "'");
    out.push_back(u);
  }
  return out;
}

}  // namespace flap::scm
