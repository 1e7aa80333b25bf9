#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flap/dataset.hpp"
#include "flap/errors.hpp"
#include "flap/numeric.hpp"

namespace flap {

// Which inputs enter a logistic score: intercept, optional group contrasts
// (indicators for groups 1..K-1, group 0 as reference) and attributes.
struct Design {
  int groups = 0;  // 0 = no group terms
  std::size_t dim = 0;

  static Design attributes_only(std::size_t d) { return {0, d}; }
  static Design with_groups(int k, std::size_t d) { return {k, d}; }

  bool uses_groups() const noexcept { return groups > 1; }
  std::size_t group_terms() const noexcept {
    return uses_groups() ? static_cast<std::size_t>(groups - 1) : 0;
  }
  std::size_t width() const noexcept { return 1 + group_terms() + dim; }

  void fill(int s, std::span<const double> a, std::span<double> out) const {
    out[0] = 1.0;
    for (std::size_t g = 0; g < group_terms(); ++g)
      out[1 + g] = (s == static_cast<int>(g) + 1) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < dim; ++j) out[1 + group_terms() + j] = a[j];
  }

  friend bool operator==(const Design&, const Design&) = default;
};

struct FitDiagnostics {
  int iterations = 0;
  double log_likelihood = 0.0;  // unpenalized, at the returned coefficients
  bool converged = false;
  double ridge = 0.0;
  bool ridge_fallback = false;
};

struct LogisticModel {
  Design design;
  Eigen::VectorXd coef;
  FitDiagnostics diagnostics;

  double linear_predictor(int s, std::span<const double> a) const {
    if (a.size() != design.dim) throw DomainError("attribute vector has the wrong dimension");
    double eta = coef[0];
    if (design.uses_groups() && s > 0) {
      if (s >= design.groups) throw DomainError("group id outside the model's design");
      eta += coef[s];
    }
    const std::size_t off = 1 + design.group_terms();
    for (std::size_t j = 0; j < design.dim; ++j) eta += coef[static_cast<Eigen::Index>(off + j)] * a[j];
    return eta;
  }

  double predict(int s, std::span<const double> a) const { return expit(linear_predictor(s, a)); }
};

// Penalized objective l(beta) - ridge/2 * ||beta without intercept||^2.
inline double penalized_log_likelihood(const Eigen::MatrixXd& x, std::span<const int> y,
                                       const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = x * beta;
  CompensatedSum ll;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    ll.add(y[static_cast<std::size_t>(i)] * eta[i] - log1pexp(eta[i]));
  return ll.value() - 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
}

inline Eigen::VectorXd penalized_gradient(const Eigen::MatrixXd& x, std::span<const int> y,
                                          const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = y[static_cast<std::size_t>(i)] - expit(eta[i]);
  Eigen::VectorXd g = x.transpose() * r;
  g.tail(g.size() - 1) -= ridge * beta.tail(beta.size() - 1);
  return g;
}

namespace detail {

// Newton/IRLS with step halving. Convergence: max |gradient| / n < 1e-8.
inline LogisticModel newton_fit(const Design& design, const Eigen::MatrixXd& x,
                                std::span<const int> y, double ridge, int max_iter) {
  const Eigen::Index p = x.cols();
  const double n = static_cast<double>(x.rows());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double obj = penalized_log_likelihood(x, y, beta, ridge);
  LogisticModel m{design, beta, {}};
  m.diagnostics.ridge = ridge;
  Eigen::VectorXd w(x.rows());
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd g = penalized_gradient(x, y, beta, ridge);
    if (g.cwiseAbs().maxCoeff() / n < 1e-8) {
      m.diagnostics.converged = true;
      break;
    }
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double pr = expit(eta[i]);
      w[i] = pr * (1.0 - pr);
    }
    Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
    h.diagonal().tail(p - 1).array() += ridge;
    Eigen::VectorXd step = h.ldlt().solve(g);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const double c = penalized_log_likelihood(x, y, cand, ridge);
      if (c >= obj) {
        beta = cand;
        obj = c;
        improved = true;
        break;
      }
    }
    m.diagnostics.iterations = it;
    if (!improved) {
      // No ascent direction left at machine precision.
      m.diagnostics.converged =
          penalized_gradient(x, y, beta, ridge).cwiseAbs().maxCoeff() / n < 1e-6;
      break;
    }
  }
  m.coef = beta;
  m.diagnostics.log_likelihood = penalized_log_likelihood(x, y, beta, 0.0);
  return m;
}

}  // namespace detail

inline constexpr double kDefaultRidge = 1e-6;

// Maximum penalized likelihood fit on an explicit design matrix (first column
// the intercept). A fit that fails to converge is retried at ridge 1e-6; a
// second failure throws FitError.
inline LogisticModel fit_logistic(const Design& design, const Eigen::MatrixXd& x,
                                  std::span<const int> y, double ridge = kDefaultRidge,
                                  int max_iter = 100) {
  if (x.rows() == 0) throw FitError("logistic fit needs at least one row");
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw FitError("label count does not match design rows");
  if (static_cast<std::size_t>(x.cols()) != design.width())
    throw FitError("design matrix width does not match the design description");
  for (int v : y)
    if (v != 0 && v != 1) throw FitError("labels must be 0/1");
  auto m = detail::newton_fit(design, x, y, ridge, max_iter);
  if (m.diagnostics.converged) return m;
  if (ridge < kDefaultRidge) {
    m = detail::newton_fit(design, x, y, kDefaultRidge, max_iter);
    m.diagnostics.ridge_fallback = true;
    if (m.diagnostics.converged) return m;
  }
  throw FitError("logistic fit did not converge in " + std::to_string(max_iter) + " iterations");
}

inline Eigen::MatrixXd design_matrix(const Design& design, std::span<const int> groups,
                                     std::span<const double> attrs) {
  const std::size_t n = groups.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(design.width()));
  std::vector<double> row(design.width());
  for (std::size_t i = 0; i < n; ++i) {
    design.fill(groups[i], attrs.subspan(i * design.dim, design.dim), row);
    for (std::size_t c = 0; c < row.size(); ++c)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
  }
  return x;
}

// Fits on a dataset's groups and the given row-major attribute matrix.
inline LogisticModel fit_logistic(const Design& design, const Dataset& data,
                                  std::span<const double> attrs, double ridge = kDefaultRidge) {
  if (attrs.size() != data.size() * design.dim)
    throw FitError("attribute matrix does not match the design dimension");
  return fit_logistic(design, design_matrix(design, data.group_ids(), attrs), data.decisions(),
                      ridge);
}

}  // namespace flap
