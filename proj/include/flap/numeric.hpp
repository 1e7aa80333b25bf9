#pragma once

#include <cmath>
#include <span>

#include <boost/math/special_functions/gamma.hpp>

namespace flap {

inline double expit(double u) noexcept {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// log(1 + exp(u)) without overflow.
inline double log1pexp(double u) noexcept {
  return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_mean(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return xs.empty() ? 0.0 : acc.value() / static_cast<double>(xs.size());
}

// Upper tail P(X >= x) of a chi-square with `df` degrees of freedom.
inline double chi_square_sf(double x, double df) {
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace flap
