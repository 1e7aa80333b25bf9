#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "flap/dataset.hpp"
#include "flap/errors.hpp"
#include "flap/numeric.hpp"
#include "flap/predictors.hpp"
#include "flap/preprocess.hpp"
#include "flap/rng.hpp"

namespace flap {

struct MetricConfig {
  double delta = 0.05;      // CF-bound rank window, as a fraction of group size
  std::size_t sample_cap = 50;  // peers averaged per (unit, group)
  std::uint64_t seed = 0;

  void validate() const {
    if (!(delta >= 0 && delta <= 1)) throw DomainError("delta must lie in [0, 1]");
    if (sample_cap < 1) throw DomainError("sample cap must be at least 1");
  }
};

struct AccuracyReport {
  double thresholded = 0.0;  // decision 1{score >= 0.5}
  double drawn = 0.0;        // decision 1{U < score}, one draw per row
  double expected = 0.0;     // mean over rows of P(draw matches label)
};

template <Scorer P>
AccuracyReport accuracy(const P& pred, const Dataset& test, std::uint64_t draw_seed = 0) {
  AccuracyReport r;
  if (test.size() == 0) return r;
  std::size_t hit_t = 0, hit_d = 0;
  CompensatedSum expected;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double p = pred.score(test.group(i), test.attrs(i));
    const int y = test.decision(i);
    hit_t += (p >= 0.5 ? 1 : 0) == y;
    hit_d += (counter_uniform(draw_seed, 0xacc, i) < p ? 1 : 0) == y;
    expected.add(y ? p : 1.0 - p);
  }
  const double n = static_cast<double>(test.size());
  r.thresholded = static_cast<double>(hit_t) / n;
  r.drawn = static_cast<double>(hit_d) / n;
  r.expected = expected.value() / n;
  return r;
}

// max over group pairs (r, t) of the test-set mean of
// |p(r, a_hat(r, s_i, a_i)) - p(t, a_hat(t, s_i, a_i))|, with a_hat the
// marginal-mapping counterfactual fitted on the training set.
template <Scorer P>
double cf_metric(const P& pred, const Dataset& test, const Preprocessor& prep_m) {
  if (prep_m.kind() != PreprocessKind::marginal_mapping)
    throw KindError("cf_metric needs a marginal-mapping preprocessor");
  const int k = prep_m.group_count();
  if (k < 2 || test.size() == 0) return 0.0;
  const std::size_t pairs = static_cast<std::size_t>(k * (k - 1) / 2);
  std::vector<CompensatedSum> sums(pairs);
  std::vector<double> scores(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (int r = 0; r < k; ++r) {
      const auto cf = prep_m.counterfactual(r, test.group(i), test.attrs(i));
      scores[static_cast<std::size_t>(r)] = pred.score(r, cf);
    }
    std::size_t idx = 0;
    for (int r = 0; r < k; ++r)
      for (int t = r + 1; t < k; ++t)
        sums[idx++].add(std::abs(scores[static_cast<std::size_t>(r)] - scores[static_cast<std::size_t>(t)]));
  }
  double best = 0.0;
  for (const auto& s : sums) best = std::max(best, s.value() / static_cast<double>(test.size()));
  return best;
}

// Ascending within-group ranks of every training attribute, ties averaged.
// Points outside the training set get the same rule: #{values < x} plus half
// of (#{values == x} + 1), which is the average rank for attained values.
class RankTable {
 public:
  explicit RankTable(const Dataset& train) : dim_(train.dim()), sizes_(train.group_sizes()) {
    group_rows_ = train.group_rows();
    sorted_.resize(group_rows_.size());
    for (std::size_t s = 0; s < group_rows_.size(); ++s) {
      sorted_[s].resize(dim_);
      for (std::size_t j = 0; j < dim_; ++j) {
        std::vector<std::size_t> order = group_rows_[s];
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return train.attr(a, j) < train.attr(b, j);
        });
        auto& col = sorted_[s][j];
        col.values.reserve(order.size());
        col.rows.reserve(order.size());
        for (std::size_t i : order) {
          col.values.push_back(train.attr(i, j));
          col.rows.push_back(i);
        }
        col.ranks.resize(order.size());
        for (std::size_t lo = 0; lo < order.size();) {
          std::size_t hi = lo + 1;
          while (hi < order.size() && col.values[hi] == col.values[lo]) ++hi;
          const double avg = 0.5 * static_cast<double>(lo + 1 + hi);  // mean of lo+1..hi
          std::fill(col.ranks.begin() + static_cast<std::ptrdiff_t>(lo),
                    col.ranks.begin() + static_cast<std::ptrdiff_t>(hi), avg);
          lo = hi;
        }
      }
    }
    row_ranks_.resize(train.size() * dim_);
    for (std::size_t s = 0; s < sorted_.size(); ++s)
      for (std::size_t j = 0; j < dim_; ++j) {
        const auto& col = sorted_[s][j];
        for (std::size_t q = 0; q < col.rows.size(); ++q) row_ranks_[col.rows[q] * dim_ + j] = col.ranks[q];
      }
  }

  std::size_t dim() const noexcept { return dim_; }
  int group_count() const noexcept { return static_cast<int>(sizes_.size()); }
  std::size_t group_size(int s) const { return sizes_.at(static_cast<std::size_t>(s)); }

  // Rank of training row i within its own group.
  double rank(std::size_t i, std::size_t j) const { return row_ranks_[i * dim_ + j]; }

  double rank_of(int s, std::size_t j, double x) const {
    const auto& v = sorted_.at(static_cast<std::size_t>(s))[j].values;
    const auto lo = std::lower_bound(v.begin(), v.end(), x);
    const auto hi = std::upper_bound(lo, v.end(), x);
    return static_cast<double>(lo - v.begin()) + 0.5 * static_cast<double>(hi - lo + 1);
  }

  // Reference ranks of (s, a) rescaled into group s': r_s(a_j) * n_s' / n_s.
  std::vector<double> reference(int s_prime, int s, std::span<const double> a) const {
    const double scale = static_cast<double>(group_size(s_prime)) / static_cast<double>(group_size(s));
    std::vector<double> ref(dim_);
    for (std::size_t j = 0; j < dim_; ++j) ref[j] = rank_of(s, j, a[j]) * scale;
    return ref;
  }

  // Rows of group s' whose every coordinate rank lies within delta * n_s' of
  // the reference ranks.
  std::vector<std::size_t> neighborhood(int s_prime, std::span<const double> ref, double delta) const {
    if (dim_ == 0) return group_rows_.at(static_cast<std::size_t>(s_prime));
    const auto& cols = sorted_.at(static_cast<std::size_t>(s_prime));
    const double window = delta * static_cast<double>(group_size(s_prime));
    // Scan the coordinate whose window holds the fewest candidates; the slack
    // only widens the binary-search range, membership is decided by within().
    constexpr double slack = 1e-9;
    std::size_t best_j = 0, best_lo = 0, best_hi = 0;
    std::size_t best_count = std::numeric_limits<std::size_t>::max();
    for (std::size_t j = 0; j < dim_; ++j) {
      const auto& r = cols[j].ranks;
      const auto lo = std::lower_bound(r.begin(), r.end(), ref[j] - window - slack);
      const auto hi = std::upper_bound(lo, r.end(), ref[j] + window + slack);
      const auto count = static_cast<std::size_t>(hi - lo);
      if (count < best_count) {
        best_count = count;
        best_j = j;
        best_lo = static_cast<std::size_t>(lo - r.begin());
        best_hi = static_cast<std::size_t>(hi - r.begin());
      }
    }
    std::vector<std::size_t> out;
    const auto& col = cols[best_j];
    for (std::size_t q = best_lo; q < best_hi; ++q) {
      const std::size_t row = col.rows[q];
      bool ok = true;
      for (std::size_t j = 0; j < dim_ && ok; ++j) ok = within(rank(row, j), ref[j], window);
      if (ok) out.push_back(row);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Row of group s' closest to the reference in maximum coordinate-rank
  // distance, lowest row index on ties.
  std::size_t nearest(int s_prime, std::span<const double> ref) const {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_row = std::numeric_limits<std::size_t>::max();
    for (std::size_t row : group_rows_.at(static_cast<std::size_t>(s_prime))) {
      double dist = 0.0;
      for (std::size_t j = 0; j < dim_ && dist <= best; ++j)
        dist = std::max(dist, std::abs(rank(row, j) - ref[j]));
      if (dist < best) {
        best = dist;
        best_row = row;
      }
    }
    return best_row;
  }

 private:
  static bool within(double v, double ref, double window) { return std::abs(v - ref) <= window; }

  struct SortedColumn {
    std::vector<double> values;
    std::vector<double> ranks;
    std::vector<std::size_t> rows;
  };

  std::size_t dim_;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<std::size_t>> group_rows_;
  std::vector<std::vector<SortedColumn>> sorted_;  // [s][j]
  std::vector<double> row_ranks_;
};

// Neighborhood of training row i of `train` in group s'.
inline std::vector<std::size_t> rank_neighborhood(const RankTable& rt, const Dataset& train, int s_prime,
                                                  std::size_t i, double delta) {
  return rt.neighborhood(s_prime, rt.reference(s_prime, train.group(i), train.attrs(i)), delta);
}

// The peer samples behind the CF-bound for a set of evaluation units. They
// depend on the data, delta and seed only, so one plan serves every
// predictor. Each (unit, group) pair orders candidate rows by a fixed
// pseudo-random key and keeps the `sample_cap` smallest; a larger delta sees
// a superset of candidates under the same keys.
class CfBoundPlan {
 public:
  CfBoundPlan(const Dataset& train, const Dataset& units, const MetricConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    if (units.group_count() != train.group_count() || units.dim() != train.dim())
      throw DomainError("evaluation units do not match the training layout");
    const RankTable rt(train);
    const int k = train.group_count();
    offsets_.push_back(0);
    for (std::size_t i = 0; i < units.size(); ++i) {
      for (int sp = 0; sp < k; ++sp) {
        if (sp == units.group(i)) continue;
        const auto ref = rt.reference(sp, units.group(i), units.attrs(i));
        auto cand = rt.neighborhood(sp, ref, cfg.delta);
        if (cand.empty()) {
          cand.push_back(rt.nearest(sp, ref));
          ++fallbacks_;
        }
        if (cand.size() > cfg.sample_cap) {
          const std::uint64_t stream = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(k) +
                                       static_cast<std::uint64_t>(sp);
          auto key = [&](std::size_t row) { return counter_hash(cfg.seed, stream, row); };
          std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(cfg.sample_cap) - 1,
                           cand.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
          cand.resize(cfg.sample_cap);
          std::sort(cand.begin(), cand.end());
        }
        units_.push_back(static_cast<std::uint32_t>(i));
        for (std::size_t r : cand) samples_.push_back(static_cast<std::uint32_t>(r));
        offsets_.push_back(samples_.size());
      }
    }
  }

  CfBoundPlan(const Dataset& train, const MetricConfig& cfg) : CfBoundPlan(train, train, cfg) {}

  const MetricConfig& config() const noexcept { return cfg_; }
  std::size_t pairs() const noexcept { return units_.size(); }
  std::size_t unit(std::size_t q) const { return units_[q]; }
  std::span<const std::uint32_t> sample(std::size_t q) const {
    return {samples_.data() + offsets_[q], offsets_[q + 1] - offsets_[q]};
  }
  std::size_t fallbacks() const noexcept { return fallbacks_; }

 private:
  MetricConfig cfg_;
  std::vector<std::uint32_t> units_;
  std::vector<std::uint32_t> samples_;
  std::vector<std::size_t> offsets_;
  std::size_t fallbacks_ = 0;
};

// max over units i and groups s' != s_i of |p_bar(s') - p(s_i, a_i)|, p_bar
// the mean score of the sampled group-s' training peers.
template <Scorer P>
double cf_bound(const P& pred, const Dataset& train, const Dataset& units, const CfBoundPlan& plan) {
  std::vector<double> peer(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) peer[i] = pred.score(train.group(i), train.attrs(i));
  std::vector<double> own(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) own[i] = pred.score(units.group(i), units.attrs(i));
  double best = 0.0;
  for (std::size_t q = 0; q < plan.pairs(); ++q) {
    const auto peers = plan.sample(q);
    CompensatedSum acc;
    for (std::uint32_t r : peers) acc.add(peer[r]);
    const double mean = acc.value() / static_cast<double>(peers.size());
    best = std::max(best, std::abs(mean - own[plan.unit(q)]));
  }
  return best;
}

template <Scorer P>
double cf_bound(const P& pred, const Dataset& train, const MetricConfig& cfg) {
  return cf_bound(pred, train, train, CfBoundPlan(train, cfg));
}

template <Scorer P>
double cf_bound(const P& pred, const Dataset& train, const Dataset& units, const MetricConfig& cfg) {
  return cf_bound(pred, train, units, CfBoundPlan(train, units, cfg));
}

}  // namespace flap
