#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flap/csv.hpp"
#include "flap/dataset.hpp"
#include "flap/errors.hpp"
#include "flap/numeric.hpp"

namespace flap {

// Per-group and overall attribute means plus the empirical p.m.f. of S.
struct GroupMoments {
  std::size_t dim = 0;
  std::vector<std::vector<double>> group_means;  // [s][j]
  std::vector<double> overall_mean;              // [j]
  std::vector<double> group_probs;               // [s]

  static GroupMoments fit(const Dataset& data) {
    GroupMoments m;
    m.dim = data.dim();
    const int k = data.group_count();
    std::vector<std::vector<CompensatedSum>> sums(static_cast<std::size_t>(k),
                                                  std::vector<CompensatedSum>(m.dim));
    std::vector<CompensatedSum> total(m.dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto row = data.attrs(i);
      auto& gs = sums[static_cast<std::size_t>(data.group(i))];
      for (std::size_t j = 0; j < m.dim; ++j) {
        gs[j].add(row[j]);
        total[j].add(row[j]);
      }
    }
    const auto& sizes = data.group_sizes();
    m.group_means.assign(static_cast<std::size_t>(k), std::vector<double>(m.dim));
    m.overall_mean.resize(m.dim);
    for (int s = 0; s < k; ++s)
      for (std::size_t j = 0; j < m.dim; ++j)
        m.group_means[s][j] = sums[s][j].value() / static_cast<double>(sizes[s]);
    for (std::size_t j = 0; j < m.dim; ++j)
      m.overall_mean[j] = total[j].value() / static_cast<double>(data.size());
    m.group_probs = data.group_probabilities();
    return m;
  }
};

// Empirical marginal CDF of one coordinate within one group: sorted distinct
// values with the count of observations <= each value.
struct StepCdf {
  std::vector<double> values;
  std::vector<std::size_t> counts;  // cumulative, counts.back() == n
  std::size_t n = 0;

  static StepCdf fit(std::vector<double> xs) {
    StepCdf f;
    std::sort(xs.begin(), xs.end());
    f.n = xs.size();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (f.values.empty() || xs[i] != f.values.back()) {
        f.values.push_back(xs[i]);
        f.counts.push_back(i + 1);
      } else {
        f.counts.back() = i + 1;
      }
    }
    return f;
  }

  // Level k/n as a double. Equal rationals always round to the same double,
  // which keeps cross-group comparisons exact.
  double level(std::size_t idx) const {
    return static_cast<double>(counts[idx]) / static_cast<double>(n);
  }

  // P_n(X <= x), right-continuous.
  double eval(double x) const {
    const auto it = std::upper_bound(values.begin(), values.end(), x);
    if (it == values.begin()) return 0.0;
    return level(static_cast<std::size_t>(it - values.begin()) - 1);
  }

  // inf{x : P_n(X <= x) >= z} for z in (0, 1].
  double inverse(double z) const {
    if (!(z > 0.0) || z > 1.0) throw DomainError("ECDF inverse needs z in (0, 1]");
    std::size_t lo = 0, hi = values.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (level(mid) >= z)
        hi = mid;
      else
        lo = mid + 1;
    }
    return values[lo];
  }
};

// Per-group, per-coordinate empirical CDFs.
struct GroupEcdf {
  std::vector<std::vector<StepCdf>> cdfs;  // [s][j]
  std::vector<double> group_probs;

  static GroupEcdf fit(const Dataset& data) {
    GroupEcdf g;
    const auto rows = data.group_rows();
    g.cdfs.resize(rows.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
      for (std::size_t j = 0; j < data.dim(); ++j) {
        std::vector<double> xs;
        xs.reserve(rows[s].size());
        for (std::size_t i : rows[s]) xs.push_back(data.attr(i, j));
        g.cdfs[s].push_back(StepCdf::fit(std::move(xs)));
      }
    }
    g.group_probs = data.group_probabilities();
    return g;
  }

  const StepCdf& at(int s, std::size_t j) const {
    return cdfs.at(static_cast<std::size_t>(s)).at(j);
  }
};

inline double ecdf_eval(const GroupEcdf& g, int s, std::size_t j, double x) {
  return g.at(s, j).eval(x);
}

inline double ecdf_inverse(const GroupEcdf& g, int s, std::size_t j, double z) {
  return g.at(s, j).inverse(z);
}

enum class PreprocessKind { orthogonalization, marginal_mapping };

inline std::string_view kind_name(PreprocessKind k) {
  return k == PreprocessKind::orthogonalization ? "orthogonalization" : "marginal-mapping";
}

// Treatment of test values outside a group's training range under marginal
// mapping. `clamp` keeps the level at the first step below the minimum (and
// at 1 above the maximum, which the ECDF does anyway); `reject` throws.
enum class OutOfRange { clamp, reject };

// A fitted map (s, a) -> a' learned from a training set.
class Preprocessor {
 public:
  Preprocessor() = default;

  static Preprocessor orthogonalization(const Dataset& train) {
    Preprocessor p;
    p.kind_ = PreprocessKind::orthogonalization;
    p.groups_ = train.groups();
    p.dim_ = train.dim();
    p.state_ = GroupMoments::fit(train);
    return p;
  }

  static Preprocessor marginal_mapping(const Dataset& train,
                                       OutOfRange policy = OutOfRange::clamp) {
    Preprocessor p;
    p.kind_ = PreprocessKind::marginal_mapping;
    p.groups_ = train.groups();
    p.dim_ = train.dim();
    p.policy_ = policy;
    p.state_ = GroupEcdf::fit(train);
    return p;
  }

  PreprocessKind kind() const noexcept { return kind_; }
  const GroupTable& groups() const noexcept { return groups_; }
  int group_count() const noexcept { return groups_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  OutOfRange out_of_range() const noexcept { return policy_; }

  const GroupMoments& moments() const {
    if (kind_ != PreprocessKind::orthogonalization)
      throw KindError("preprocessor has no group moments");
    return std::get<GroupMoments>(state_);
  }
  const GroupEcdf& ecdf() const {
    if (kind_ != PreprocessKind::marginal_mapping)
      throw KindError("preprocessor has no group ECDFs");
    return std::get<GroupEcdf>(state_);
  }

  const std::vector<double>& group_probs() const {
    return kind_ == PreprocessKind::orthogonalization ? moments().group_probs
                                                      : ecdf().group_probs;
  }

  // a' = sum_s a_hat(s) P_n(S = s).
  std::vector<double> apply(int s_star, std::span<const double> a_star) const {
    std::vector<double> out(dim_);
    apply_into(s_star, a_star, out);
    return out;
  }

  void apply_into(int s_star, std::span<const double> a_star, std::span<double> out) const {
    check(s_star, a_star);
    if (kind_ == PreprocessKind::orthogonalization) {
      const auto& m = moments();
      for (std::size_t j = 0; j < dim_; ++j)
        out[j] = a_star[j] - m.group_means[s_star][j] + m.overall_mean[j];
      return;
    }
    const auto& g = ecdf();
    for (std::size_t j = 0; j < dim_; ++j) {
      const double z = level(s_star, j, a_star[j]);
      CompensatedSum acc;
      for (int s = 0; s < group_count(); ++s)
        acc.add(g.at(s, j).inverse(z) * g.group_probs[static_cast<std::size_t>(s)]);
      out[j] = acc.value();
    }
  }

  // Processed attribute matrix of a whole dataset (row-major).
  std::vector<double> apply_all(const Dataset& data) const {
    std::vector<double> out(data.size() * dim_);
    for (std::size_t i = 0; i < data.size(); ++i)
      apply_into(data.group(i), data.attrs(i), {out.data() + i * dim_, dim_});
    return out;
  }

  Dataset transform(const Dataset& data) const { return data.with_attributes(apply_all(data)); }

  // Counterfactual attribute a_hat(target) of a unit observed at (s*, a*):
  // coordinate-wise quantile matching from group s* into group `target`.
  std::vector<double> counterfactual(int target, int s_star, std::span<const double> a_star) const {
    if (kind_ != PreprocessKind::marginal_mapping)
      throw KindError("counterfactual_attr needs a marginal-mapping preprocessor");
    check(s_star, a_star);
    check_group(target);
    const auto& g = ecdf();
    std::vector<double> out(dim_);
    for (std::size_t j = 0; j < dim_; ++j) out[j] = g.at(target, j).inverse(level(s_star, j, a_star[j]));
    return out;
  }

  // Mean-shift counterfactual a* - E_n(A|s*) + E_n(A|target).
  std::vector<double> counterfactual_orth(int target, int s_star,
                                          std::span<const double> a_star) const {
    check(s_star, a_star);
    check_group(target);
    const auto& m = moments();
    std::vector<double> out(dim_);
    for (std::size_t j = 0; j < dim_; ++j)
      out[j] = a_star[j] - m.group_means[s_star][j] + m.group_means[target][j];
    return out;
  }

  // ---- flat-file serialization --------------------------------------------
  void save(std::ostream& out) const {
    out << "flap-preprocessor 1\n";
    out << "kind " << kind_name(kind_) << '\n';
    out << "out-of-range " << (policy_ == OutOfRange::clamp ? "clamp" : "reject") << '\n';
    out << "dim " << dim_ << '\n';
    out << "groups " << group_count() << '\n';
    for (int s = 0; s < group_count(); ++s) out << "group " << s << ' ' << groups_.label(s) << '\n';
    out << "probs";
    for (double p : group_probs()) out << ' ' << csv::format_double(p);
    out << '\n';
    if (kind_ == PreprocessKind::orthogonalization) {
      const auto& m = moments();
      for (int s = 0; s < group_count(); ++s) {
        out << "mean " << s;
        for (double v : m.group_means[s]) out << ' ' << csv::format_double(v);
        out << '\n';
      }
      out << "overall";
      for (double v : m.overall_mean) out << ' ' << csv::format_double(v);
      out << '\n';
    } else {
      const auto& g = ecdf();
      for (int s = 0; s < group_count(); ++s)
        for (std::size_t j = 0; j < dim_; ++j) {
          const auto& f = g.at(s, j);
          out << "ecdf " << s << ' ' << j << ' ' << f.n << ' ' << f.values.size();
          for (std::size_t k = 0; k < f.values.size(); ++k)
            out << ' ' << csv::format_double(f.values[k]) << ' ' << f.counts[k];
          out << '\n';
        }
    }
    out << "end\n";
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    save(out);
  }

  static Preprocessor load(std::istream& in) {
    auto fail = [](const std::string& m) -> void { throw ValueError("bad preprocessor file: " + m); };
    std::string line, word;
    if (!std::getline(in, line) || line != "flap-preprocessor 1") fail("missing header");
    Preprocessor p;
    std::vector<std::string> labels;
    int k = 0;
    GroupMoments mom;
    GroupEcdf ecdf;
    std::vector<double> probs;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      ls >> word;
      if (word == "end") break;
      if (word == "kind") {
        ls >> word;
        if (word == "orthogonalization") p.kind_ = PreprocessKind::orthogonalization;
        else if (word == "marginal-mapping") p.kind_ = PreprocessKind::marginal_mapping;
        else fail("unknown kind " + word);
      } else if (word == "out-of-range") {
        ls >> word;
        p.policy_ = word == "reject" ? OutOfRange::reject : OutOfRange::clamp;
      } else if (word == "dim") {
        ls >> p.dim_;
      } else if (word == "groups") {
        ls >> k;
        labels.assign(static_cast<std::size_t>(k), {});
        mom.group_means.assign(static_cast<std::size_t>(k), {});
        ecdf.cdfs.assign(static_cast<std::size_t>(k), std::vector<StepCdf>(p.dim_));
      } else if (word == "group") {
        int s;
        ls >> s;
        std::string rest;
        std::getline(ls, rest);
        labels.at(static_cast<std::size_t>(s)) = std::string(csv::trim(rest));
      } else if (word == "probs") {
        probs = read_doubles(ls);
      } else if (word == "mean") {
        int s;
        ls >> s;
        mom.group_means.at(static_cast<std::size_t>(s)) = read_doubles(ls);
      } else if (word == "overall") {
        mom.overall_mean = read_doubles(ls);
      } else if (word == "ecdf") {
        int s;
        std::size_t j, n, m;
        ls >> s >> j >> n >> m;
        StepCdf f;
        f.n = n;
        for (std::size_t q = 0; q < m; ++q) {
          std::string v;
          std::size_t c;
          ls >> v >> c;
          double x;
          if (!csv::parse_double(v, x)) fail("bad ecdf value");
          f.values.push_back(x);
          f.counts.push_back(c);
        }
        ecdf.cdfs.at(static_cast<std::size_t>(s)).at(j) = std::move(f);
      } else {
        fail("unknown record " + word);
      }
    }
    p.groups_ = GroupTable(labels);
    if (p.kind_ == PreprocessKind::orthogonalization) {
      mom.dim = p.dim_;
      mom.group_probs = probs;
      p.state_ = std::move(mom);
    } else {
      ecdf.group_probs = probs;
      p.state_ = std::move(ecdf);
    }
    return p;
  }

  static Preprocessor load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return load(in);
  }

 private:
  static std::vector<double> read_doubles(std::istream& in) {
    std::vector<double> out;
    std::string v;
    while (in >> v) {
      double x;
      if (!csv::parse_double(v, x)) throw ValueError("bad number '" + v + "'");
      out.push_back(x);
    }
    return out;
  }

  void check_group(int s) const {
    if (s < 0 || s >= group_count())
      throw DomainError("group id " + std::to_string(s) + " outside the fitted group table");
  }

  void check(int s, std::span<const double> a) const {
    check_group(s);
    if (a.size() != dim_) throw DomainError("attribute vector has the wrong dimension");
  }

  // ECDF level of x in group s, coordinate j, with the out-of-range rule.
  double level(int s, std::size_t j, double x) const {
    const auto& f = ecdf().at(s, j);
    const double z = f.eval(x);
    if (z > 0.0) return z;
    if (policy_ == OutOfRange::reject)
      throw DomainError("value below the training range of group '" + groups_.label(s) + "'");
    return f.level(0);
  }

  PreprocessKind kind_ = PreprocessKind::orthogonalization;
  GroupTable groups_;
  std::size_t dim_ = 0;
  OutOfRange policy_ = OutOfRange::clamp;
  std::variant<GroupMoments, GroupEcdf> state_;
};

inline Preprocessor fit_orthogonalization(const Dataset& train) {
  return Preprocessor::orthogonalization(train);
}

inline Preprocessor fit_marginal_mapping(const Dataset& train,
                                         OutOfRange policy = OutOfRange::clamp) {
  return Preprocessor::marginal_mapping(train, policy);
}

inline std::vector<double> counterfactual_attr(const Preprocessor& prep, int target, int s_star,
                                               std::span<const double> a_star) {
  return prep.counterfactual(target, s_star, a_star);
}

inline std::vector<double> counterfactual_attr_orth(const Preprocessor& prep, int target,
                                                    int s_star, std::span<const double> a_star) {
  return prep.counterfactual_orth(target, s_star, a_star);
}

}  // namespace flap
