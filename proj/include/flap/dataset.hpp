#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flap/errors.hpp"
#include "flap/rng.hpp"

namespace flap {

// Sensitive groups are small contiguous ids 0..K-1 with display labels.
class GroupTable {
 public:
  GroupTable() = default;
  explicit GroupTable(std::vector<std::string> labels)
      : labels_(std::move(labels)) {
    if (labels_.empty()) throw ValueError("group table needs at least one group");
  }

  static GroupTable numbered(int k) {
    std::vector<std::string> labels;
    for (int s = 0; s < k; ++s) labels.push_back(std::to_string(s));
    return GroupTable(std::move(labels));
  }

  int size() const noexcept { return static_cast<int>(labels_.size()); }
  const std::string& label(int s) const { return labels_.at(static_cast<std::size_t>(s)); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  int find(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return static_cast<int>(i);
    return -1;
  }

  friend bool operator==(const GroupTable&, const GroupTable&) = default;

 private:
  std::vector<std::string> labels_;
};

enum class ColumnKind { continuous, discrete, indicator };

struct AttributeColumn {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  // Indicator columns of one categorical variable share a block name.
  std::string block;

  friend bool operator==(const AttributeColumn&, const AttributeColumn&) = default;
};

// Immutable decision dataset: rows of (group, attribute vector, 0/1 decision).
// Attributes are stored row-major.
class Dataset {
 public:
  Dataset() = default;

  Dataset(GroupTable groups, std::vector<AttributeColumn> columns,
          std::vector<int> group_ids, std::vector<double> attrs,
          std::vector<int> decisions)
      : groups_(std::move(groups)),
        columns_(std::move(columns)),
        group_ids_(std::move(group_ids)),
        attrs_(std::move(attrs)),
        decisions_(std::move(decisions)) {
    validate();
  }

  std::size_t size() const noexcept { return group_ids_.size(); }
  std::size_t dim() const noexcept { return columns_.size(); }
  int group_count() const noexcept { return groups_.size(); }

  const GroupTable& groups() const noexcept { return groups_; }
  const std::vector<AttributeColumn>& columns() const noexcept { return columns_; }

  int group(std::size_t i) const { return group_ids_[i]; }
  int decision(std::size_t i) const { return decisions_[i]; }
  std::span<const double> attrs(std::size_t i) const {
    return {attrs_.data() + i * dim(), dim()};
  }
  double attr(std::size_t i, std::size_t j) const { return attrs_[i * dim() + j]; }

  std::span<const int> group_ids() const noexcept { return group_ids_; }
  std::span<const int> decisions() const noexcept { return decisions_; }
  std::span<const double> attribute_data() const noexcept { return attrs_; }

  const std::vector<std::size_t>& group_sizes() const noexcept { return sizes_; }
  std::size_t min_group_size() const {
    return *std::min_element(sizes_.begin(), sizes_.end());
  }

  // Empirical p.m.f. of the sensitive attribute.
  std::vector<double> group_probabilities() const {
    std::vector<double> p(sizes_.size());
    for (std::size_t s = 0; s < p.size(); ++s)
      p[s] = static_cast<double>(sizes_[s]) / static_cast<double>(size());
    return p;
  }

  // Row indices of each group, in dataset order.
  std::vector<std::vector<std::size_t>> group_rows() const {
    std::vector<std::vector<std::size_t>> rows(sizes_.size());
    for (std::size_t i = 0; i < size(); ++i)
      rows[static_cast<std::size_t>(group_ids_[i])].push_back(i);
    return rows;
  }

  // Rows at `idx`, in the given order. Throws EmptyGroupError if a group ends
  // up with no rows.
  Dataset subset(std::span<const std::size_t> idx) const {
    std::vector<int> g;
    std::vector<double> a;
    std::vector<int> y;
    g.reserve(idx.size());
    a.reserve(idx.size() * dim());
    y.reserve(idx.size());
    for (std::size_t i : idx) {
      g.push_back(group_ids_.at(i));
      const auto row = attrs(i);
      a.insert(a.end(), row.begin(), row.end());
      y.push_back(decisions_[i]);
    }
    return Dataset(groups_, columns_, std::move(g), std::move(a), std::move(y));
  }

  // Same rows with a new attribute matrix (e.g. after preprocessing).
  Dataset with_attributes(std::vector<double> attrs) const {
    return Dataset(groups_, columns_, group_ids_, std::move(attrs), decisions_);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.groups_ == b.groups_ && a.columns_ == b.columns_ &&
           a.group_ids_ == b.group_ids_ && a.attrs_ == b.attrs_ &&
           a.decisions_ == b.decisions_;
  }

 private:
  void validate() {
    const std::size_t n = group_ids_.size();
    if (decisions_.size() != n)
      throw ValueError("decision count does not match row count");
    if (attrs_.size() != n * columns_.size())
      throw ValueError("attribute matrix does not match rows x columns");
    const int k = groups_.size();
    if (k < 1) throw ValueError("dataset needs a group table");
    sizes_.assign(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (group_ids_[i] < 0 || group_ids_[i] >= k)
        throw ValueError("row " + std::to_string(i) + " has group id outside the table");
      if (decisions_[i] != 0 && decisions_[i] != 1)
        throw ValueError("row " + std::to_string(i) + " has a non-binary decision");
      ++sizes_[static_cast<std::size_t>(group_ids_[i])];
    }
    for (int s = 0; s < k; ++s)
      if (sizes_[static_cast<std::size_t>(s)] == 0)
        throw EmptyGroupError("group '" + groups_.label(s) + "' has no rows");
    check_indicator_blocks();
  }

  void check_indicator_blocks() const {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> blocks;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].kind != ColumnKind::indicator) continue;
      auto it = std::find_if(blocks.begin(), blocks.end(),
                             [&](const auto& b) { return b.first == columns_[j].block; });
      if (it == blocks.end())
        blocks.push_back({columns_[j].block, {j}});
      else
        it->second.push_back(j);
    }
    for (const auto& [name, cols] : blocks) {
      for (std::size_t i = 0; i < size(); ++i) {
        double sum = 0;
        for (std::size_t j : cols) {
          const double v = attr(i, j);
          if (v != 0.0 && v != 1.0)
            throw ValueError("indicator column '" + columns_[j].name + "' is not 0/1");
          sum += v;
        }
        if (sum != 1.0)
          throw ValueError("one-hot block '" + name + "' does not sum to 1 in row " +
                           std::to_string(i));
      }
    }
  }

  GroupTable groups_;
  std::vector<AttributeColumn> columns_;
  std::vector<int> group_ids_;
  std::vector<double> attrs_;
  std::vector<int> decisions_;
  std::vector<std::size_t> sizes_;
};

// Deterministic random train/test partition. Row order inside each part
// follows the input. Both parts must keep every group non-empty.
inline std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t test_n,
                                         std::uint64_t seed) {
  const std::size_t n = data.size();
  if (test_n == 0 || test_n >= n)
    throw ValueError("split needs 0 < test_n < n (n=" + std::to_string(n) + ")");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, 0x5b1);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_n));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(test_n), perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  try {
    return {data.subset(train), data.subset(test)};
  } catch (const EmptyGroupError& e) {
    throw EmptyGroupError(std::string("split leaves a group empty (merge groups or re-seed): ") +
                          e.what());
  }
}

}  // namespace flap
