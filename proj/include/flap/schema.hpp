#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flap/csv.hpp"
#include "flap/dataset.hpp"
#include "flap/errors.hpp"

namespace flap {

enum class ColumnRole { sensitive, continuous, discrete, indicator, categorical, decision, drop };

inline std::string_view role_name(ColumnRole r) {
  switch (r) {
    case ColumnRole::sensitive: return "sensitive";
    case ColumnRole::continuous: return "continuous";
    case ColumnRole::discrete: return "discrete";
    case ColumnRole::indicator: return "indicator";
    case ColumnRole::categorical: return "categorical";
    case ColumnRole::decision: return "decision";
    case ColumnRole::drop: return "drop";
  }
  return "?";
}

struct SchemaColumn {
  std::string name;
  ColumnRole role = ColumnRole::drop;
  std::string block;  // indicator columns only
};

// How CSV columns become a Dataset. The text form is a flat list of
// `keyword [name] = value` lines; see docs/schema.md for the grammar.
struct DatasetSchema {
  std::vector<SchemaColumn> columns;
  // Explicit level order for sensitive/categorical columns. Rows whose value
  // is not listed are filtered out.
  std::map<std::string, std::vector<std::string>> levels;
  // Per column: raw token -> merged level.
  std::map<std::string, std::map<std::string, std::string>> merges;
  std::vector<std::string> positive{"1"};
  std::vector<std::string> negative{"0"};
  // Categorical/sensitive columns where a missing cell is its own level.
  std::set<std::string> missing_as_level;

  const SchemaColumn* find(std::string_view name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  void validate() const {
    int decisions = 0, sensitive = 0;
    std::set<std::string> seen;
    for (const auto& c : columns) {
      if (!seen.insert(c.name).second)
        throw SchemaError("column '" + c.name + "' declared twice");
      decisions += c.role == ColumnRole::decision;
      sensitive += c.role == ColumnRole::sensitive;
    }
    if (decisions != 1) throw SchemaError("schema needs exactly one decision column");
    if (sensitive < 1) throw SchemaError("schema needs at least one sensitive column");
  }

  static DatasetSchema parse(std::string_view text) {
    DatasetSchema schema;
    schema.positive.clear();
    schema.negative.clear();
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& msg) {
      throw SchemaError("schema line " + std::to_string(line_no) + ": " + msg);
    };
    auto split_list = [](std::string_view s, char sep) {
      std::vector<std::string> out;
      std::size_t start = 0;
      for (;;) {
        const auto pos = s.find(sep, start);
        const auto item = csv::trim(s.substr(start, pos == std::string_view::npos
                                                        ? std::string_view::npos
                                                        : pos - start));
        if (!item.empty()) out.emplace_back(item);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
      }
      return out;
    };
    while (std::getline(in, line)) {
      ++line_no;
      const auto body = csv::trim(std::string_view(line).substr(0, line.find('#')));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) fail("expected 'key = value'");
      const auto lhs = csv::trim(body.substr(0, eq));
      const auto rhs = csv::trim(body.substr(eq + 1));
      const auto sp = lhs.find_first_of(" \t");
      const std::string keyword(lhs.substr(0, sp));
      const std::string name(sp == std::string_view::npos ? std::string_view{}
                                                          : csv::trim(lhs.substr(sp)));
      if (keyword == "column") {
        if (name.empty()) fail("column needs a name");
        const auto words = split_list(rhs, ' ');
        if (words.empty()) fail("column '" + name + "' needs a role");
        SchemaColumn col{name, ColumnRole::drop, {}};
        const std::string& r = words[0];
        if (r == "sensitive") col.role = ColumnRole::sensitive;
        else if (r == "continuous") col.role = ColumnRole::continuous;
        else if (r == "discrete") col.role = ColumnRole::discrete;
        else if (r == "categorical") col.role = ColumnRole::categorical;
        else if (r == "decision") col.role = ColumnRole::decision;
        else if (r == "drop") col.role = ColumnRole::drop;
        else if (r == "indicator") {
          col.role = ColumnRole::indicator;
          if (words.size() < 2) fail("indicator column '" + name + "' needs a block name");
          col.block = words[1];
        } else {
          fail("unknown role '" + r + "'");
        }
        schema.columns.push_back(std::move(col));
      } else if (keyword == "levels") {
        if (name.empty()) fail("levels needs a column name");
        schema.levels[name] = split_list(rhs, '|');
      } else if (keyword == "merge") {
        const auto arrow = rhs.find("->");
        if (name.empty() || arrow == std::string_view::npos)
          fail("merge syntax is 'merge <column> = a | b -> c'");
        const std::string target(csv::trim(rhs.substr(arrow + 2)));
        for (auto& from : split_list(rhs.substr(0, arrow), '|'))
          schema.merges[name][from] = target;
      } else if (keyword == "positive") {
        schema.positive = split_list(rhs, '|');
      } else if (keyword == "negative") {
        schema.negative = split_list(rhs, '|');
      } else if (keyword == "missing-as-level") {
        for (auto& c : split_list(rhs, ',')) schema.missing_as_level.insert(c);
      } else {
        fail("unknown keyword '" + keyword + "'");
      }
    }
    if (schema.positive.empty()) schema.positive = {"1"};
    if (schema.negative.empty()) schema.negative = {"0"};
    schema.validate();
    return schema;
  }

  static DatasetSchema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  std::string to_text() const {
    std::ostringstream out;
    for (const auto& c : columns) {
      out << "column " << c.name << " = " << role_name(c.role);
      if (c.role == ColumnRole::indicator) out << ' ' << c.block;
      out << '\n';
    }
    for (const auto& [col, lv] : levels) {
      out << "levels " << col << " =";
      for (std::size_t i = 0; i < lv.size(); ++i) out << (i ? " | " : " ") << lv[i];
      out << '\n';
    }
    for (const auto& [col, m] : merges)
      for (const auto& [from, to] : m) out << "merge " << col << " = " << from << " -> " << to << '\n';
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " | " : "") + v[i];
      return s;
    };
    out << "positive = " << join(positive) << '\n';
    out << "negative = " << join(negative) << '\n';
    if (!missing_as_level.empty()) {
      out << "missing-as-level =";
      bool first = true;
      for (const auto& c : missing_as_level) {
        out << (first ? " " : ", ") << c;
        first = false;
      }
      out << '\n';
    }
    return out.str();
  }
};

// Level lists fixed by a previous load, so a test file encodes exactly like
// its training file.
struct Encoding {
  GroupTable groups;
  std::map<std::string, std::vector<std::string>> levels;
  std::vector<AttributeColumn> columns;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;   // missing value in a used column
  std::size_t rows_filtered = 0;  // level not in the schema's level list
};

struct LoadResult {
  Dataset data;
  IngestReport report;
  Encoding encoding;
};

namespace detail {

inline bool is_missing(std::string_view v) { return v.empty() || v == "?"; }

inline bool contains(const std::vector<std::string>& v, std::string_view x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace detail

inline LoadResult load_csv(const csv::Table& table, const DatasetSchema& schema,
                           const Encoding* reference = nullptr) {
  schema.validate();
  std::vector<std::size_t> pos;
  std::vector<const SchemaColumn*> used;
  for (const auto& c : schema.columns) {
    const auto it = std::find(table.header.begin(), table.header.end(), c.name);
    if (it == table.header.end()) {
      if (c.role == ColumnRole::drop) continue;
      throw SchemaError("missing column '" + c.name + "'");
    }
    if (c.role == ColumnRole::drop) continue;
    used.push_back(&c);
    pos.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }

  LoadResult result;
  result.report.rows_read = table.rows.size();

  // Pass 1: normalize cells, drop/filter rows.
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : table.rows) {
    std::vector<std::string> vals;
    bool keep = true, filtered = false;
    for (std::size_t k = 0; k < used.size() && keep; ++k) {
      const auto& col = *used[k];
      std::string v(csv::trim(row[pos[k]]));
      if (auto m = schema.merges.find(col.name); m != schema.merges.end())
        if (auto t = m->second.find(v); t != m->second.end()) v = t->second;
      if (detail::is_missing(v)) {
        const bool as_level = schema.missing_as_level.count(col.name) &&
                              (col.role == ColumnRole::categorical ||
                               col.role == ColumnRole::sensitive);
        if (!as_level) {
          keep = false;
          break;
        }
        v = "missing";
      }
      if (auto lv = schema.levels.find(col.name); lv != schema.levels.end())
        if (!detail::contains(lv->second, v)) {
          keep = false;
          filtered = true;
          break;
        }
      vals.push_back(std::move(v));
    }
    if (!keep) {
      ++(filtered ? result.report.rows_filtered : result.report.rows_dropped);
      continue;
    }
    cells.push_back(std::move(vals));
  }

  // Level lists for categorical and sensitive columns.
  std::map<std::string, std::vector<std::string>> levels;
  for (std::size_t k = 0; k < used.size(); ++k) {
    const auto& col = *used[k];
    if (col.role != ColumnRole::categorical && col.role != ColumnRole::sensitive) continue;
    if (reference) {
      const auto it = reference->levels.find(col.name);
      if (it == reference->levels.end())
        throw SchemaError("reference encoding lacks column '" + col.name + "'");
      levels[col.name] = it->second;
    } else if (auto lv = schema.levels.find(col.name); lv != schema.levels.end()) {
      levels[col.name] = lv->second;
    } else {
      std::set<std::string> seen;
      for (const auto& r : cells) seen.insert(r[k]);
      levels[col.name] = std::vector<std::string>(seen.begin(), seen.end());
    }
  }
  auto level_index = [&](const std::string& col, const std::string& v) {
    const auto& lv = levels.at(col);
    const auto it = std::find(lv.begin(), lv.end(), v);
    if (it == lv.end())
      throw ValueError("column '" + col + "' has unknown level '" + v + "'");
    return static_cast<std::size_t>(it - lv.begin());
  };

  // Group table: cross product of sensitive levels, first column slowest.
  std::vector<std::size_t> sens_k;
  std::vector<std::size_t> radix;
  for (std::size_t k = 0; k < used.size(); ++k)
    if (used[k]->role == ColumnRole::sensitive) sens_k.push_back(k);
  std::vector<std::string> group_labels{""};
  for (std::size_t k : sens_k) {
    std::vector<std::string> next;
    for (const auto& prefix : group_labels)
      for (const auto& l : levels.at(used[k]->name))
        next.push_back(prefix.empty() ? l : prefix + "/" + l);
    group_labels = std::move(next);
  }
  GroupTable groups = reference ? reference->groups : GroupTable(group_labels);
  if (reference && groups.labels() != group_labels)
    throw SchemaError("sensitive levels differ from the reference encoding");

  // Attribute columns.
  std::vector<AttributeColumn> columns;
  for (std::size_t k = 0; k < used.size(); ++k) {
    const auto& col = *used[k];
    switch (col.role) {
      case ColumnRole::continuous: columns.push_back({col.name, ColumnKind::continuous, {}}); break;
      case ColumnRole::discrete: columns.push_back({col.name, ColumnKind::discrete, {}}); break;
      case ColumnRole::indicator: columns.push_back({col.name, ColumnKind::indicator, col.block}); break;
      case ColumnRole::categorical:
        for (const auto& l : levels.at(col.name))
          columns.push_back({col.name + "=" + l, ColumnKind::indicator, col.name});
        break;
      default: break;
    }
  }

  std::vector<int> gid;
  std::vector<double> attrs;
  std::vector<int> y;
  gid.reserve(cells.size());
  y.reserve(cells.size());
  attrs.reserve(cells.size() * columns.size());
  for (const auto& r : cells) {
    std::size_t g = 0;
    for (std::size_t k : sens_k)
      g = g * levels.at(used[k]->name).size() + level_index(used[k]->name, r[k]);
    gid.push_back(static_cast<int>(g));
    for (std::size_t k = 0; k < used.size(); ++k) {
      const auto& col = *used[k];
      switch (col.role) {
        case ColumnRole::continuous:
        case ColumnRole::discrete:
        case ColumnRole::indicator: {
          double v;
          if (!csv::parse_double(r[k], v))
            throw ValueError("column '" + col.name + "' has non-numeric value '" + r[k] + "'");
          attrs.push_back(v);
          break;
        }
        case ColumnRole::categorical: {
          const std::size_t idx = level_index(col.name, r[k]);
          const std::size_t m = levels.at(col.name).size();
          for (std::size_t l = 0; l < m; ++l) attrs.push_back(l == idx ? 1.0 : 0.0);
          break;
        }
        case ColumnRole::decision:
          if (detail::contains(schema.positive, r[k]))
            y.push_back(1);
          else if (detail::contains(schema.negative, r[k]))
            y.push_back(0);
          else
            throw ValueError("decision column '" + col.name + "' has non-binary value '" +
                             r[k] + "'");
          break;
        default: break;
      }
    }
  }

  result.data = Dataset(groups, columns, std::move(gid), std::move(attrs), std::move(y));
  result.encoding = Encoding{std::move(groups), std::move(levels), std::move(columns)};
  return result;
}

inline LoadResult load_csv(const std::string& path, const DatasetSchema& schema,
                           const Encoding* reference = nullptr) {
  return load_csv(csv::read_file(path), schema, reference);
}

// Schema that reloads a file written by write_csv into an identical Dataset.
inline DatasetSchema native_schema(const Dataset& data) {
  DatasetSchema s;
  s.columns.push_back({"group", ColumnRole::sensitive, {}});
  for (const auto& c : data.columns()) {
    ColumnRole r = c.kind == ColumnKind::indicator ? ColumnRole::indicator
                   : c.kind == ColumnKind::discrete ? ColumnRole::discrete
                                                    : ColumnRole::continuous;
    s.columns.push_back({c.name, r, c.block});
  }
  s.columns.push_back({"decision", ColumnRole::decision, {}});
  s.levels["group"] = data.groups().labels();
  return s;
}

inline void write_csv(const Dataset& data, std::ostream& out) {
  out << "group";
  for (const auto& c : data.columns()) out << ',' << csv::quote(c.name);
  out << ",decision\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << csv::quote(data.groups().label(data.group(i)));
    for (double v : data.attrs(i)) out << ',' << csv::format_double(v);
    out << ',' << data.decision(i) << '\n';
  }
}

inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(data, out);
}

}  // namespace flap
