#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flap/flap.hpp"

namespace flap::testing {

// Continuous columns a0..a{d-1}, groups numbered 0..k-1.
inline Dataset make_dataset(int k, std::size_t d, std::vector<int> g, std::vector<double> a,
                            std::vector<int> y = {}) {
  std::vector<AttributeColumn> cols;
  for (std::size_t j = 0; j < d; ++j) cols.push_back({"a" + std::to_string(j), ColumnKind::continuous, ""});
  if (y.empty()) y.assign(g.size(), 0);
  return Dataset(GroupTable::numbered(k), std::move(cols), std::move(g), std::move(a), std::move(y));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("flap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace flap::testing
