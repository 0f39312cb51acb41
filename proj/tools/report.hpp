#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace embshift::cli {

struct ReportRecord {
  std::string command;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, double>> results;
  std::vector<std::string> findings;
  std::uint64_t seed = 0;

  void add(std::string key, double value) { results.emplace_back(std::move(key), value); }
  /// Throws std::out_of_range for a missing key.
  double result(const std::string &key) const;

  bool operator==(const ReportRecord &) const = default;
};

std::string to_text(const ReportRecord &r);
nlohmann::ordered_json to_json(const ReportRecord &r);
/// Throws std::invalid_argument on a malformed document.
ReportRecord from_json(const nlohmann::ordered_json &j);

} // namespace embshift::cli
