#include "report.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace embshift::cli {

double ReportRecord::result(const std::string &key) const {
  for (const auto &[k, v] : results)
    if (k == key)
      return v;
  throw std::out_of_range("no result named " + key);
}

std::string to_text(const ReportRecord &r) {
  std::string out = fmt::format("command: {}\nseed: {}\n", r.command, r.seed);
  if (!r.inputs.empty()) {
    out += "inputs:\n";
    for (const auto &item : r.inputs.items()) {
      const auto &v = item.value();
      out += fmt::format("  {} = {}\n", item.key(),
                         v.is_string() ? v.get<std::string>() : v.dump());
    }
  }
  if (!r.results.empty()) {
    std::size_t width = 0;
    for (const auto &kv : r.results)
      width = std::max(width, kv.first.size());
    out += "results:\n";
    for (const auto &[k, v] : r.results)
      out += fmt::format("  {:<{}}  {:.6f}\n", k, width, v);
  }
  if (!r.findings.empty()) {
    out += "findings:\n";
    for (const auto &f : r.findings)
      out += fmt::format("  - {}\n", f);
  }
  return out;
}

nlohmann::ordered_json to_json(const ReportRecord &r) {
  nlohmann::ordered_json j;
  j["command"] = r.command;
  j["seed"] = r.seed;
  j["inputs"] = r.inputs;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (const auto &[k, v] : r.results)
    results.push_back({{"name", k}, {"value", v}});
  j["results"] = results;
  j["findings"] = r.findings;
  return j;
}

ReportRecord from_json(const nlohmann::ordered_json &j) {
  try {
    ReportRecord r;
    r.command = j.at("command").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.inputs = j.at("inputs");
    for (const auto &item : j.at("results"))
      r.results.emplace_back(item.at("name").get<std::string>(), item.at("value").get<double>());
    r.findings = j.at("findings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception &e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
}

} // namespace embshift::cli
