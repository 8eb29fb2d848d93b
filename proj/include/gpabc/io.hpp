#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace gpabc {

/// Numeric table with named columns. Values are written with 17 significant
/// digits so a write/read round trip is exact.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
};

void write_csv(const std::string& path, const Table& table);
Table read_csv(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// Appends one compact JSON object per line.
void append_jsonl(const std::string& path, const nlohmann::json& j);
std::vector<nlohmann::json> read_jsonl(const std::string& path);

}  // namespace gpabc
