#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace nanoloc {

using Cell = std::variant<std::int64_t, double, std::string>;

/// How two versions of a table may differ before compare flags them.
struct Tolerance {
  double abs = 0.0;
  double rel = 0.0;
  // Monte-Carlo tables: compare `mean_column` within k * sqrt(sem_a^2 + sem_b^2)
  // instead of raw rows.
  bool statistical = false;
  std::string mean_column;
  std::string sem_column;
  double k = 3.0;
  // Raw per-seed listings: not compared.
  bool skip = false;
};

Tolerance tolerance_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Tolerance& tol);

struct Table {
  std::string name;
  std::string analog;  // what the table reproduces, free text
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  Tolerance tolerance;

  void add_row(std::vector<Cell> row);
  std::size_t column_index(const std::string& column) const;
  double number(std::size_t row, const std::string& column) const;

  /// RFC 4180, header row first, shortest round-trip number formatting.
  std::string to_csv() const;
  nlohmann::json to_json() const;
  static Table from_json(const nlohmann::json& doc);
};

std::string format_number(double value);
std::string csv_escape(const std::string& field);

}  // namespace nanoloc
