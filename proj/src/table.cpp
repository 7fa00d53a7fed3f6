#include "nanoloc/table.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "nanoloc/errors.hpp"

namespace nanoloc {

using nlohmann::json;

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

Tolerance tolerance_from_json(const json& doc) {
  Tolerance t;
  t.abs = doc.value("abs", 0.0);
  t.rel = doc.value("rel", 0.0);
  t.statistical = doc.value("statistical", false);
  t.mean_column = doc.value("mean_column", "");
  t.sem_column = doc.value("sem_column", "");
  t.k = doc.value("k", 3.0);
  t.skip = doc.value("skip", false);
  if (t.statistical && (t.mean_column.empty() || t.sem_column.empty())) {
    throw ValidationError("tolerance", "statistical tolerance needs mean_column and sem_column");
  }
  return t;
}

json to_json(const Tolerance& t) {
  json j = {{"abs", t.abs}, {"rel", t.rel}, {"statistical", t.statistical}};
  if (t.skip) j["skip"] = true;
  if (t.statistical) {
    j["mean_column"] = t.mean_column;
    j["sem_column"] = t.sem_column;
    j["k"] = t.k;
  }
  return j;
}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw ContractViolation("table " + name + ": row has " + std::to_string(row.size()) + " cells, expected " +
                            std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t Table::column_index(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == column) return i;
  }
  throw std::out_of_range("table " + name + " has no column " + column);
}

double Table::number(std::size_t row, const std::string& column) const {
  const auto& c = rows.at(row).at(column_index(column));
  if (auto d = std::get_if<double>(&c)) return *d;
  if (auto i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  throw std::invalid_argument("table " + name + " column " + column + " is not numeric");
}

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(columns[i]);
  }
  out += "\r\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) {
              out += csv_escape(v);
            } else if constexpr (std::is_same_v<T, double>) {
              out += format_number(v);
            } else {
              out += std::to_string(v);
            }
          },
          row[i]);
    }
    out += "\r\n";
  }
  return out;
}

json Table::to_json() const {
  json rows_json = json::array();
  for (const auto& row : rows) {
    json r = json::array();
    for (const auto& c : row) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              r.push_back(std::isfinite(v) ? json(v) : json(format_number(v)));
            } else {
              r.push_back(v);
            }
          },
          c);
    }
    rows_json.push_back(std::move(r));
  }
  return {{"name", name},
          {"analog", analog},
          {"columns", columns},
          {"tolerance", nanoloc::to_json(tolerance)},
          {"rows", rows_json}};
}

Table Table::from_json(const json& doc) {
  Table t;
  try {
    t.name = doc.at("name").get<std::string>();
    t.analog = doc.value("analog", "");
    t.columns = doc.at("columns").get<std::vector<std::string>>();
    if (doc.contains("tolerance")) t.tolerance = tolerance_from_json(doc["tolerance"]);
    for (const auto& r : doc.at("rows")) {
      std::vector<Cell> row;
      for (const auto& c : r) {
        if (c.is_number_integer()) {
          row.emplace_back(c.get<std::int64_t>());
        } else if (c.is_number()) {
          row.emplace_back(c.get<double>());
        } else if (c.is_string()) {
          const auto s = c.get<std::string>();
          if (s == "nan") {
            row.emplace_back(std::nan(""));
          } else if (s == "inf" || s == "-inf") {
            row.emplace_back(s == "inf" ? HUGE_VAL : -HUGE_VAL);
          } else {
            row.emplace_back(s);
          }
        } else {
          throw ValidationError("table " + t.name, "unsupported cell type");
        }
      }
      t.add_row(std::move(row));
    }
  } catch (const json::exception& e) {
    throw ValidationError("table", e.what());
  }
  return t;
}

}  // namespace nanoloc
