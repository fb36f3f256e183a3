#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace ctxsql::corpus {

enum class ColumnType { Int, Text };

// A cell value. monostate is SQL NULL (only produced by aggregates over
// empty relations).
using Value = std::variant<std::monostate, std::int64_t, std::string>;

struct Column {
  std::string name;
  ColumnType type = ColumnType::Text;
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  std::vector<std::vector<Value>> rows;

  std::optional<std::size_t> column_index(const std::string& column) const;
};

// A column whose values are nameable entities. When surface_column is set,
// natural-language forms are read from that column of the same row while
// the SQL literal comes from `column` (e.g. airline names vs. codes).
struct EntityColumn {
  std::string table;
  std::string column;
  std::string entity_type;
  std::string surface_column;
};

struct Database {
  std::map<std::string, Table> tables;
  std::vector<EntityColumn> entity_columns;

  const Table* find_table(const std::string& name) const;
};

nlohmann::ordered_json database_to_json(const Database& db);
Database database_from_json(const nlohmann::json& doc);
Database load_database(const std::string& path);
void save_database(const Database& db, const std::string& path);

std::string value_to_string(const Value& value);
const char* column_type_name(ColumnType type);

}  // namespace ctxsql::corpus
