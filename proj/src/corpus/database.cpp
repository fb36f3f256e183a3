#include "ctxsql/corpus/database.hpp"

#include <fstream>

#include "ctxsql/common.hpp"

namespace ctxsql::corpus {

std::optional<std::size_t> Table::column_index(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == column) return i;
  }
  return std::nullopt;
}

const Table* Database::find_table(const std::string& name) const {
  auto it = tables.find(name);
  return it == tables.end() ? nullptr : &it->second;
}

const char* column_type_name(ColumnType type) {
  return type == ColumnType::Int ? "int" : "text";
}

std::string value_to_string(const Value& value) {
  if (std::holds_alternative<std::int64_t>(value)) return std::to_string(std::get<std::int64_t>(value));
  if (std::holds_alternative<std::string>(value)) return std::get<std::string>(value);
  return "NULL";
}

nlohmann::ordered_json database_to_json(const Database& db) {
  nlohmann::ordered_json tables = nlohmann::ordered_json::object();
  for (const auto& [name, table] : db.tables) {
    nlohmann::ordered_json columns = nlohmann::ordered_json::array();
    for (const auto& col : table.columns) {
      columns.push_back({{"name", col.name}, {"type", column_type_name(col.type)}});
    }
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
      nlohmann::ordered_json r = nlohmann::ordered_json::array();
      for (const auto& v : row) {
        if (std::holds_alternative<std::int64_t>(v)) {
          r.push_back(std::get<std::int64_t>(v));
        } else if (std::holds_alternative<std::string>(v)) {
          r.push_back(std::get<std::string>(v));
        } else {
          r.push_back(nullptr);
        }
      }
      rows.push_back(std::move(r));
    }
    tables[name] = {{"columns", std::move(columns)}, {"rows", std::move(rows)}};
  }
  nlohmann::ordered_json entities = nlohmann::ordered_json::array();
  for (const auto& e : db.entity_columns) {
    nlohmann::ordered_json item = {{"table", e.table}, {"column", e.column}, {"entity_type", e.entity_type}};
    if (!e.surface_column.empty()) item["surface_column"] = e.surface_column;
    entities.push_back(std::move(item));
  }
  return {{"tables", std::move(tables)}, {"entity_columns", std::move(entities)}};
}

Database database_from_json(const nlohmann::json& doc) {
  Database db;
  try {
    for (const auto& [name, tj] : doc.at("tables").items()) {
      Table table;
      table.name = name;
      for (const auto& cj : tj.at("columns")) {
        Column col;
        col.name = cj.at("name").get<std::string>();
        auto type = cj.at("type").get<std::string>();
        if (type == "int") {
          col.type = ColumnType::Int;
        } else if (type == "text") {
          col.type = ColumnType::Text;
        } else {
          throw DataError("table '" + name + "': unknown column type '" + type + "'");
        }
        table.columns.push_back(std::move(col));
      }
      for (const auto& rj : tj.at("rows")) {
        if (rj.size() != table.columns.size()) {
          throw DataError("table '" + name + "': row width does not match column count");
        }
        std::vector<Value> row;
        for (std::size_t i = 0; i < rj.size(); ++i) {
          const auto& v = rj[i];
          if (v.is_null()) {
            row.emplace_back(std::monostate{});
          } else if (table.columns[i].type == ColumnType::Int) {
            row.emplace_back(v.get<std::int64_t>());
          } else {
            row.emplace_back(v.get<std::string>());
          }
        }
        table.rows.push_back(std::move(row));
      }
      db.tables.emplace(name, std::move(table));
    }
    if (doc.contains("entity_columns")) {
      for (const auto& ej : doc.at("entity_columns")) {
        EntityColumn e;
        e.table = ej.at("table").get<std::string>();
        e.column = ej.at("column").get<std::string>();
        e.entity_type = ej.at("entity_type").get<std::string>();
        if (ej.contains("surface_column")) e.surface_column = ej.at("surface_column").get<std::string>();
        const Table* t = db.find_table(e.table);
        if (!t || !t->column_index(e.column) ||
            (!e.surface_column.empty() && !t->column_index(e.surface_column))) {
          throw DataError("entity column " + e.table + "." + e.column + " does not exist");
        }
        db.entity_columns.push_back(std::move(e));
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed database document: ") + ex.what());
  }
  return db;
}

Database load_database(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open database file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("database file '" + path + "': " + ex.what());
  }
  return database_from_json(doc);
}

void save_database(const Database& db, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write database file '" + path + "'");
  out << database_to_json(db).dump() << '\n';
}

}  // namespace ctxsql::corpus
