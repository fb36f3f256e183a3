#pragma once

#include <string>
#include <vector>

#include "ctxsql/corpus/database.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::sqlkit {

using corpus::Value;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
  bool execution_failed = false;
  std::string error;  // diagnostic when execution_failed
};

// Evaluates a tokenized query against the database. Never throws for bad
// queries: syntax or schema errors yield execution_failed = true.
ResultTable execute(const std::vector<std::string>& tokens, const corpus::Database& db);

// True iff the query parses, references only existing tables/columns and
// compares type-compatible operands.
bool follows_schema(const std::vector<std::string>& tokens, const corpus::Database& db);

enum class CompareMode { Strict, Relaxed };

// Rows compared as multisets, columns positionally.
bool tables_equal(const ResultTable& x, const ResultTable& y);
bool compare_tables(const ResultTable& predicted, const std::vector<ResultTable>& references, CompareMode mode);

}  // namespace ctxsql::sqlkit
