#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ctxsql/common.hpp"

namespace ctxsql::sqlkit {

class SqlTokenizeError : public Error {
 public:
  SqlTokenizeError(const std::string& message, std::size_t offset)
      : Error(message + " at character " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class SqlParseError : public Error {
 public:
  SqlParseError(const std::string& message, std::size_t token_index)
      : Error(message + " at token " + std::to_string(token_index)), token_index_(token_index) {}
  std::size_t token_index() const { return token_index_; }

 private:
  std::size_t token_index_;
};

// Splits SQL text into tokens. Parentheses, commas, semicolons, `*` and
// comparison operators are standalone tokens; quoted literals stay whole;
// keywords are upper-cased and identifiers preserved.
std::vector<std::string> tokenize_sql(std::string_view text);

// Single space between tokens.
std::string serialize_sql(const std::vector<std::string>& tokens);

bool is_placeholder(std::string_view token);       // TYPE#k, e.g. CITY#1
bool is_segment_reference(std::string_view token);  // SEGMENT#k
std::string placeholder_type(std::string_view token);

enum class NodeKind {
  Select,       // a SELECT statement; span includes wrapping parentheses
  Projection,   // [DISTINCT] select-list FROM tables
  Where,        // WHERE keyword and its condition
  AndList,      // n-ary conjunction
  OrList,       // n-ary disjunction
  Condition,    // comparison; value holds the operator
  InSubquery,   // col [NOT] IN ( SELECT ... )
  Aggregate,    // MIN/MAX/COUNT ( ... ); value holds the function
  Column,
  Literal,
  Placeholder,
};

const char* node_kind_name(NodeKind kind);

struct SqlNode {
  NodeKind kind = NodeKind::Select;
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
  std::string value;
  bool distinct = false;
  std::vector<std::string> tables;  // Projection only
  std::vector<SqlNode> children;

  std::size_t width() const { return end - begin; }
};

// Parses a tokenized query of the SQL subset. A trailing ';' is accepted
// after the top-level statement.
SqlNode parse_sql(const std::vector<std::string>& tokens);

}  // namespace ctxsql::sqlkit
