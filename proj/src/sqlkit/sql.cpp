#include "ctxsql/sqlkit/sql.hpp"

#include <array>
#include <cctype>

namespace ctxsql::sqlkit {

namespace {

constexpr std::array<std::string_view, 17> kKeywords = {
    "SELECT", "DISTINCT", "FROM", "WHERE", "AND",  "OR",   "NOT",     "IN",  "MIN",
    "MAX",    "COUNT",    "IS",   "NULL",  "LIKE", "AS",   "BETWEEN", "ALL"};

bool is_keyword(std::string_view upper) {
  for (auto k : kKeywords) {
    if (k == upper) return true;
  }
  return false;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '#' || c == '-' ||
         c == ':';
}

bool is_comparison(std::string_view t) {
  return t == "=" || t == "!=" || t == "<>" || t == "<" || t == ">" || t == "<=" || t == ">=";
}

bool is_number(std::string_view t) {
  std::size_t i = 0;
  if (!t.empty() && t[0] == '-') i = 1;
  if (i >= t.size()) return false;
  bool dot = false;
  for (; i < t.size(); ++i) {
    if (t[i] == '.' && !dot) {
      dot = true;
    } else if (!std::isdigit(static_cast<unsigned char>(t[i]))) {
      return false;
    }
  }
  return true;
}

bool is_identifier(std::string_view t) {
  if (t.empty() || !(std::isalpha(static_cast<unsigned char>(t[0])) || t[0] == '_')) return false;
  for (char c : t) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return !is_keyword(to_upper(t));
}

class Parser {
 public:
  explicit Parser(const std::vector<std::string>& tokens) : tokens_(tokens) {}

  SqlNode parse_query() {
    SqlNode stmt = statement();
    if (peek() == ";") ++pos_;
    if (pos_ != tokens_.size()) fail("unexpected token '" + tokens_[pos_] + "'");
    return stmt;
  }

 private:
  const std::vector<std::string>& tokens_;
  std::size_t pos_ = 0;

  std::string_view peek(std::size_t ahead = 0) const {
    return pos_ + ahead < tokens_.size() ? std::string_view(tokens_[pos_ + ahead]) : std::string_view();
  }

  [[noreturn]] void fail(const std::string& message) const { throw SqlParseError(message, pos_); }

  void expect(std::string_view token) {
    if (peek() != token) {
      fail(pos_ < tokens_.size() ? "expected '" + std::string(token) + "', found '" + tokens_[pos_] + "'"
                                 : "expected '" + std::string(token) + "', found end of query");
    }
    ++pos_;
  }

  SqlNode statement() {
    if (peek() == "(") {
      std::size_t open = pos_++;
      SqlNode inner = statement();
      expect(")");
      inner.begin = open;
      inner.end = pos_;
      return inner;
    }
    return select();
  }

  SqlNode select() {
    SqlNode node;
    node.kind = NodeKind::Select;
    node.begin = pos_;
    expect("SELECT");
    SqlNode proj;
    proj.kind = NodeKind::Projection;
    proj.begin = pos_;
    if (peek() == "DISTINCT") {
      proj.distinct = true;
      node.distinct = true;
      ++pos_;
    }
    proj.children.push_back(select_item());
    while (peek() == ",") {
      ++pos_;
      proj.children.push_back(select_item());
    }
    expect("FROM");
    proj.tables.push_back(identifier());
    while (peek() == ",") {
      ++pos_;
      proj.tables.push_back(identifier());
    }
    proj.end = pos_;
    node.children.push_back(std::move(proj));
    if (peek() == "WHERE") {
      SqlNode where;
      where.kind = NodeKind::Where;
      where.begin = pos_++;
      where.children.push_back(condition());
      where.end = pos_;
      node.children.push_back(std::move(where));
    }
    node.end = pos_;
    return node;
  }

  std::string identifier() {
    if (!is_identifier(peek())) fail(pos_ < tokens_.size() ? "expected identifier, found '" + tokens_[pos_] + "'"
                                                          : "expected identifier, found end of query");
    return tokens_[pos_++];
  }

  SqlNode column() {
    SqlNode node;
    node.kind = NodeKind::Column;
    node.begin = pos_;
    node.value = identifier();
    node.end = pos_;
    return node;
  }

  SqlNode select_item() {
    auto t = peek();
    if (t == "*") {
      SqlNode node;
      node.kind = NodeKind::Column;
      node.begin = pos_;
      node.value = "*";
      node.end = ++pos_;
      return node;
    }
    if (t == "MIN" || t == "MAX" || t == "COUNT") {
      SqlNode node;
      node.kind = NodeKind::Aggregate;
      node.begin = pos_;
      node.value = std::string(t);
      ++pos_;
      expect("(");
      if (peek() == "DISTINCT") {
        node.distinct = true;
        ++pos_;
      }
      if (peek() == "*") {
        if (node.value != "COUNT") fail("'*' is only valid inside COUNT");
        SqlNode star;
        star.kind = NodeKind::Column;
        star.begin = pos_;
        star.value = "*";
        star.end = ++pos_;
        node.children.push_back(std::move(star));
      } else {
        node.children.push_back(column());
      }
      expect(")");
      node.end = pos_;
      return node;
    }
    return column();
  }

  SqlNode condition() {
    std::size_t begin = pos_;
    SqlNode first = conjunction();
    if (peek() != "OR") return first;
    SqlNode node;
    node.kind = NodeKind::OrList;
    node.begin = begin;
    node.children.push_back(std::move(first));
    while (peek() == "OR") {
      ++pos_;
      node.children.push_back(conjunction());
    }
    node.end = pos_;
    return node;
  }

  SqlNode conjunction() {
    std::size_t begin = pos_;
    SqlNode first = atom();
    if (peek() != "AND") return first;
    SqlNode node;
    node.kind = NodeKind::AndList;
    node.begin = begin;
    node.children.push_back(std::move(first));
    while (peek() == "AND") {
      ++pos_;
      node.children.push_back(atom());
    }
    node.end = pos_;
    return node;
  }

  SqlNode atom() {
    if (peek() == "(") {
      if (peek(1) == "SELECT") fail("subquery is not a condition");
      std::size_t open = pos_++;
      SqlNode inner = condition();
      expect(")");
      inner.begin = open;
      inner.end = pos_;
      return inner;
    }
    std::size_t begin = pos_;
    SqlNode lhs = operand(false);
    auto t = peek();
    if (t == "IN" || (t == "NOT" && peek(1) == "IN")) {
      if (lhs.kind != NodeKind::Column) fail("IN requires a column on the left");
      SqlNode node;
      node.kind = NodeKind::InSubquery;
      node.begin = begin;
      node.value = t == "NOT" ? "NOT IN" : "IN";
      pos_ += t == "NOT" ? 2 : 1;
      if (peek() != "(" || peek(1) != "SELECT") fail("IN requires a parenthesized subquery");
      node.children.push_back(std::move(lhs));
      node.children.push_back(statement());
      node.end = pos_;
      return node;
    }
    if (!is_comparison(t)) {
      fail(pos_ < tokens_.size() ? "expected comparison operator, found '" + tokens_[pos_] + "'"
                                 : "expected comparison operator, found end of query");
    }
    SqlNode node;
    node.kind = NodeKind::Condition;
    node.begin = begin;
    node.value = std::string(t);
    ++pos_;
    node.children.push_back(std::move(lhs));
    node.children.push_back(operand(true));
    node.end = pos_;
    return node;
  }

  SqlNode operand(bool allow_subquery) {
    auto t = peek();
    SqlNode node;
    node.begin = pos_;
    if (allow_subquery && t == "(" && peek(1) == "SELECT") return statement();
    if (t.empty()) fail("expected operand, found end of query");
    if (t.front() == '\'' || is_number(t)) {
      node.kind = NodeKind::Literal;
    } else if (is_placeholder(t)) {
      node.kind = NodeKind::Placeholder;
    } else if (is_identifier(t)) {
      node.kind = NodeKind::Column;
    } else {
      fail("unexpected token '" + std::string(t) + "'");
    }
    node.value = std::string(t);
    node.end = ++pos_;
    return node;
  }
};

}  // namespace

std::vector<std::string> tokenize_sql(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '\'') {
      std::size_t start = i++;
      while (true) {
        if (i >= text.size()) throw SqlTokenizeError("unterminated quoted literal", start);
        if (text[i] == '\'') {
          if (i + 1 < text.size() && text[i + 1] == '\'') {
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        ++i;
      }
      tokens.emplace_back(text.substr(start, i - start));
      continue;
    }
    if (c == '(' || c == ')' || c == ',' || c == ';' || c == '*' || c == '=') {
      tokens.emplace_back(1, c);
      ++i;
      continue;
    }
    if (c == '<' || c == '>' || c == '!') {
      if (i + 1 < text.size() && (text[i + 1] == '=' || (c == '<' && text[i + 1] == '>'))) {
        tokens.emplace_back(text.substr(i, 2));
        i += 2;
      } else if (c == '!') {
        throw SqlTokenizeError("stray '!'", i);
      } else {
        tokens.emplace_back(1, c);
        ++i;
      }
      continue;
    }
    std::size_t start = i;
    while (i < text.size() && is_word_char(text[i])) ++i;
    if (i == start) {
      // Any other single character becomes its own token; the parser rejects it.
      ++i;
    }
    std::string word(text.substr(start, i - start));
    std::string upper = to_upper(word);
    tokens.push_back(is_keyword(upper) ? upper : word);
  }
  return tokens;
}

std::string serialize_sql(const std::vector<std::string>& tokens) { return join(tokens, " "); }

bool is_placeholder(std::string_view token) {
  auto hash = token.find('#');
  if (hash == std::string_view::npos || hash == 0 || hash + 1 >= token.size()) return false;
  for (std::size_t i = 0; i < hash; ++i) {
    char c = token[i];
    if (!(std::isupper(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  for (std::size_t i = hash + 1; i < token.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) return false;
  }
  return token.substr(0, hash) != "SEGMENT";
}

bool is_segment_reference(std::string_view token) {
  if (token.size() <= 8 || token.substr(0, 8) != "SEGMENT#") return false;
  for (std::size_t i = 8; i < token.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) return false;
  }
  return true;
}

std::string placeholder_type(std::string_view token) {
  auto hash = token.find('#');
  return std::string(token.substr(0, hash));
}

const char* node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Select: return "SELECT";
    case NodeKind::Projection: return "PROJECTION";
    case NodeKind::Where: return "WHERE";
    case NodeKind::AndList: return "AND_LIST";
    case NodeKind::OrList: return "OR_LIST";
    case NodeKind::Condition: return "CONDITION";
    case NodeKind::InSubquery: return "IN_SUBQUERY";
    case NodeKind::Aggregate: return "AGGREGATE";
    case NodeKind::Column: return "COLUMN";
    case NodeKind::Literal: return "LITERAL";
    case NodeKind::Placeholder: return "PLACEHOLDER";
  }
  return "?";
}

SqlNode parse_sql(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw SqlParseError("empty query", 0);
  return Parser(tokens).parse_query();
}

}  // namespace ctxsql::sqlkit
