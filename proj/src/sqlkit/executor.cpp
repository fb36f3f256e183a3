#include "ctxsql/sqlkit/executor.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <memory>
#include <optional>
#include <set>

namespace ctxsql::sqlkit {

namespace {

using corpus::ColumnType;
using corpus::Database;
using corpus::Table;

class SemanticError : public Error {
 public:
  using Error::Error;
};

struct ColRef {
  std::size_t slot = 0;  // index into the FROM list
  std::size_t column = 0;
  ColumnType type = ColumnType::Text;
};

struct CompiledSelect;

struct Operand {
  enum class Kind { Column, Constant, Subquery } kind = Kind::Constant;
  ColRef col;
  Value constant;
  ColumnType type = ColumnType::Text;
  std::unique_ptr<CompiledSelect> sub;
};

struct CompiledCond {
  enum class Kind { Compare, In, And, Or } kind = Kind::Compare;
  std::string op;
  bool negated = false;
  Operand lhs;
  Operand rhs;
  std::vector<CompiledCond> children;
};

struct CompiledItem {
  std::string function;  // empty for a plain column
  bool distinct = false;
  bool star = false;
  ColRef col;
  ColumnType type = ColumnType::Text;
  std::string name;
};

struct CompiledSelect {
  std::vector<const Table*> tables;
  std::vector<CompiledItem> items;
  bool distinct = false;
  bool aggregate = false;
  std::optional<CompiledCond> where;
};

class Compiler {
 public:
  explicit Compiler(const Database& db) : db_(db) {}

  std::unique_ptr<CompiledSelect> select(const SqlNode& node) {
    auto out = std::make_unique<CompiledSelect>();
    const SqlNode& proj = node.children.front();
    for (const auto& name : proj.tables) {
      const Table* t = db_.find_table(name);
      if (!t) throw SemanticError("unknown table '" + name + "'");
      out->tables.push_back(t);
    }
    out->distinct = proj.distinct;
    bool plain = false;
    for (const auto& item : proj.children) {
      if (item.kind == NodeKind::Aggregate) {
        CompiledItem ci;
        ci.function = item.value;
        ci.distinct = item.distinct;
        const SqlNode& arg = item.children.front();
        if (arg.value == "*") {
          ci.star = true;
          ci.type = ColumnType::Int;
          ci.name = item.value + "(*)";
        } else {
          ci.col = resolve(arg.value, out->tables);
          ci.type = ci.function == "COUNT" ? ColumnType::Int : ci.col.type;
          ci.name = item.value + "(" + arg.value + ")";
        }
        out->aggregate = true;
        out->items.push_back(std::move(ci));
      } else if (item.value == "*") {
        plain = true;
        for (std::size_t s = 0; s < out->tables.size(); ++s) {
          for (std::size_t c = 0; c < out->tables[s]->columns.size(); ++c) {
            CompiledItem ci;
            ci.col = {s, c, out->tables[s]->columns[c].type};
            ci.type = ci.col.type;
            ci.name = out->tables[s]->name + "." + out->tables[s]->columns[c].name;
            out->items.push_back(std::move(ci));
          }
        }
      } else {
        plain = true;
        CompiledItem ci;
        ci.col = resolve(item.value, out->tables);
        ci.type = ci.col.type;
        ci.name = item.value;
        out->items.push_back(std::move(ci));
      }
    }
    if (plain && out->aggregate) throw SemanticError("aggregate mixed with plain columns");
    if (node.children.size() > 1) out->where = condition(node.children[1].children.front(), out->tables);
    return out;
  }

 private:
  const Database& db_;

  static ColRef resolve(const std::string& name, const std::vector<const Table*>& tables) {
    auto dot = name.find('.');
    if (dot != std::string::npos) {
      std::string tname = name.substr(0, dot);
      std::string cname = name.substr(dot + 1);
      for (std::size_t s = 0; s < tables.size(); ++s) {
        if (tables[s]->name != tname) continue;
        auto c = tables[s]->column_index(cname);
        if (!c) throw SemanticError("unknown column '" + name + "'");
        return {s, *c, tables[s]->columns[*c].type};
      }
      throw SemanticError("table of column '" + name + "' is not in FROM");
    }
    std::optional<ColRef> found;
    for (std::size_t s = 0; s < tables.size(); ++s) {
      if (auto c = tables[s]->column_index(name)) {
        if (found) throw SemanticError("ambiguous column '" + name + "'");
        found = ColRef{s, *c, tables[s]->columns[*c].type};
      }
    }
    if (!found) throw SemanticError("unknown column '" + name + "'");
    return *found;
  }

  Operand operand(const SqlNode& node, const std::vector<const Table*>& tables) {
    Operand op;
    switch (node.kind) {
      case NodeKind::Column:
        op.kind = Operand::Kind::Column;
        op.col = resolve(node.value, tables);
        op.type = op.col.type;
        break;
      case NodeKind::Literal:
        op.kind = Operand::Kind::Constant;
        if (node.value.front() == '\'') {
          std::string text = node.value.substr(1, node.value.size() - 2);
          std::string unescaped;
          for (std::size_t i = 0; i < text.size(); ++i) {
            unescaped += text[i];
            if (text[i] == '\'' && i + 1 < text.size() && text[i + 1] == '\'') ++i;
          }
          op.constant = unescaped;
          op.type = ColumnType::Text;
        } else {
          std::int64_t v = 0;
          auto [ptr, ec] = std::from_chars(node.value.data(), node.value.data() + node.value.size(), v);
          if (ec != std::errc() || ptr != node.value.data() + node.value.size()) {
            throw SemanticError("unsupported numeric literal '" + node.value + "'");
          }
          op.constant = v;
          op.type = ColumnType::Int;
        }
        break;
      case NodeKind::Placeholder:
        throw SemanticError("unresolved placeholder '" + node.value + "'");
      case NodeKind::Select: {
        op.kind = Operand::Kind::Subquery;
        op.sub = select(node);
        if (op.sub->items.size() != 1) throw SemanticError("subquery must return one column");
        op.type = op.sub->items.front().type;
        break;
      }
      default:
        throw SemanticError("unsupported operand");
    }
    return op;
  }

  CompiledCond condition(const SqlNode& node, const std::vector<const Table*>& tables) {
    CompiledCond out;
    switch (node.kind) {
      case NodeKind::AndList:
      case NodeKind::OrList:
        out.kind = node.kind == NodeKind::AndList ? CompiledCond::Kind::And : CompiledCond::Kind::Or;
        for (const auto& child : node.children) out.children.push_back(condition(child, tables));
        break;
      case NodeKind::InSubquery:
        out.kind = CompiledCond::Kind::In;
        out.negated = node.value == "NOT IN";
        out.lhs = operand(node.children[0], tables);
        out.rhs = operand(node.children[1], tables);
        if (out.lhs.type != out.rhs.type) throw SemanticError("type mismatch in IN");
        break;
      case NodeKind::Condition:
        out.kind = CompiledCond::Kind::Compare;
        out.op = node.value;
        out.lhs = operand(node.children[0], tables);
        out.rhs = operand(node.children[1], tables);
        if (out.lhs.type != out.rhs.type) throw SemanticError("type mismatch in comparison");
        break;
      default:
        throw SemanticError("unsupported condition");
    }
    return out;
  }
};

bool compare_values(const Value& x, const std::string& op, const Value& y) {
  if (std::holds_alternative<std::monostate>(x) || std::holds_alternative<std::monostate>(y)) return false;
  if (op == "=") return x == y;
  if (op == "!=" || op == "<>") return x != y;
  if (op == "<") return x < y;
  if (op == ">") return x > y;
  if (op == "<=") return x <= y;
  if (op == ">=") return x >= y;
  return false;
}

class Runner {
 public:
  ResultTable run(const CompiledSelect& sel) {
    ResultTable out;
    for (const auto& item : sel.items) out.columns.push_back(item.name);
    std::vector<std::vector<std::size_t>> matches;
    std::vector<std::size_t> frame(sel.tables.size(), 0);
    bool any_empty = std::any_of(sel.tables.begin(), sel.tables.end(), [](const Table* t) { return t->rows.empty(); });
    bool done = any_empty;
    while (!done) {
      if (!sel.where || eval(*sel.where, sel, frame)) matches.push_back(frame);
      // Advance the odometer over the cross product of FROM tables.
      std::size_t s = sel.tables.size();
      while (true) {
        if (s == 0) {
          done = true;
          break;
        }
        --s;
        if (++frame[s] < sel.tables[s]->rows.size()) break;
        frame[s] = 0;
      }
    }
    if (sel.aggregate) {
      std::vector<Value> row;
      for (const auto& item : sel.items) row.push_back(aggregate(item, sel, matches));
      out.rows.push_back(std::move(row));
    } else {
      for (const auto& m : matches) {
        std::vector<Value> row;
        for (const auto& item : sel.items) row.push_back(cell(sel, m, item.col));
        out.rows.push_back(std::move(row));
      }
    }
    if (sel.distinct) {
      std::vector<std::vector<Value>> unique;
      std::set<std::vector<Value>> seen;
      for (auto& row : out.rows) {
        if (seen.insert(row).second) unique.push_back(std::move(row));
      }
      out.rows = std::move(unique);
    }
    return out;
  }

 private:
  static const Value& cell(const CompiledSelect& sel, const std::vector<std::size_t>& frame, const ColRef& col) {
    return sel.tables[col.slot]->rows[frame[col.slot]][col.column];
  }

  Value aggregate(const CompiledItem& item, const CompiledSelect& sel,
                  const std::vector<std::vector<std::size_t>>& matches) {
    if (item.function == "COUNT") {
      if (item.star) return static_cast<std::int64_t>(matches.size());
      std::vector<Value> values;
      for (const auto& m : matches) {
        const Value& v = cell(sel, m, item.col);
        if (!std::holds_alternative<std::monostate>(v)) values.push_back(v);
      }
      if (item.distinct) {
        std::set<Value> uniq(values.begin(), values.end());
        return static_cast<std::int64_t>(uniq.size());
      }
      return static_cast<std::int64_t>(values.size());
    }
    std::optional<Value> best;
    for (const auto& m : matches) {
      const Value& v = cell(sel, m, item.col);
      if (std::holds_alternative<std::monostate>(v)) continue;
      if (!best || (item.function == "MIN" ? v < *best : v > *best)) best = v;
    }
    return best ? *best : Value{};
  }

  Value scalar(const Operand& op, const CompiledSelect& sel, const std::vector<std::size_t>& frame) {
    switch (op.kind) {
      case Operand::Kind::Column: return cell(sel, frame, op.col);
      case Operand::Kind::Constant: return op.constant;
      case Operand::Kind::Subquery: {
        const ResultTable& t = subquery(*op.sub);
        if (t.rows.empty()) return Value{};
        if (t.rows.size() > 1) throw SemanticError("scalar subquery returned more than one row");
        return t.rows.front().front();
      }
    }
    return Value{};
  }

  const ResultTable& subquery(const CompiledSelect& sub) {
    auto it = cache_.find(&sub);
    if (it == cache_.end()) it = cache_.emplace(&sub, run(sub)).first;
    return it->second;
  }

  const std::set<Value>& subquery_set(const CompiledSelect& sub) {
    auto it = set_cache_.find(&sub);
    if (it == set_cache_.end()) {
      std::set<Value> values;
      for (const auto& row : subquery(sub).rows) values.insert(row.front());
      it = set_cache_.emplace(&sub, std::move(values)).first;
    }
    return it->second;
  }

  bool eval(const CompiledCond& cond, const CompiledSelect& sel, const std::vector<std::size_t>& frame) {
    switch (cond.kind) {
      case CompiledCond::Kind::And:
        for (const auto& c : cond.children) {
          if (!eval(c, sel, frame)) return false;
        }
        return true;
      case CompiledCond::Kind::Or:
        for (const auto& c : cond.children) {
          if (eval(c, sel, frame)) return true;
        }
        return false;
      case CompiledCond::Kind::In: {
        Value v = scalar(cond.lhs, sel, frame);
        if (std::holds_alternative<std::monostate>(v)) return false;
        bool found = subquery_set(*cond.rhs.sub).count(v) > 0;
        return cond.negated ? !found : found;
      }
      case CompiledCond::Kind::Compare:
        return compare_values(scalar(cond.lhs, sel, frame), cond.op, scalar(cond.rhs, sel, frame));
    }
    return false;
  }

  std::map<const CompiledSelect*, ResultTable> cache_;
  std::map<const CompiledSelect*, std::set<Value>> set_cache_;
};

}  // namespace

ResultTable execute(const std::vector<std::string>& tokens, const corpus::Database& db) {
  try {
    SqlNode tree = parse_sql(tokens);
    auto plan = Compiler(db).select(tree);
    return Runner().run(*plan);
  } catch (const Error& ex) {
    ResultTable failed;
    failed.execution_failed = true;
    failed.error = ex.what();
    return failed;
  }
}

bool follows_schema(const std::vector<std::string>& tokens, const corpus::Database& db) {
  try {
    SqlNode tree = parse_sql(tokens);
    Compiler(db).select(tree);
    return true;
  } catch (const Error&) {
    return false;
  }
}

bool tables_equal(const ResultTable& x, const ResultTable& y) {
  if (x.execution_failed || y.execution_failed) return false;
  if (x.rows.size() != y.rows.size()) return false;
  if (!x.rows.empty() && x.rows.front().size() != y.rows.front().size()) return false;
  if (x.rows.empty() && x.columns.size() != y.columns.size()) return false;
  auto xs = x.rows;
  auto ys = y.rows;
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  return xs == ys;
}

bool compare_tables(const ResultTable& predicted, const std::vector<ResultTable>& references, CompareMode mode) {
  for (const auto& ref : references) {
    if (tables_equal(predicted, ref)) return true;
  }
  if (mode == CompareMode::Relaxed && predicted.execution_failed) {
    for (const auto& ref : references) {
      if (!ref.execution_failed && ref.rows.empty()) return true;
    }
  }
  return false;
}

}  // namespace ctxsql::sqlkit
