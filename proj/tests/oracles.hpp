#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ctxsql/corpus/database.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace oracles {

using ctxsql::sqlkit::NodeKind;
using ctxsql::sqlkit::SqlNode;

struct FlatNode {
  const SqlNode* node;
  int parent;
};

inline void flatten(const SqlNode& n, int parent, std::vector<FlatNode>& out) {
  int self = static_cast<int>(out.size());
  out.push_back({&n, parent});
  for (const auto& c : n.children) flatten(c, self, out);
}

inline bool has_min_max(const SqlNode& select) {
  for (const auto& item : select.children.front().children) {
    if (item.kind == NodeKind::Aggregate && (item.value == "MIN" || item.value == "MAX")) return true;
  }
  return false;
}

// Brute force: every (l, r) span of the query that coincides with a parse
// node accepted by the extraction rules, ordered by start then length
// (longest first), deduplicated by token content.
inline std::vector<std::pair<std::size_t, std::size_t>> segment_spans(const std::vector<std::string>& tokens) {
  SqlNode tree = ctxsql::sqlkit::parse_sql(tokens);
  std::vector<FlatNode> nodes;
  flatten(tree, -1, nodes);
  auto has_where_ancestor = [&](int i) {
    for (int p = nodes[static_cast<std::size_t>(i)].parent; p >= 0; p = nodes[static_cast<std::size_t>(p)].parent) {
      if (nodes[static_cast<std::size_t>(p)].node->kind == NodeKind::Where) return true;
    }
    return false;
  };
  auto accepted = [&](int i) {
    const FlatNode& f = nodes[static_cast<std::size_t>(i)];
    const SqlNode& n = *f.node;
    const SqlNode* parent = f.parent >= 0 ? nodes[static_cast<std::size_t>(f.parent)].node : nullptr;
    switch (n.kind) {
      case NodeKind::Projection:
        return f.parent == 0 && tree.children.size() == 2;
      case NodeKind::Select:
        if (has_min_max(n)) return true;
        return parent && (parent->kind == NodeKind::InSubquery || parent->kind == NodeKind::Condition);
      case NodeKind::AndList:
        if (parent && parent->kind == NodeKind::Where) return false;
        return has_where_ancestor(i);
      case NodeKind::OrList:
      case NodeKind::Condition:
      case NodeKind::InSubquery:
        return has_where_ancestor(i);
      default:
        return false;
    }
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::set<std::vector<std::string>> seen;
  for (std::size_t l = 0; l < tokens.size(); ++l) {
    for (std::size_t r = tokens.size(); r > l; --r) {
      bool ok = false;
      for (std::size_t i = 0; i < nodes.size() && !ok; ++i) {
        ok = nodes[i].node->begin == l && nodes[i].node->end == r && accepted(static_cast<int>(i));
      }
      if (!ok) continue;
      std::vector<std::string> span(tokens.begin() + static_cast<long>(l), tokens.begin() + static_cast<long>(r));
      if (seen.insert(span).second) out.emplace_back(l, r);
    }
  }
  return out;
}

// Evaluates the generator's query family by scanning the flight table
// directly, reading constraints off token patterns.
inline std::vector<std::vector<ctxsql::corpus::Value>> scan_flights(const std::vector<std::string>& q,
                                                                    const ctxsql::corpus::Database& db) {
  using ctxsql::corpus::Value;
  auto unquote = [](const std::string& s) { return s.substr(1, s.size() - 2); };
  auto num = [](const std::string& s) { return std::stoll(s); };
  std::optional<std::string> from, to, airline;
  std::optional<long long> year, month, day, after, before, arrive, number;
  for (std::size_t i = 0; i + 2 < q.size(); ++i) {
    if (q[i] == "flight.from_airport" || q[i] == "flight.to_airport") {
      std::size_t j = i;
      while (q[j] != "city.city_name") ++j;
      (q[i] == "flight.from_airport" ? from : to) = unquote(q[j + 2]);
    }
    if (q[i + 1] == "=" || q[i + 1] == ">" || q[i + 1] == "<") {
      if (q[i] == "date_day.year") year = num(q[i + 2]);
      if (q[i] == "date_day.month_number") month = num(q[i + 2]);
      if (q[i] == "date_day.day_number") day = num(q[i + 2]);
      if (q[i] == "flight.airline_code") airline = unquote(q[i + 2]);
      if (q[i] == "flight.departure_time") (q[i + 1] == ">" ? after : before) = num(q[i + 2]);
      if (q[i] == "flight.arrival_time") arrive = num(q[i + 2]);
      if (q[i] == "flight.flight_number") number = num(q[i + 2]);
    }
  }
  std::multimap<std::string, std::string> airports_of;  // city name -> airport
  std::map<std::string, std::string> code_of;
  for (const auto& row : db.tables.at("city").rows) code_of[std::get<std::string>(row[1])] = std::get<std::string>(row[0]);
  auto in_city = [&](const std::string& airport, const std::string& city) {
    for (const auto& row : db.tables.at("airport_service").rows) {
      if (std::get<std::string>(row[1]) == airport && std::get<std::string>(row[0]) == code_of[city]) return true;
    }
    return false;
  };
  std::optional<std::string> weekday;
  if (year) {
    for (const auto& row : db.tables.at("date_day").rows) {
      if (std::get<std::int64_t>(row[0]) == *year && std::get<std::int64_t>(row[1]) == *month &&
          std::get<std::int64_t>(row[2]) == *day)
        weekday = std::get<std::string>(row[3]);
    }
  }
  auto flies_on = [&](const std::string& code) {
    for (const auto& row : db.tables.at("days").rows) {
      if (std::get<std::string>(row[0]) == code && std::get<std::string>(row[1]) == *weekday) return true;
    }
    return false;
  };
  std::string column = q[2] == "MIN" ? "departure_time" : q[3].substr(q[3].find('.') + 1);
  const auto& table = db.tables.at("flight");
  std::size_t col = *table.column_index(column);
  std::vector<std::vector<Value>> rows;
  for (const auto& f : table.rows) {
    if (from && !in_city(std::get<std::string>(f[3]), *from)) continue;
    if (to && !in_city(std::get<std::string>(f[4]), *to)) continue;
    if (year && (!weekday || !flies_on(std::get<std::string>(f[7])))) continue;
    if (airline && std::get<std::string>(f[1]) != *airline) continue;
    if (after && !(std::get<std::int64_t>(f[5]) > *after)) continue;
    if (before && !(std::get<std::int64_t>(f[5]) < *before)) continue;
    if (arrive && std::get<std::int64_t>(f[6]) != *arrive) continue;
    if (number && std::get<std::int64_t>(f[2]) != *number) continue;
    rows.push_back({f[col]});
  }
  if (q[2] == "MIN") {
    if (rows.empty()) return {{Value{}}};
    return {*std::min_element(rows.begin(), rows.end())};
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

}  // namespace oracles
