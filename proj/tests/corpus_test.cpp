#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/sqlkit/executor.hpp"
#include "ctxsql/sqlkit/sql.hpp"

using namespace ctxsql;
using namespace ctxsql::corpus;

namespace {

std::string data_path(const std::string& name) { return std::string(CTXSQL_TEST_DATA) + "/" + name; }

std::vector<Interaction> parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  return read_interactions(in);
}

// Top-level WHERE conjuncts as token strings.
std::multiset<std::string> conjuncts(const std::vector<std::string>& tokens) {
  auto tree = sqlkit::parse_sql(tokens);
  std::multiset<std::string> out;
  if (tree.children.size() < 2) return out;
  const auto& body = tree.children[1].children.front();
  auto text = [&](const sqlkit::SqlNode& n) {
    return join(std::vector<std::string>(tokens.begin() + n.begin, tokens.begin() + n.end));
  };
  if (body.kind == sqlkit::NodeKind::AndList) {
    for (const auto& c : body.children) out.insert(text(c));
  } else {
    out.insert(text(body));
  }
  return out;
}

}  // namespace

TEST_CASE("tokenize_utterance lowercases and splits trailing punctuation") {
  CHECK(tokenize_utterance("Show me flights, please?") ==
        std::vector<std::string>{"show", "me", "flights", ",", "please", "?"});
  CHECK(tokenize_utterance("  a\tb  ") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize_utterance("6:30pm.") == std::vector<std::string>{"6:30pm", "."});
}

TEST_CASE("load the seattle/boston interaction") {
  auto xs = load_interactions(data_path("seattle_boston.jsonl"));
  REQUIRE(xs.size() == 1);
  CHECK(xs[0].turns.size() == 4);
  CHECK(format_date(xs[0].document_date) == "1993-02-03");
  CHECK(xs[0].turns[0].utterance.tokens.size() == 9);
  CHECK(xs[0].turns[0].query.tokens().front() == "(");
}

TEST_CASE("load_interactions errors") {
  CHECK(parse_jsonl("").empty());
  CHECK(parse_jsonl("\n\n").empty());
  try {
    parse_jsonl(R"({"id":"x","scenario":"s","date":"1993-01-01"})");
    FAIL("expected error");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("turns") != std::string::npos);
  }
  try {
    parse_jsonl("\n{\"id\":\"x\",\"scenario\":\"s\",\"date\":\"1993-13-01\",\"turns\":[]}");
    FAIL("expected error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_jsonl("{not json"), DataError);
  CHECK_THROWS_AS(load_interactions(data_path("seattle_boston.jsonl"), "csv"), DataError);
  CHECK_THROWS_AS(load_interactions(data_path("missing.jsonl")), DataError);
}

TEST_CASE("gold alternatives are preserved and shortest picks the minimum") {
  auto xs = parse_jsonl(
      R"({"id":"x","scenario":"s","date":"1993-01-01","turns":[{"utterance":"hi","sql":["SELECT a , b FROM t","SELECT a FROM t"]}]})");
  REQUIRE(xs[0].turns[0].query.alternatives.size() == 2);
  CHECK(xs[0].turns[0].query.shortest().size() == 4);
}

TEST_CASE("canonical JSONL round-trips byte-identically") {
  std::ifstream in(data_path("seattle_boston.jsonl"));
  std::stringstream original;
  original << in.rdbuf();
  auto xs = parse_jsonl(original.str());
  std::ostringstream out;
  write_interactions(xs, out);
  CHECK(out.str() == original.str());

  CorpusSpec spec;
  spec.n_interactions = 30;
  auto corpus = generate_synthetic_corpus(spec);
  std::ostringstream first;
  write_interactions(corpus.interactions, first);
  std::ostringstream second;
  write_interactions(parse_jsonl(first.str()), second);
  CHECK(first.str() == second.str());
}

TEST_CASE("split_by_scenario") {
  auto make = [](const std::vector<int>& per_scenario) {
    std::vector<Interaction> xs;
    int id = 0;
    for (std::size_t s = 0; s < per_scenario.size(); ++s) {
      for (int k = 0; k < per_scenario[s]; ++k) {
        Interaction x;
        x.id = "i" + std::to_string(id++);
        x.scenario_id = "s" + std::to_string(s);
        xs.push_back(x);
      }
    }
    return xs;
  };

  SUBCASE("exact fit") {
    auto splits = split_by_scenario(make({1, 1, 1}), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 3);
    for (const auto& s : splits) CHECK(s.size() == 1);
  }
  SUBCASE("too few scenarios") { CHECK_THROWS_AS(split_by_scenario(make({4, 4}), {0.5, 0.3, 0.2}, 1), Error); }
  SUBCASE("bad ratios") {
    CHECK_THROWS_AS(split_by_scenario(make({1, 1}), {0.5, 0.6}, 1), Error);
    CHECK_THROWS_AS(split_by_scenario(make({1, 1}), {1.0, 0.0}, 1), Error);
  }
  SUBCASE("full-sized split is disjoint, deterministic and close to ratios") {
    // 1658 interactions over scenarios of 1..6 interactions.
    std::vector<int> sizes;
    int total = 0;
    for (int s = 0; total < 1658; ++s) {
      int n = std::min(1 + (s * 7) % 6, 1658 - total);
      sizes.push_back(n);
      total += n;
    }
    auto xs = make(sizes);
    std::vector<double> ratios = {1148.0 / 1658, 380.0 / 1658, 130.0 / 1658};
    auto a = split_by_scenario(xs, ratios, 11);
    auto b = split_by_scenario(xs, ratios, 11);
    std::set<std::string> seen;
    std::size_t count = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      REQUIRE(a[k].size() == b[k].size());
      for (std::size_t i = 0; i < a[k].size(); ++i) CHECK(a[k][i].id == b[k][i].id);
      std::set<std::string> scen;
      for (const auto& x : a[k]) scen.insert(x.scenario_id);
      for (const auto& s : scen) CHECK(seen.insert(s).second);
      count += a[k].size();
    }
    CHECK(count == 1658);
    CHECK(std::abs(static_cast<int>(a[0].size()) - 1148) <= 6);
    CHECK(std::abs(static_cast<int>(a[1].size()) - 380) <= 6);
    CHECK(std::abs(static_cast<int>(a[2].size()) - 130) <= 6);
  }
}

TEST_CASE("corpus_statistics arithmetic") {
  CHECK_THROWS_AS(corpus_statistics({}), DataError);
  auto xs = parse_jsonl(
      R"({"id":"x","scenario":"s","date":"1993-01-01","turns":[{"utterance":"a b","sql":["SELECT a FROM t"]},{"utterance":"a b c d","sql":["SELECT a FROM t WHERE b = 1"]}]})");
  auto s = corpus_statistics(xs);
  CHECK(s.mean_turns == 2.0);
  CHECK(s.mean_utterance_tokens == 3.0);
  CHECK(s.max_utterance_tokens == 4);
  CHECK(s.mean_query_tokens == 6.0);
  CHECK(s.max_query_tokens == 8);
  CHECK(s.input_vocab_size == 4);

  auto single = parse_jsonl(
      R"({"id":"x","scenario":"s","date":"1993-01-01","turns":[{"utterance":"a b c","sql":["SELECT a FROM t"]}]})");
  auto t = corpus_statistics(single);
  CHECK(t.mean_turns == 1.0);
  CHECK(t.mean_utterance_tokens == 3.0);
}

TEST_CASE("corpus spec validation and parsing") {
  CorpusSpec spec;
  spec.phenomenon_weights = {0.5, 0.5, 0.5, 0.0, 0.0};
  CHECK_THROWS_AS(spec.validate(), DataError);
  auto parsed = corpus_spec_from_json(nlohmann::json::parse(
      R"({"n_interactions": 5, "seed": 9, "phenomenon_weights": {"constraint-add": 1.0}})"));
  CHECK(parsed.n_interactions == 5);
  CHECK(parsed.seed == 9);
  CHECK(parsed.phenomenon_weights[0] == 1.0);
  CHECK_THROWS_AS(corpus_spec_from_json(nlohmann::json::parse(R"({"bogus": 1})")), DataError);
}

TEST_CASE("generator: empty spec still yields a database") {
  CorpusSpec spec;
  spec.n_interactions = 0;
  auto corpus = generate_synthetic_corpus(spec);
  CHECK(corpus.interactions.empty());
  CHECK(corpus.database.tables.size() == 6);
}

TEST_CASE("generator: constraint-add turns strictly grow the conjunct set") {
  CorpusSpec spec;
  spec.n_interactions = 1;
  spec.turn_length = {3.0, 3};
  spec.phenomenon_weights = {1.0, 0.0, 0.0, 0.0, 0.0};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    spec.seed = seed;
    auto corpus = generate_synthetic_corpus(spec);
    const auto& turns = corpus.interactions[0].turns;
    for (std::size_t i = 1; i < turns.size(); ++i) {
      auto prev = conjuncts(turns[i - 1].query.tokens());
      auto cur = conjuncts(turns[i].query.tokens());
      CHECK(cur.size() > prev.size());
      CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    }
  }
}

TEST_CASE("generator: soundness, phenomena and determinism") {
  CorpusSpec spec;
  spec.n_interactions = 200;
  spec.seed = 7;
  auto corpus = generate_synthetic_corpus(spec);
  REQUIRE(corpus.interactions.size() == 200);
  auto stats = corpus_statistics(corpus.interactions);
  CHECK(std::abs(stats.mean_turns - 7.0) <= 2.0);

  std::size_t failures = 0, empty = 0, total = 0;
  for (std::size_t k = 0; k < corpus.interactions.size(); ++k) {
    const auto& turns = corpus.interactions[k].turns;
    REQUIRE(corpus.phenomena[k].size() == turns.size());
    for (std::size_t i = 0; i < turns.size(); ++i) {
      const auto& q = turns[i].query.tokens();
      CHECK_NOTHROW(sqlkit::parse_sql(q));
      auto result = sqlkit::execute(q, corpus.database);
      ++total;
      if (result.execution_failed) ++failures;
      if (result.rows.empty()) ++empty;
      if (i > 0 && corpus.phenomena[k][i] == Phenomenon::ConstraintReplace) {
        auto prev = conjuncts(turns[i - 1].query.tokens());
        auto cur = conjuncts(q);
        CHECK(prev.size() == cur.size());
        std::vector<std::string> diff;
        std::set_difference(cur.begin(), cur.end(), prev.begin(), prev.end(), std::back_inserter(diff));
        CHECK(diff.size() == 1);
      }
    }
  }
  CHECK(failures == 0);
  CHECK(static_cast<double>(empty) < 0.2 * static_cast<double>(total));

  auto again = generate_synthetic_corpus(spec);
  std::ostringstream x, y;
  write_interactions(corpus.interactions, x);
  write_interactions(again.interactions, y);
  CHECK(x.str() == y.str());
  CHECK(database_to_json(corpus.database).dump() == database_to_json(again.database).dump());
}

TEST_CASE("database json round trip and validation") {
  auto db = build_flight_database(3);
  auto doc = database_to_json(db);
  auto back = database_from_json(doc);
  CHECK(database_to_json(back).dump() == doc.dump());
  CHECK_THROWS_AS(database_from_json(nlohmann::json::parse(R"({"tables": 3})")), DataError);
  // Entity values are unique surface strings within their column.
  for (const auto& ec : db.entity_columns) {
    const Table* t = db.find_table(ec.table);
    REQUIRE(t != nullptr);
    std::set<std::string> seen;
    auto idx = *t->column_index(ec.column);
    for (const auto& row : t->rows) CHECK(seen.insert(value_to_string(row[idx])).second);
  }
}
