#include <doctest.h>

#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/infer_eval/inference.hpp"
#include "ctxsql/sqlkit/sql.hpp"
#include "model_fixtures.hpp"

using namespace ctxsql;
using fixtures::tok;
using infer_eval::PreviousQueryMode;
using model::Variant;

namespace {

struct World {
  corpus::SyntheticCorpus corpus;
  preprocess::EntityDictionary dict;
  std::vector<preprocess::AnonymizedInteraction> anonymized;

  World() {
    corpus::CorpusSpec spec;
    spec.n_interactions = 6;
    spec.seed = 21;
    corpus = corpus::generate_synthetic_corpus(spec);
    dict = preprocess::build_entity_dictionary(corpus.database);
    for (const auto& x : corpus.interactions) anonymized.push_back(preprocess::anonymize_interaction(x, dict));
  }

  std::unique_ptr<model::Model> model(Variant v, std::uint64_t seed = 1) const {
    auto c = fixtures::tiny_config(v);
    std::vector<model::Tokens> utterances;
    std::vector<model::Tokens> queries;
    for (const auto& x : anonymized) {
      for (const auto& t : x.turns) {
        utterances.push_back(t.utterance);
        queries.insert(queries.end(), t.queries.begin(), t.queries.end());
      }
    }
    auto m = std::make_unique<model::Model>(c, model::build_vocabs(utterances, queries, c));
    m->initialize(seed);
    return m;
  }
};

const World& world() {
  static const World w;
  return w;
}

}  // namespace

TEST_CASE("decode cap: generation that never ends returns exactly 300 tokens") {
  auto m = world().model(Variant::Full);
  m->b_o->value(m->end_id(), 0) = -1e3;
  m->b_o->value(m->vocabs().output.id("("), 0) = 1e3;
  infer_eval::InferenceContext ctx{m.get(), &world().dict, &world().corpus.database};
  auto s = infer_eval::new_session(parse_date("1993-02-03"));
  auto r = infer_eval::predict_turn(ctx, s, tok("flights from seattle to boston"));
  CHECK(r.hit_cap);
  CHECK(r.anonymized_query.size() == 300);
  CHECK(r.decisions.size() == 300);
  CHECK(r.attention.size() == 300);

  SUBCASE("a copied segment crossing the cap is truncated") {
    auto tiny = fixtures::tiny_model(Variant::Full);
    tiny->b_o->value.setConstant(-1e3);
    tiny->w_o->value.setZero();
    tiny->w_s->value.setZero();
    nn::Graph g;
    auto enc = model::encode_utterance(g, *tiny, tok("flights"), model::initial_discourse(g, *tiny));
    auto mem = model::build_memory(g, *tiny, {{&enc, 1, 0}});
    sqlkit::SegmentSet set;
    set.segments.push_back({1, 1, 1, 7, tok("f.a = CITY#1 AND f.b = CITY#2")});
    auto seg = model::encode_segments(g, *tiny, tok("f.a = CITY#1 AND f.b = CITY#2"), set, 2);
    auto c = model::make_candidates(*tiny, mem, &set, seg);
    auto d = infer_eval::greedy_decode(g, *tiny, enc.final_state, mem, c);
    CHECK(d.hit_cap);
    CHECK(d.expanded.size() == 300);
    CHECK(d.decisions.size() == 43);
    CHECK(d.segments_used.size() == 43);
  }
}

TEST_CASE("untrained models of every variant stay within the cap") {
  for (auto v : fixtures::kAllVariants) {
    auto m = world().model(v, 3);
    infer_eval::InferenceContext ctx{m.get(), &world().dict, &world().corpus.database};
    for (const auto& x : world().corpus.interactions) {
      for (const auto& r : infer_eval::predict_interaction(ctx, x, PreviousQueryMode::Predicted)) {
        CHECK(r.anonymized_query.size() <= 300);
      }
    }
  }
}

TEST_CASE("single-turn interactions give identical output in both modes; decoding is deterministic") {
  auto m = world().model(Variant::Full, 5);
  infer_eval::InferenceContext ctx{m.get(), &world().dict, &world().corpus.database};
  corpus::Interaction one = world().corpus.interactions[0];
  one.turns.resize(1);
  auto a = infer_eval::predict_interaction(ctx, one, PreviousQueryMode::Predicted);
  auto b = infer_eval::predict_interaction(ctx, one, PreviousQueryMode::Gold);
  CHECK(infer_eval::record_to_json(a[0]) == infer_eval::record_to_json(b[0]));
  CHECK(a[0].segments_used.empty());
  auto full = world().corpus.interactions[1];
  auto r1 = infer_eval::predict_interaction(ctx, full, PreviousQueryMode::Predicted);
  auto r2 = infer_eval::predict_interaction(ctx, full, PreviousQueryMode::Predicted);
  REQUIRE(r1.size() == r2.size());
  for (std::size_t k = 0; k < r1.size(); ++k) CHECK(infer_eval::record_to_json(r1[k]) == infer_eval::record_to_json(r2[k]));
}

TEST_CASE("history window: FULL_0 attends only to the current utterance, FULL to h previous ones") {
  const auto& x = world().corpus.interactions[2];
  REQUIRE(x.turns.size() >= 2);
  for (auto v : {Variant::Full0, Variant::Full}) {
    auto m = world().model(v);
    infer_eval::InferenceContext ctx{m.get(), &world().dict, &world().corpus.database};
    auto s = infer_eval::new_session(x.document_date);
    auto r1 = infer_eval::predict_turn(ctx, s, x.turns[0].utterance.tokens);
    auto r2 = infer_eval::predict_turn(ctx, s, x.turns[1].utterance.tokens);
    if (v == Variant::Full0) {
      CHECK(r2.attention_tokens == r2.utterance);
    } else {
      model::Tokens both = r1.utterance;
      both.insert(both.end(), r2.utterance.begin(), r2.utterance.end());
      CHECK(r2.attention_tokens == both);
    }
    for (const auto& row : r2.attention) CHECK(row.size() == r2.attention_tokens.size());
  }
}

TEST_CASE("segment source fallback: predicted mode keeps the last valid query, gold mode uses golds") {
  const auto& db = world().corpus.database;
  auto s = infer_eval::new_session(parse_date("1993-02-03"));
  s.mapping.placeholder_for("CITY", "'SEATTLE'");
  s.turn = 1;
  auto valid = sqlkit::tokenize_sql(
      "( SELECT DISTINCT flight.flight_id FROM flight WHERE flight.airline_code = 'AA' AND flight.flight_number > 100 ) ;");
  REQUIRE(infer_eval::observe_prediction(s, valid, &db));
  CHECK(s.segment_source == valid);
  CHECK_FALSE(s.segments.empty());
  const auto before = s.segments.segments;
  s.turn = 2;
  CHECK_FALSE(infer_eval::observe_prediction(s, tok("( SELECT DISTINCT WHERE AND ) ;"), &db));
  CHECK_FALSE(infer_eval::observe_prediction(s, sqlkit::tokenize_sql("( SELECT DISTINCT nope.x FROM nope ) ;"), &db));
  CHECK(s.segment_source == valid);
  CHECK(s.segments.segments == before);
  CHECK(s.segments.segments.front().b == 1);
  s.turn = 3;
  infer_eval::use_gold_previous_query(s, sqlkit::tokenize_sql(
      "( SELECT DISTINCT flight.flight_id FROM flight WHERE flight.airline_code = 'DL' ) ;"));
  CHECK(s.segments.segments.front().b == 3);
  CHECK(s.segment_source.back() == ";");
}

TEST_CASE("turn scoring and the metric lattice") {
  const auto& db = world().corpus.database;
  const auto& gold = world().corpus.interactions[0].turns[0].query;
  auto perfect = infer_eval::score_turn(gold.tokens(), gold, db);
  CHECK(perfect.query_match);
  CHECK(perfect.strict);
  CHECK(perfect.relaxed);

  auto empty_gold = corpus::make_query({"( SELECT DISTINCT flight.flight_id FROM flight WHERE flight.flight_number < 0 ) ;"});
  auto broken = infer_eval::score_turn(tok("( SELECT DISTINCT ;"), empty_gold, db);
  CHECK_FALSE(broken.executed);
  CHECK_FALSE(broken.strict);
  CHECK(broken.relaxed);
  auto broken_nonempty = infer_eval::score_turn(tok("( SELECT DISTINCT ;"), gold, db);
  CHECK_FALSE(broken_nonempty.relaxed);

  infer_eval::MetricsReport r;
  r.interactions.push_back({"x", {perfect, broken}});
  r.n_turns = 2;
  r.query_matches = 1;
  r.strict_matches = 1;
  r.relaxed_matches = 2;
  CHECK(infer_eval::check_metric_lattice(r).empty());
  r.interactions[0].turns[1].query_match = true;
  CHECK_FALSE(infer_eval::check_metric_lattice(r).empty());
}

TEST_CASE("evaluation report: counts, curve and json") {
  auto m = world().model(Variant::Full);
  infer_eval::InferenceContext ctx{m.get(), &world().dict, &world().corpus.database};
  auto report = infer_eval::evaluate(ctx, world().corpus.interactions, PreviousQueryMode::Predicted);
  std::size_t turns = 0;
  for (const auto& x : world().corpus.interactions) turns += x.turns.size();
  CHECK(report.n_turns == turns);
  CHECK(report.n_interactions == world().corpus.interactions.size());
  CHECK(infer_eval::check_metric_lattice(report).empty());
  std::size_t bucketed = 0;
  for (const auto& b : report.per_turn) bucketed += b.count;
  CHECK(bucketed == turns);
  CHECK(report.per_turn.size() == infer_eval::kCurveTurns);
  auto j = infer_eval::report_to_json(report);
  CHECK(j["mode"] == "predicted");
  CHECK(j["counts"]["turns"] == turns);
  CHECK(j["interactions"].size() == world().corpus.interactions.size());
  auto svg = infer_eval::per_turn_curve_svg({{"full", &report}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(infer_eval::history_sweep_svg({{0, 0.2}, {1, 0.4}}, "full").find("circle") != std::string::npos);
}
