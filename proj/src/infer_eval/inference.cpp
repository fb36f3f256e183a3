#include "ctxsql/infer_eval/inference.hpp"

#include <algorithm>
#include <set>

#include "ctxsql/common.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::infer_eval {

using model::EncoderStates;
using model::Graph;
using model::Model;
using model::NodeId;

namespace {

int argmax_lowest(const nn::Mat& z) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(z.rows()); ++k) {
    if (z(k, 0) > z(best, 0)) best = k;
  }
  return best;
}

EncoderStates import_encoding(Graph& g, const StoredEncoding& e) {
  EncoderStates out;
  out.tokens = e.tokens;
  out.attendable = e.attendable;
  for (const auto& s : e.states) out.states.push_back(g.input(s));
  return out;
}

StoredEncoding store_encoding(const Graph& g, const EncoderStates& e, int turn) {
  StoredEncoding out;
  out.turn = turn;
  out.tokens = e.tokens;
  out.attendable = e.attendable;
  for (NodeId s : e.states) out.states.push_back(g.value(s));
  return out;
}

bool valid_prediction(const Tokens& query, const corpus::Database* db) {
  try {
    sqlkit::parse_sql(query);
  } catch (const Error&) {
    return false;
  }
  return db == nullptr || sqlkit::follows_schema(query, *db);
}

}  // namespace

DecodeResult greedy_decode(Graph& g, Model& m, NodeId encoder_final_state, const model::Memory& memory,
                           const model::Candidates& c, int max_tokens) {
  DecodeResult out;
  model::DecoderState state = model::initial_decoder_state(g, m, encoder_final_state);
  NodeId prev = model::start_embedding(g, m);
  const int n_placeholders = static_cast<int>(c.placeholders.size());
  while (static_cast<int>(out.expanded.size()) < max_tokens) {
    model::DecoderStep step = model::decoder_step(g, m, prev, state, memory, c);
    const nn::Mat& alpha = g.value(step.attention.alpha);
    out.attention.emplace_back(alpha.data(), alpha.data() + alpha.size());
    const int idx = argmax_lowest(g.value(step.logits));
    if (idx == m.end_id()) return out;
    model::OutputSymbol symbol;
    if (idx < c.n_vocab) {
      symbol.token = m.vocabs().output.token(idx);
      out.decisions.push_back(symbol.token);
      out.expanded.push_back(symbol.token);
    } else if (idx < c.n_vocab + n_placeholders) {
      symbol.token = c.placeholders[static_cast<std::size_t>(idx - c.n_vocab)];
      out.decisions.push_back(symbol.token);
      out.expanded.push_back(symbol.token);
    } else {
      const int k = idx - c.n_vocab - n_placeholders;
      symbol.segment = &c.segments->segments[static_cast<std::size_t>(k)];
      out.decisions.push_back(sqlkit::segment_reference(static_cast<std::size_t>(k) + 1));
      out.segments_used.push_back(k);
      for (const auto& t : symbol.segment->tokens) out.expanded.push_back(t);
    }
    prev = model::embed_output(g, m, symbol);
  }
  out.hit_cap = true;
  out.expanded.resize(static_cast<std::size_t>(max_tokens));
  return out;
}

const char* mode_name(PreviousQueryMode mode) { return mode == PreviousQueryMode::Gold ? "gold" : "predicted"; }

PreviousQueryMode parse_mode(const std::string& name) {
  if (name == "gold") return PreviousQueryMode::Gold;
  if (name == "predicted") return PreviousQueryMode::Predicted;
  throw Error("unknown previous-query mode '" + name + "' (expected gold or predicted)");
}

SessionState new_session(const Date& document_date) {
  SessionState s;
  s.document_date = document_date;
  return s;
}

PredictionRecord predict_turn(const InferenceContext& ctx, SessionState& s, const Tokens& utterance,
                              PreviousQueryMode mode) {
  if (!ctx.model || !ctx.dictionary) throw Error("inference context is incomplete");
  Model& m = *ctx.model;
  const auto variant = m.config().variant;
  const int hw = m.config().history_window();
  if (utterance.empty()) throw Error("empty utterance");
  PredictionRecord rec;
  const int i = s.turn + 1;
  rec.turn = i;
  preprocess::AnonymizationMapping mapping = s.mapping;
  rec.utterance = preprocess::anonymize_utterance(utterance, *ctx.dictionary, s.document_date, mapping);
  rec.added.assign(mapping.entries().begin() + static_cast<std::ptrdiff_t>(s.mapping.size()), mapping.entries().end());

  Graph g;
  std::vector<EncoderStates> previous;
  EncoderStates current;
  nn::Vec discourse;
  std::vector<model::MemoryPart> parts;
  if (model::uses_turn_encoder(variant)) {
    NodeId d = i == 1 ? model::initial_discourse(g, m) : g.input(s.discourse);
    current = model::encode_utterance(g, m, rec.utterance, d);
    discourse = g.value(model::update_discourse(g, m, d, current.final_hidden));
    previous.reserve(s.encodings.size());
    for (const auto& e : s.encodings) {
      if (i - e.turn > hw) continue;
      previous.push_back(import_encoding(g, e));
      parts.push_back({&previous.back(), e.turn, i - e.turn});
    }
  } else {
    Tokens input = model::uses_concat_history(variant) ? model::concat_history(s.utterances, rec.utterance, hw)
                                                       : rec.utterance;
    current = model::encode_utterance(g, m, input, std::nullopt);
  }
  parts.push_back({&current, i, 0});
  model::Memory memory = model::build_memory(g, m, parts);
  NodeId seg_matrix = -1;
  if (model::uses_segments(variant) && !s.segments.empty()) {
    seg_matrix = model::encode_segments(g, m, s.segment_source, s.segments, i);
  }
  model::Candidates cands = model::make_candidates(m, memory, &s.segments, seg_matrix);
  DecodeResult d = greedy_decode(g, m, current.final_state, memory, cands, ctx.max_tokens);

  rec.decisions = std::move(d.decisions);
  rec.anonymized_query = std::move(d.expanded);
  for (int k : d.segments_used) rec.segments_used.push_back(s.segments.segments[static_cast<std::size_t>(k)]);
  rec.attention_tokens = memory.tokens;
  rec.attention = std::move(d.attention);
  rec.hit_cap = d.hit_cap;
  rec.query = preprocess::fix_parentheses(preprocess::deanonymize(rec.anonymized_query, mapping));

  s.turn = i;
  s.mapping = std::move(mapping);
  s.utterances.push_back(rec.utterance);
  s.predictions.push_back(rec.anonymized_query);
  if (model::uses_turn_encoder(variant)) {
    s.discourse = discourse;
    s.encodings.push_back(store_encoding(g, current, i));
    while (!s.encodings.empty() && i + 1 - s.encodings.front().turn > hw) s.encodings.erase(s.encodings.begin());
  }
  if (mode == PreviousQueryMode::Predicted) observe_prediction(s, rec.anonymized_query, ctx.database);
  return rec;
}

bool observe_prediction(SessionState& s, const Tokens& anonymized_query, const corpus::Database* db) {
  Tokens source = preprocess::fix_parentheses(anonymized_query);
  if (!valid_prediction(preprocess::deanonymize(source, s.mapping), db)) return false;
  sqlkit::SegmentSet set = sqlkit::extract_segments(source, s.turn, s.segment_sets);
  s.segment_sets.push_back(set);
  s.segments = std::move(set);
  s.segment_source = std::move(source);
  return true;
}

void use_gold_previous_query(SessionState& s, const Tokens& gold_query) {
  Tokens source = preprocess::anonymize_query(gold_query, s.mapping);
  sqlkit::SegmentSet set = sqlkit::extract_segments(source, s.turn, s.segment_sets);
  s.segment_sets.push_back(set);
  s.segments = std::move(set);
  s.segment_source = std::move(source);
}

std::vector<PredictionRecord> predict_interaction(const InferenceContext& ctx, const corpus::Interaction& interaction,
                                                  PreviousQueryMode mode) {
  SessionState s = new_session(interaction.document_date);
  std::vector<PredictionRecord> out;
  for (const auto& turn : interaction.turns) {
    out.push_back(predict_turn(ctx, s, turn.utterance.tokens, mode));
    if (mode == PreviousQueryMode::Gold) use_gold_previous_query(s, turn.query.shortest());
  }
  return out;
}

nlohmann::ordered_json record_to_json(const PredictionRecord& r) {
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : r.segments_used) {
    segs.push_back({{"a", s.a}, {"b", s.b}, {"l", s.l}, {"r", s.r}, {"text", join(s.tokens)}});
  }
  nlohmann::ordered_json added = nlohmann::ordered_json::array();
  for (const auto& [p, l] : r.added) added.push_back({{"placeholder", p}, {"literal", l}});
  return {{"turn", r.turn},
          {"utterance", r.utterance},
          {"sql", sqlkit::serialize_sql(r.query)},
          {"anonymized_sql", sqlkit::serialize_sql(r.anonymized_query)},
          {"decisions", r.decisions},
          {"segments_used", segs},
          {"attention", {{"tokens", r.attention_tokens}, {"steps", r.attention}}},
          {"anonymization_added", added},
          {"hit_cap", r.hit_cap}};
}

bool query_matches(const Tokens& predicted, const corpus::Query& gold) {
  const std::string p = sqlkit::serialize_sql(predicted);
  return std::any_of(gold.alternatives.begin(), gold.alternatives.end(),
                     [&](const Tokens& alt) { return sqlkit::serialize_sql(alt) == p; });
}

TurnOutcome score_turn(const Tokens& predicted, const corpus::Query& gold, const corpus::Database& db) {
  TurnOutcome t;
  t.predicted = sqlkit::serialize_sql(predicted);
  t.query_match = query_matches(predicted, gold);
  sqlkit::ResultTable table = sqlkit::execute(predicted, db);
  t.executed = !table.execution_failed;
  std::vector<sqlkit::ResultTable> refs;
  for (const auto& alt : gold.alternatives) refs.push_back(sqlkit::execute(alt, db));
  t.strict = sqlkit::compare_tables(table, refs, sqlkit::CompareMode::Strict);
  t.relaxed = sqlkit::compare_tables(table, refs, sqlkit::CompareMode::Relaxed);
  return t;
}

double MetricsReport::query_accuracy() const {
  return n_turns ? static_cast<double>(query_matches) / static_cast<double>(n_turns) : 0.0;
}
double MetricsReport::strict_denotation() const {
  return n_turns ? static_cast<double>(strict_matches) / static_cast<double>(n_turns) : 0.0;
}
double MetricsReport::relaxed_denotation() const {
  return n_turns ? static_cast<double>(relaxed_matches) / static_cast<double>(n_turns) : 0.0;
}

MetricsReport evaluate(const InferenceContext& ctx, const std::vector<corpus::Interaction>& dataset,
                       PreviousQueryMode mode) {
  if (!ctx.database) throw Error("evaluation needs a database");
  MetricsReport report;
  report.mode = mode_name(mode);
  report.per_turn.resize(kCurveTurns);
  for (int k = 0; k < kCurveTurns; ++k) report.per_turn[static_cast<std::size_t>(k)].turn_index = k + 1;
  for (const auto& interaction : dataset) {
    InteractionOutcome io;
    io.id = interaction.id;
    auto records = predict_interaction(ctx, interaction, mode);
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& gold = interaction.turns[k].query;
      TurnOutcome t = score_turn(records[k].query, gold, *ctx.database);
      t.turn = records[k].turn;
      t.decisions = records[k].decisions.size();
      ++report.n_turns;
      report.query_matches += t.query_match;
      report.strict_matches += t.strict;
      report.relaxed_matches += t.relaxed;
      auto& bucket = report.per_turn[static_cast<std::size_t>(std::min(t.turn, kCurveTurns) - 1)];
      ++bucket.count;
      bucket.strict += t.strict;
      io.turns.push_back(std::move(t));
    }
    report.interactions.push_back(std::move(io));
    ++report.n_interactions;
  }
  return report;
}

std::string check_metric_lattice(const MetricsReport& report) {
  if (report.relaxed_matches < report.strict_matches) return "relaxed accuracy below strict accuracy";
  for (const auto& io : report.interactions) {
    for (const auto& t : io.turns) {
      if (t.query_match && !t.strict) return io.id + " turn " + std::to_string(t.turn) + ": query match without strict match";
      if (t.strict && !t.relaxed) return io.id + " turn " + std::to_string(t.turn) + ": strict match without relaxed match";
    }
  }
  return "";
}

nlohmann::ordered_json report_to_json(const MetricsReport& r, bool include_interactions) {
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& b : r.per_turn) {
    curve.push_back({{"turn_index", b.turn_index}, {"count", b.count}, {"strict_accuracy", b.strict_accuracy()}});
  }
  nlohmann::ordered_json doc = {{"mode", r.mode},
                                {"query_accuracy", r.query_accuracy()},
                                {"strict_denotation", r.strict_denotation()},
                                {"relaxed_denotation", r.relaxed_denotation()},
                                {"counts",
                                 {{"interactions", r.n_interactions},
                                  {"turns", r.n_turns},
                                  {"query_matches", r.query_matches},
                                  {"strict_matches", r.strict_matches},
                                  {"relaxed_matches", r.relaxed_matches}}},
                                {"per_turn_strict", curve}};
  if (include_interactions) {
    nlohmann::ordered_json xs = nlohmann::ordered_json::array();
    for (const auto& io : r.interactions) {
      nlohmann::ordered_json turns = nlohmann::ordered_json::array();
      for (const auto& t : io.turns) {
        turns.push_back({{"turn", t.turn},
                         {"predicted", t.predicted},
                         {"decisions", t.decisions},
                         {"executed", t.executed},
                         {"query_match", t.query_match},
                         {"strict", t.strict},
                         {"relaxed", t.relaxed}});
      }
      xs.push_back({{"id", io.id}, {"turns", turns}});
    }
    doc["interactions"] = xs;
  }
  return doc;
}

}  // namespace ctxsql::infer_eval
