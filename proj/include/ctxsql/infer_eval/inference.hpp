#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/model/model.hpp"
#include "ctxsql/preprocess/anonymize.hpp"
#include "ctxsql/sqlkit/executor.hpp"
#include "ctxsql/sqlkit/segments.hpp"

namespace ctxsql::infer_eval {

using model::Tokens;

inline constexpr int kMaxDecodeTokens = 300;

// --- greedy decoding core --------------------------------------------------

struct DecodeResult {
  Tokens decisions;  // one per decoder step, SEGMENT#k for copies, without <end>
  Tokens expanded;   // anonymized query with segments expanded
  std::vector<int> segments_used;  // 0-based segment indices, in decision order
  std::vector<std::vector<double>> attention;  // alpha per decoder step
  bool hit_cap = false;
};

// Greedy decoding: argmax over the joint distribution (lowest index on
// ties), stops at <end> or once `max_tokens` query tokens are produced.
DecodeResult greedy_decode(model::Graph& g, model::Model& m, model::NodeId encoder_final_state,
                           const model::Memory& memory, const model::Candidates& candidates,
                           int max_tokens = kMaxDecodeTokens);

// --- interactive sessions --------------------------------------------------

enum class PreviousQueryMode { Predicted, Gold };
const char* mode_name(PreviousQueryMode mode);
PreviousQueryMode parse_mode(const std::string& name);

// Encoder output of a previous utterance, kept as plain values.
struct StoredEncoding {
  int turn = 0;
  Tokens tokens;
  std::vector<bool> attendable;
  std::vector<nn::Vec> states;
};

struct SessionState {
  Date document_date{};
  preprocess::AnonymizationMapping mapping;
  int turn = 0;  // turns completed
  nn::Vec discourse;                       // [h^I; c^I] after the last turn
  std::vector<StoredEncoding> encodings;   // at most h previous utterances
  std::vector<Tokens> utterances;          // anonymized utterances so far
  std::vector<Tokens> predictions;         // anonymized predicted queries so far
  std::vector<sqlkit::SegmentSet> segment_sets;  // every set extracted so far
  sqlkit::SegmentSet segments;             // S_{i-1} for the next turn
  Tokens segment_source;                   // query the current segments come from
};

SessionState new_session(const Date& document_date);

struct PredictionRecord {
  int turn = 0;
  Tokens utterance;            // anonymized
  Tokens decisions;            // raw decoder output with segment references
  Tokens anonymized_query;     // expanded
  Tokens query;                // de-anonymized, parentheses fixed
  std::vector<sqlkit::Segment> segments_used;
  Tokens attention_tokens;     // attendable memory tokens
  std::vector<std::vector<double>> attention;
  std::vector<std::pair<std::string, std::string>> added;  // new mapping entries
  bool hit_cap = false;
};

struct InferenceContext {
  model::Model* model = nullptr;
  const preprocess::EntityDictionary* dictionary = nullptr;
  const corpus::Database* database = nullptr;  // schema check for the segment fallback
  int max_tokens = kMaxDecodeTokens;
};

// Predicts one turn and advances the session. In predicted mode the next
// segment set is extracted from this prediction when it parses and follows
// the schema; otherwise the previous set stays (the most recent valid query).
PredictionRecord predict_turn(const InferenceContext& ctx, SessionState& state, const Tokens& utterance,
                              PreviousQueryMode mode = PreviousQueryMode::Predicted);

// Predicted mode: makes `anonymized_query` (turn state.turn) the segment
// source when it parses and follows the schema; returns whether it did.
bool observe_prediction(SessionState& state, const Tokens& anonymized_query, const corpus::Database* db);

// Gold mode: installs the segments of the gold query of the turn just predicted.
void use_gold_previous_query(SessionState& state, const Tokens& gold_query);

std::vector<PredictionRecord> predict_interaction(const InferenceContext& ctx, const corpus::Interaction& interaction,
                                                  PreviousQueryMode mode);

nlohmann::ordered_json record_to_json(const PredictionRecord& r);

// --- evaluation -------------------------------------------------------------

struct TurnOutcome {
  int turn = 0;
  std::string predicted;
  bool query_match = false;
  bool strict = false;
  bool relaxed = false;
  bool executed = false;
  std::size_t decisions = 0;
};

struct InteractionOutcome {
  std::string id;
  std::vector<TurnOutcome> turns;
};

struct TurnBucket {
  int turn_index = 0;  // the last bucket holds all turns above kCurveTurns
  std::size_t count = 0;
  std::size_t strict = 0;
  double strict_accuracy() const { return count ? static_cast<double>(strict) / static_cast<double>(count) : 0.0; }
};

inline constexpr int kCurveTurns = 20;

struct MetricsReport {
  std::string mode;
  std::size_t n_interactions = 0;
  std::size_t n_turns = 0;
  std::size_t query_matches = 0;
  std::size_t strict_matches = 0;
  std::size_t relaxed_matches = 0;
  std::vector<TurnBucket> per_turn;
  std::vector<InteractionOutcome> interactions;

  double query_accuracy() const;
  double strict_denotation() const;
  double relaxed_denotation() const;
};

// Canonical comparison form: tokens joined by single spaces.
bool query_matches(const Tokens& predicted, const corpus::Query& gold);

// Scores one post-processed prediction against the gold alternatives.
TurnOutcome score_turn(const Tokens& predicted, const corpus::Query& gold, const corpus::Database& db);

MetricsReport evaluate(const InferenceContext& ctx, const std::vector<corpus::Interaction>& dataset,
                       PreviousQueryMode mode);

// Empty when the lattice holds, else a description of the first violation.
std::string check_metric_lattice(const MetricsReport& report);

nlohmann::ordered_json report_to_json(const MetricsReport& report, bool include_interactions = true);

// SVG line charts: strict accuracy by turn index, and accuracy by history window.
std::string per_turn_curve_svg(const std::vector<std::pair<std::string, const MetricsReport*>>& series);
std::string history_sweep_svg(const std::vector<std::pair<int, double>>& points, const std::string& label);

}  // namespace ctxsql::infer_eval
