#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxsql/common.hpp"
#include "ctxsql/corpus/database.hpp"

namespace ctxsql::corpus {

struct Utterance {
  std::vector<std::string> tokens;
  std::string raw_text;
};

// A gold query with its alternatives. `texts[i]` is the annotated SQL
// string and `alternatives[i]` its SQL token sequence.
struct Query {
  std::vector<std::string> texts;
  std::vector<std::vector<std::string>> alternatives;

  const std::vector<std::string>& tokens() const { return alternatives.front(); }
  // Minimum-length alternative; the first one on ties.
  const std::vector<std::string>& shortest() const;
};

struct Turn {
  Utterance utterance;
  Query query;
};

struct Interaction {
  std::string id;
  std::string scenario_id;
  Date document_date;
  std::vector<Turn> turns;  // turn i (1-based) is turns[i - 1]
};

// Lowercases, splits on whitespace and splits trailing punctuation off.
std::vector<std::string> tokenize_utterance(std::string_view text);
Utterance make_utterance(std::string_view text);
Query make_query(std::vector<std::string> sql_texts);

Interaction interaction_from_json(const nlohmann::json& record);
nlohmann::ordered_json interaction_to_json(const Interaction& interaction);

// Reads an interactions JSONL file. `format` must be "jsonl".
std::vector<Interaction> load_interactions(const std::string& path, const std::string& format = "jsonl");
std::vector<Interaction> read_interactions(std::istream& in);
void write_interactions(const std::vector<Interaction>& interactions, std::ostream& out);
void save_interactions(const std::vector<Interaction>& interactions, const std::string& path);

// Splits by scenario so that no scenario crosses splits. Scenarios are
// ordered by interaction count (ties shuffled by `seed`) and dealt to the
// split furthest below its target share.
std::vector<std::vector<Interaction>> split_by_scenario(const std::vector<Interaction>& interactions,
                                                        const std::vector<double>& ratios, std::uint64_t seed);

struct CorpusStatistics {
  std::size_t n_interactions = 0;
  std::size_t n_turns = 0;
  double mean_turns = 0.0;
  std::size_t max_turns = 0;
  double mean_utterance_tokens = 0.0;
  std::size_t max_utterance_tokens = 0;
  double mean_query_tokens = 0.0;
  std::size_t max_query_tokens = 0;
  std::size_t input_vocab_size = 0;
  std::size_t output_vocab_size = 0;
};

CorpusStatistics corpus_statistics(const std::vector<Interaction>& interactions);
nlohmann::ordered_json statistics_to_json(const CorpusStatistics& stats);

enum class Phenomenon { ConstraintAdd, ConstraintReplace, TargetChange, FocusChange, ExplicitReference };
inline constexpr std::size_t kPhenomenonCount = 5;
const char* phenomenon_name(Phenomenon p);

struct TurnLengthDistribution {
  double mean = 7.0;  // 1 + Poisson(mean - 1), clipped to max
  int max = 64;
};

struct CorpusSpec {
  int n_interactions = 200;
  TurnLengthDistribution turn_length;
  // Indexed by Phenomenon.
  std::array<double, kPhenomenonCount> phenomenon_weights{0.4, 0.25, 0.15, 0.1, 0.1};
  double interactions_per_scenario = 3.0;
  std::uint64_t seed = 1;

  void validate() const;
};

CorpusSpec corpus_spec_from_json(const nlohmann::json& doc);

struct SyntheticCorpus {
  std::vector<Interaction> interactions;
  Database database;
  // phenomena[k][i] is the phenomenon realized by turn i + 1 of interaction k
  // (turn 1 is always FocusChange: a fresh request).
  std::vector<std::vector<Phenomenon>> phenomena;
};

SyntheticCorpus generate_synthetic_corpus(const CorpusSpec& spec);

// The flight-domain miniature database used by the generator.
Database build_flight_database(std::uint64_t seed);

}  // namespace ctxsql::corpus
