#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxsql/common.hpp"
#include "ctxsql/corpus/corpus.hpp"

namespace ctxsql::preprocess {

using Tokens = std::vector<std::string>;

struct DictionaryEntry {
  Tokens surface;       // lowercase, non-empty
  std::string literal;  // SQL token, e.g. 'SEATTLE'
  std::string type;     // CITY, AIRLINE, ...
};

// Maps natural-language surface forms to SQL literals. Each surface form
// has exactly one entry.
class EntityDictionary {
 public:
  // Throws DataError when `surface` already maps to a different entry.
  void add(const Tokens& surface, const std::string& literal, const std::string& type);
  // Longest entry whose surface starts at tokens[pos]; nullptr if none.
  const DictionaryEntry* longest_match(const Tokens& tokens, std::size_t pos) const;

  const std::vector<DictionaryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<DictionaryEntry> entries_;
  std::map<Tokens, std::size_t> index_;
  std::size_t max_len_ = 0;
};

// Every distinct value of every entity column becomes an entry. When two
// columns produce the same surface form, the type listed first in
// `type_priority` wins; with no applicable priority the collision throws.
EntityDictionary build_entity_dictionary(const corpus::Database& db, const std::vector<std::string>& type_priority = {});

nlohmann::ordered_json dictionary_to_json(const EntityDictionary& dict);
EntityDictionary dictionary_from_json(const nlohmann::json& doc);
EntityDictionary load_dictionary(const std::string& path);
void save_dictionary(const EntityDictionary& dict, const std::string& path);

extern const std::vector<std::string> kDefaultTypePriority;  // CITY > AIRPORT > AIRLINE

struct ResolvedDate {
  int day = 0;
  int month = 0;
  int year = 0;
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
};

// Rule-based date resolution: today, tomorrow, [next|this|on] <weekday>,
// <month> <day>, and bare day numbers following a resolved month. Weekdays
// resolve within the Monday-started week of the document date ("next" adds a
// week); a date before the document date moves forward a week (a year for
// explicit month/day dates). Spelled-out digit runs should be collapsed first.
std::vector<ResolvedDate> resolve_dates(const Tokens& tokens, const Date& document_date);
std::vector<ResolvedDate> resolve_dates(const corpus::Utterance& utterance, const Date& document_date);

// "two three five" -> "235"; runs of at least two digit words only.
Tokens collapse_spelled_numbers(const Tokens& tokens);

// Parses a time expression starting at tokens[pos] ("7pm", "7:30 pm",
// "noon"). Returns (hhmm, token count).
std::optional<std::pair<int, std::size_t>> parse_time(const Tokens& tokens, std::size_t pos);

// Placeholder <-> literal bijection for one interaction. Placeholders are
// numbered per type in order of first occurrence.
class AnonymizationMapping {
 public:
  // Returns the existing placeholder for `literal` or creates TYPE#k.
  std::string placeholder_for(const std::string& type, const std::string& literal);
  std::optional<std::string> find_placeholder(const std::string& literal) const;
  std::optional<std::string> find_literal(const std::string& placeholder) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  nlohmann::ordered_json to_json() const;
  static AnonymizationMapping from_json(const nlohmann::json& doc);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;  // placeholder, literal
  std::map<std::string, std::string> by_literal_;
  std::map<std::string, std::string> by_placeholder_;
  std::map<std::string, int> next_index_;
};

// Anonymizes one utterance, extending `mapping`. Steps: collapse spelled
// digits, resolve dates (DAY MONTH YEAR triples), times (TIME), dictionary
// longest match, remaining numerals (NUM).
Tokens anonymize_utterance(const Tokens& tokens, const EntityDictionary& dict, const Date& document_date,
                           AnonymizationMapping& mapping);

Tokens anonymize_query(const Tokens& query, const AnonymizationMapping& mapping);
// Placeholders missing from the mapping are kept verbatim.
Tokens deanonymize(const Tokens& tokens, const AnonymizationMapping& mapping);
// Appends the missing closing parentheses (before a trailing ';').
Tokens fix_parentheses(const Tokens& tokens);

struct AnonymizedTurn {
  Tokens utterance;
  std::vector<Tokens> queries;  // anonymized gold alternatives
  std::vector<std::pair<std::string, std::string>> added;  // mapping entries new at this turn
};

struct AnonymizedInteraction {
  corpus::Interaction raw;
  std::vector<AnonymizedTurn> turns;
  AnonymizationMapping mapping;  // after the last turn
};

AnonymizedInteraction anonymize_interaction(const corpus::Interaction& interaction, const EntityDictionary& dict);

// Cached anonymized corpora: the interaction record plus an "anonymization"
// object {"mapping": {...}, "turns": [{"utterance": [...], "sql": [[...]]}]}.
nlohmann::ordered_json anonymized_to_json(const AnonymizedInteraction& x);
AnonymizedInteraction anonymized_from_json(const nlohmann::json& doc);
void save_anonymized(const std::vector<AnonymizedInteraction>& xs, const std::string& path);
std::vector<AnonymizedInteraction> load_anonymized(const std::string& path);

}  // namespace ctxsql::preprocess
