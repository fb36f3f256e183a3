#include "ctxsql/preprocess/anonymize.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>

#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::preprocess {

namespace {

using std::chrono::sys_days;

constexpr std::array<const char*, 7> kWeekdayNames = {"monday", "tuesday",  "wednesday", "thursday",
                                                      "friday", "saturday", "sunday"};
constexpr std::array<const char*, 12> kMonthNames = {"january", "february", "march",     "april",   "may",      "june",
                                                     "july",    "august",   "september", "october", "november", "december"};
constexpr std::array<const char*, 10> kDigitWords = {"zero", "one", "two",   "three", "four",
                                                     "five", "six", "seven", "eight", "nine"};
constexpr std::array<const char*, 20> kOrdinalUnits = {
    "",          "first",      "second",     "third",     "fourth",     "fifth",    "sixth",
    "seventh",   "eighth",     "ninth",      "tenth",     "eleventh",   "twelfth",  "thirteenth",
    "fourteenth", "fifteenth", "sixteenth", "seventeenth", "eighteenth", "nineteenth"};

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

int index_of(const auto& names, std::string_view token) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (token == names[i]) return static_cast<int>(i);
  }
  return -1;
}

bool before(const Date& x, const Date& y) { return sys_days{x} < sys_days{y}; }

// Day-of-month expression at tokens[pos]: "8", "8th", "eighth",
// "twenty first". Returns (day, token count).
std::optional<std::pair<int, std::size_t>> parse_day(const Tokens& tokens, std::size_t pos, bool allow_numeral) {
  if (pos >= tokens.size()) return std::nullopt;
  const std::string& t = tokens[pos];
  if (all_digits(t) && t.size() <= 2) {
    if (!allow_numeral) return std::nullopt;
    int d = std::stoi(t);
    if (d >= 1 && d <= 31) return std::make_pair(d, std::size_t{1});
    return std::nullopt;
  }
  if (t.size() >= 3 && t.size() <= 4 && all_digits(t.substr(0, t.size() - 2))) {
    std::string suffix = t.substr(t.size() - 2);
    int d = std::stoi(t.substr(0, t.size() - 2));
    if ((suffix == "st" || suffix == "nd" || suffix == "rd" || suffix == "th") && d >= 1 && d <= 31)
      return std::make_pair(d, std::size_t{1});
    return std::nullopt;
  }
  if (t == "twenty" || t == "thirty") {
    int base = t == "twenty" ? 20 : 30;
    if (pos + 1 < tokens.size()) {
      int unit = index_of(kOrdinalUnits, tokens[pos + 1]);
      if (unit >= 1 && unit <= 9 && base + unit <= 31) return std::make_pair(base + unit, std::size_t{2});
    }
    return std::nullopt;
  }
  if (t == "twentieth") return std::make_pair(20, std::size_t{1});
  if (t == "thirtieth") return std::make_pair(30, std::size_t{1});
  int unit = index_of(kOrdinalUnits, t);
  if (unit >= 1) return std::make_pair(unit, std::size_t{1});
  return std::nullopt;
}

std::optional<Date> month_day(int month, int day, const Date& doc) {
  Date d{doc.year(), std::chrono::month{static_cast<unsigned>(month)}, std::chrono::day{static_cast<unsigned>(day)}};
  if (!d.ok()) return std::nullopt;
  if (before(d, doc)) {
    d = Date{doc.year() + std::chrono::years{1}, d.month(), d.day()};
    if (!d.ok()) return std::nullopt;
  }
  return d;
}

ResolvedDate make_resolved(const Date& d, std::size_t begin, std::size_t end) {
  return {static_cast<int>(static_cast<unsigned>(d.day())), static_cast<int>(static_cast<unsigned>(d.month())),
          static_cast<int>(d.year()), begin, end};
}

std::string quote_literal(const corpus::Value& v) {
  if (std::holds_alternative<std::string>(v)) return "'" + std::get<std::string>(v) + "'";
  return corpus::value_to_string(v);
}

}  // namespace

const std::vector<std::string> kDefaultTypePriority = {"CITY", "AIRPORT", "AIRLINE"};

void EntityDictionary::add(const Tokens& surface, const std::string& literal, const std::string& type) {
  if (surface.empty()) throw DataError("dictionary surface form must not be empty");
  for (const auto& t : surface) {
    if (t.empty() || to_lower(t) != t) throw DataError("dictionary surface forms must be lowercase tokens");
  }
  auto it = index_.find(surface);
  if (it != index_.end()) {
    const auto& existing = entries_[it->second];
    if (existing.literal == literal && existing.type == type) return;
    throw DataError("surface form '" + join(surface) + "' maps to both " + existing.literal + " (" + existing.type +
                    ") and " + literal + " (" + type + ")");
  }
  index_.emplace(surface, entries_.size());
  entries_.push_back({surface, literal, type});
  max_len_ = std::max(max_len_, surface.size());
}

const DictionaryEntry* EntityDictionary::longest_match(const Tokens& tokens, std::size_t pos) const {
  std::size_t longest = std::min(max_len_, tokens.size() - std::min(pos, tokens.size()));
  for (std::size_t len = longest; len >= 1; --len) {
    Tokens key(tokens.begin() + static_cast<long>(pos), tokens.begin() + static_cast<long>(pos + len));
    auto it = index_.find(key);
    if (it != index_.end()) return &entries_[it->second];
  }
  return nullptr;
}

EntityDictionary build_entity_dictionary(const corpus::Database& db, const std::vector<std::string>& type_priority) {
  // surface -> candidate (literal, type) pairs in discovery order
  std::map<Tokens, std::vector<std::pair<std::string, std::string>>> candidates;
  std::vector<Tokens> order;
  for (const auto& ec : db.entity_columns) {
    const corpus::Table* table = db.find_table(ec.table);
    if (!table) throw DataError("entity column refers to unknown table '" + ec.table + "'");
    auto col = table->column_index(ec.column);
    if (!col) throw DataError("entity column refers to unknown column '" + ec.table + "." + ec.column + "'");
    auto surface_col = ec.surface_column.empty() ? col : table->column_index(ec.surface_column);
    if (!surface_col) throw DataError("unknown surface column '" + ec.table + "." + ec.surface_column + "'");
    for (const auto& row : table->rows) {
      if (std::holds_alternative<std::monostate>(row[*col])) continue;
      Tokens surface = split_whitespace(to_lower(corpus::value_to_string(row[*surface_col])));
      if (surface.empty()) continue;
      std::pair<std::string, std::string> cand{quote_literal(row[*col]), ec.entity_type};
      auto& list = candidates[surface];
      if (list.empty()) order.push_back(surface);
      if (std::find(list.begin(), list.end(), cand) == list.end()) list.push_back(cand);
    }
  }
  auto rank = [&](const std::string& type) {
    auto it = std::find(type_priority.begin(), type_priority.end(), type);
    return it == type_priority.end() ? type_priority.size() : static_cast<std::size_t>(it - type_priority.begin());
  };
  EntityDictionary dict;
  for (const auto& surface : order) {
    auto list = candidates[surface];
    if (list.size() > 1) {
      std::stable_sort(list.begin(), list.end(), [&](const auto& x, const auto& y) { return rank(x.second) < rank(y.second); });
      bool resolved = rank(list[0].second) < rank(list[1].second);
      if (!resolved) {
        throw DataError("entity collision: '" + join(surface) + "' is both " + list[0].first + " (" + list[0].second +
                        ") and " + list[1].first + " (" + list[1].second + ")");
      }
    }
    dict.add(surface, list[0].first, list[0].second);
  }
  return dict;
}

nlohmann::ordered_json dictionary_to_json(const EntityDictionary& dict) {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : dict.entries()) {
    entries.push_back({{"surface", join(e.surface)}, {"literal", e.literal}, {"type", e.type}});
  }
  return {{"entries", std::move(entries)}};
}

EntityDictionary dictionary_from_json(const nlohmann::json& doc) {
  EntityDictionary dict;
  if (!doc.is_object() || !doc.contains("entries") || !doc.at("entries").is_array())
    throw DataError("dictionary: missing 'entries' array");
  try {
    for (const auto& e : doc.at("entries")) {
      dict.add(split_whitespace(e.at("surface").get<std::string>()), e.at("literal").get<std::string>(),
               e.at("type").get<std::string>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("dictionary: ") + ex.what());
  }
  return dict;
}

EntityDictionary load_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dictionary '" + path + "'");
  try {
    return dictionary_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw DataError("dictionary '" + path + "': " + ex.what());
  }
}

void save_dictionary(const EntityDictionary& dict, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dictionary '" + path + "'");
  out << dictionary_to_json(dict).dump(1) << '\n';
}

Tokens collapse_spelled_numbers(const Tokens& tokens) {
  Tokens out;
  for (std::size_t i = 0; i < tokens.size();) {
    std::size_t j = i;
    std::string digits;
    while (j < tokens.size() && index_of(kDigitWords, tokens[j]) >= 0) {
      digits += static_cast<char>('0' + index_of(kDigitWords, tokens[j]));
      ++j;
    }
    if (j - i >= 2) {
      out.push_back(digits);
      i = j;
    } else {
      out.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

std::vector<ResolvedDate> resolve_dates(const Tokens& tokens, const Date& doc) {
  std::vector<ResolvedDate> out;
  const unsigned doc_weekday = std::chrono::weekday{sys_days{doc}}.iso_encoding();  // Monday = 1
  const Date monday = add_days(doc, -static_cast<int>(doc_weekday - 1));
  std::optional<int> last_month;
  for (std::size_t i = 0; i < tokens.size();) {
    const std::string& t = tokens[i];
    if (t == "today" || t == "tomorrow") {
      out.push_back(make_resolved(add_days(doc, t == "today" ? 0 : 1), i, i + 1));
      ++i;
      continue;
    }
    bool next = (t == "next" || t == "this") && i + 1 < tokens.size() && index_of(kWeekdayNames, tokens[i + 1]) >= 0;
    std::size_t w = next ? i + 1 : i;
    int weekday = index_of(kWeekdayNames, tokens[w]);
    if (weekday >= 0) {
      Date d = add_days(monday, weekday + (next && t == "next" ? 7 : 0));
      if (before(d, doc)) d = add_days(d, 7);
      out.push_back(make_resolved(d, i, w + 1));
      i = w + 1;
      continue;
    }
    int month = index_of(kMonthNames, t);
    if (month >= 0) {
      if (auto day = parse_day(tokens, i + 1, true)) {
        if (auto d = month_day(month + 1, day->first, doc)) {
          out.push_back(make_resolved(*d, i, i + 1 + day->second));
          last_month = month + 1;
          i += 1 + day->second;
          continue;
        }
      }
    }
    if (last_month) {
      bool after_conj = i > 0 && (tokens[i - 1] == "and" || tokens[i - 1] == "or" || tokens[i - 1] == "the");
      if (auto day = parse_day(tokens, i, after_conj)) {
        if (auto d = month_day(*last_month, day->first, doc)) {
          out.push_back(make_resolved(*d, i, i + day->second));
          i += day->second;
          continue;
        }
      }
    }
    ++i;
  }
  return out;
}

std::vector<ResolvedDate> resolve_dates(const corpus::Utterance& utterance, const Date& document_date) {
  return resolve_dates(collapse_spelled_numbers(utterance.tokens), document_date);
}

std::optional<std::pair<int, std::size_t>> parse_time(const Tokens& tokens, std::size_t pos) {
  if (pos >= tokens.size()) return std::nullopt;
  const std::string& t = tokens[pos];
  if (t == "noon") return std::make_pair(1200, std::size_t{1});
  if (t == "midnight") return std::make_pair(0, std::size_t{1});

  std::string clock = t;
  std::string meridiem;
  std::size_t used = 1;
  if (clock.size() > 2 && (clock.ends_with("am") || clock.ends_with("pm"))) {
    meridiem = clock.substr(clock.size() - 2);
    clock = clock.substr(0, clock.size() - 2);
  } else if (pos + 1 < tokens.size() && (tokens[pos + 1] == "am" || tokens[pos + 1] == "pm")) {
    meridiem = tokens[pos + 1];
    used = 2;
  } else {
    return std::nullopt;
  }
  int hour = 0;
  int minute = 0;
  auto colon = clock.find(':');
  std::string hh = clock.substr(0, colon);
  if (!all_digits(hh) || hh.size() > 2) return std::nullopt;
  hour = std::stoi(hh);
  if (colon != std::string::npos) {
    std::string mm = clock.substr(colon + 1);
    if (!all_digits(mm) || mm.size() != 2) return std::nullopt;
    minute = std::stoi(mm);
  }
  if (hour < 1 || hour > 12 || minute > 59) return std::nullopt;
  hour %= 12;
  if (meridiem == "pm") hour += 12;
  return std::make_pair(hour * 100 + minute, used);
}

std::string AnonymizationMapping::placeholder_for(const std::string& type, const std::string& literal) {
  if (auto existing = find_placeholder(literal)) return *existing;
  std::string placeholder = type + "#" + std::to_string(++next_index_[type]);
  entries_.emplace_back(placeholder, literal);
  by_literal_[literal] = placeholder;
  by_placeholder_[placeholder] = literal;
  return placeholder;
}

std::optional<std::string> AnonymizationMapping::find_placeholder(const std::string& literal) const {
  auto it = by_literal_.find(literal);
  if (it == by_literal_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> AnonymizationMapping::find_literal(const std::string& placeholder) const {
  auto it = by_placeholder_.find(placeholder);
  if (it == by_placeholder_.end()) return std::nullopt;
  return it->second;
}

nlohmann::ordered_json AnonymizationMapping::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [p, l] : entries_) out.push_back({{"placeholder", p}, {"literal", l}});
  return out;
}

AnonymizationMapping AnonymizationMapping::from_json(const nlohmann::json& doc) {
  AnonymizationMapping m;
  if (!doc.is_array()) throw DataError("anonymization mapping must be an array");
  for (const auto& e : doc) {
    std::string p = e.at("placeholder").get<std::string>();
    std::string l = e.at("literal").get<std::string>();
    if (!sqlkit::is_placeholder(p)) throw DataError("bad placeholder '" + p + "'");
    std::string made = m.placeholder_for(sqlkit::placeholder_type(p), l);
    if (made != p) throw DataError("mapping entries out of order at '" + p + "'");
  }
  return m;
}

Tokens anonymize_utterance(const Tokens& input, const EntityDictionary& dict, const Date& document_date,
                           AnonymizationMapping& mapping) {
  const Tokens tokens = collapse_spelled_numbers(input);
  struct Replacement {
    std::size_t begin;
    std::size_t end;
    std::vector<std::pair<std::string, std::string>> items;  // type, literal
  };
  std::vector<Replacement> reps;
  std::vector<bool> used(tokens.size(), false);
  auto claim = [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) used[k] = true;
  };

  for (const auto& d : resolve_dates(tokens, document_date)) {
    reps.push_back({d.begin, d.end,
                    {{"DAY", std::to_string(d.day)}, {"MONTH", std::to_string(d.month)}, {"YEAR", std::to_string(d.year)}}});
    claim(d.begin, d.end);
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (used[i]) continue;
    auto time = parse_time(tokens, i);
    if (time && (time->second == 1 || !used[i + 1])) {
      reps.push_back({i, i + time->second, {{"TIME", std::to_string(time->first)}}});
      claim(i, i + time->second);
      i += time->second - 1;
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (used[i]) continue;
    const DictionaryEntry* e = dict.longest_match(tokens, i);
    if (e && std::none_of(used.begin() + static_cast<long>(i), used.begin() + static_cast<long>(i + e->surface.size()),
                          [](bool b) { return b; })) {
      reps.push_back({i, i + e->surface.size(), {{e->type, e->literal}}});
      claim(i, i + e->surface.size());
      i += e->surface.size() - 1;
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!used[i] && all_digits(tokens[i])) {
      reps.push_back({i, i + 1, {{"NUM", std::to_string(std::stoll(tokens[i]))}}});
      used[i] = true;
    }
  }
  std::sort(reps.begin(), reps.end(), [](const Replacement& x, const Replacement& y) { return x.begin < y.begin; });

  Tokens out;
  std::size_t r = 0;
  for (std::size_t i = 0; i < tokens.size();) {
    if (r < reps.size() && reps[r].begin == i) {
      for (const auto& [type, literal] : reps[r].items) out.push_back(mapping.placeholder_for(type, literal));
      i = reps[r].end;
      ++r;
    } else {
      out.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

Tokens anonymize_query(const Tokens& query, const AnonymizationMapping& mapping) {
  Tokens out;
  out.reserve(query.size());
  for (const auto& t : query) {
    auto p = mapping.find_placeholder(t);
    out.push_back(p ? *p : t);
  }
  return out;
}

Tokens deanonymize(const Tokens& tokens, const AnonymizationMapping& mapping) {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto l = sqlkit::is_placeholder(t) ? mapping.find_literal(t) : std::nullopt;
    out.push_back(l ? *l : t);
  }
  return out;
}

Tokens fix_parentheses(const Tokens& tokens) {
  long open = 0;
  long close = 0;
  for (const auto& t : tokens) {
    if (t == "(") ++open;
    if (t == ")") ++close;
  }
  Tokens out = tokens;
  if (open <= close) return out;
  auto at = out.end();
  if (!out.empty() && out.back() == ";") at = out.end() - 1;
  out.insert(at, static_cast<std::size_t>(open - close), ")");
  return out;
}

AnonymizedInteraction anonymize_interaction(const corpus::Interaction& interaction, const EntityDictionary& dict) {
  AnonymizedInteraction out;
  out.raw = interaction;
  for (const auto& turn : interaction.turns) {
    AnonymizedTurn at;
    std::size_t before_size = out.mapping.size();
    at.utterance = anonymize_utterance(turn.utterance.tokens, dict, interaction.document_date, out.mapping);
    at.added.assign(out.mapping.entries().begin() + static_cast<long>(before_size), out.mapping.entries().end());
    for (const auto& alt : turn.query.alternatives) at.queries.push_back(anonymize_query(alt, out.mapping));
    out.turns.push_back(std::move(at));
  }
  return out;
}

nlohmann::ordered_json anonymized_to_json(const AnonymizedInteraction& x) {
  nlohmann::ordered_json doc = corpus::interaction_to_json(x.raw);
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (const auto& t : x.turns) turns.push_back({{"utterance", t.utterance}, {"sql", t.queries}});
  doc["anonymization"] = {{"mapping", x.mapping.to_json()}, {"turns", std::move(turns)}};
  return doc;
}

AnonymizedInteraction anonymized_from_json(const nlohmann::json& doc) {
  AnonymizedInteraction x;
  x.raw = corpus::interaction_from_json(doc);
  if (!doc.contains("anonymization")) throw DataError("missing field 'anonymization'");
  try {
    const auto& an = doc.at("anonymization");
    x.mapping = AnonymizationMapping::from_json(an.at("mapping"));
    const auto& turns = an.at("turns");
    if (turns.size() != x.raw.turns.size()) throw DataError("field 'anonymization.turns' has the wrong length");
    std::set<std::string> seen;
    for (const auto& tj : turns) {
      AnonymizedTurn t;
      t.utterance = tj.at("utterance").get<Tokens>();
      t.queries = tj.at("sql").get<std::vector<Tokens>>();
      for (const auto& tok : t.utterance) {
        if (sqlkit::is_placeholder(tok) && seen.insert(tok).second) {
          auto lit = x.mapping.find_literal(tok);
          if (!lit) throw DataError("placeholder '" + tok + "' missing from mapping");
          t.added.emplace_back(tok, *lit);
        }
      }
      x.turns.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("field 'anonymization': ") + ex.what());
  }
  return x;
}

void save_anonymized(const std::vector<AnonymizedInteraction>& xs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& x : xs) out << anonymized_to_json(x).dump() << '\n';
}

std::vector<AnonymizedInteraction> load_anonymized(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<AnonymizedInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      out.push_back(anonymized_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + ex.what());
    } catch (const DataError& ex) {
      throw DataError("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace ctxsql::preprocess
