#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::corpus {

namespace {

bool is_trailing_punct(char c) { return c == '.' || c == ',' || c == '?' || c == '!' || c == ';' || c == ':'; }

}  // namespace

const std::vector<std::string>& Query::shortest() const {
  const std::vector<std::string>* best = &alternatives.front();
  for (const auto& alt : alternatives) {
    if (alt.size() < best->size()) best = &alt;
  }
  return *best;
}

std::vector<std::string> tokenize_utterance(std::string_view text) {
  std::vector<std::string> tokens;
  for (auto& word : split_whitespace(to_lower(text))) {
    std::vector<std::string> tail;
    while (word.size() > 1 && is_trailing_punct(word.back())) {
      tail.emplace_back(1, word.back());
      word.pop_back();
    }
    tokens.push_back(std::move(word));
    tokens.insert(tokens.end(), tail.rbegin(), tail.rend());
  }
  return tokens;
}

Utterance make_utterance(std::string_view text) {
  Utterance u;
  u.raw_text = std::string(text);
  u.tokens = tokenize_utterance(text);
  return u;
}

Query make_query(std::vector<std::string> sql_texts) {
  Query q;
  for (auto& text : sql_texts) {
    q.alternatives.push_back(sqlkit::tokenize_sql(text));
    q.texts.push_back(std::move(text));
  }
  return q;
}

Interaction interaction_from_json(const nlohmann::json& record) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!record.is_object() || !record.contains(name)) throw DataError(std::string("missing field '") + name + "'");
    return record.at(name);
  };
  Interaction out;
  try {
    out.id = field("id").get<std::string>();
    out.scenario_id = field("scenario").get<std::string>();
    out.document_date = parse_date(field("date").get<std::string>());
    const auto& turns = field("turns");
    if (!turns.is_array() || turns.empty()) throw DataError("field 'turns' must be a non-empty array");
    for (std::size_t i = 0; i < turns.size(); ++i) {
      const auto& tj = turns[i];
      if (!tj.contains("utterance")) throw DataError("turn " + std::to_string(i + 1) + ": missing field 'utterance'");
      if (!tj.contains("sql")) throw DataError("turn " + std::to_string(i + 1) + ": missing field 'sql'");
      Turn turn;
      turn.utterance = make_utterance(tj.at("utterance").get<std::string>());
      if (turn.utterance.tokens.empty()) throw DataError("turn " + std::to_string(i + 1) + ": empty utterance");
      auto texts = tj.at("sql").get<std::vector<std::string>>();
      if (texts.empty()) throw DataError("turn " + std::to_string(i + 1) + ": field 'sql' is empty");
      try {
        turn.query = make_query(std::move(texts));
      } catch (const sqlkit::SqlTokenizeError& ex) {
        throw DataError("turn " + std::to_string(i + 1) + ": field 'sql': " + ex.what());
      }
      for (const auto& alt : turn.query.alternatives) {
        if (alt.empty()) throw DataError("turn " + std::to_string(i + 1) + ": field 'sql' has an empty query");
      }
      out.turns.push_back(std::move(turn));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("wrong field type: ") + ex.what());
  }
  return out;
}

nlohmann::ordered_json interaction_to_json(const Interaction& interaction) {
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (const auto& turn : interaction.turns) {
    turns.push_back({{"utterance", turn.utterance.raw_text}, {"sql", turn.query.texts}});
  }
  return {{"id", interaction.id},
          {"scenario", interaction.scenario_id},
          {"date", format_date(interaction.document_date)},
          {"turns", std::move(turns)}};
}

std::vector<Interaction> read_interactions(std::istream& in) {
  std::vector<Interaction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      out.push_back(interaction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + ex.what());
    } catch (const DataError& ex) {
      throw DataError("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<Interaction> load_interactions(const std::string& path, const std::string& format) {
  if (format != "jsonl") throw DataError("unknown interactions format '" + format + "'");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file '" + path + "'");
  return read_interactions(in);
}

void write_interactions(const std::vector<Interaction>& interactions, std::ostream& out) {
  for (const auto& interaction : interactions) out << interaction_to_json(interaction).dump() << '\n';
}

void save_interactions(const std::vector<Interaction>& interactions, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write interactions file '" + path + "'");
  write_interactions(interactions, out);
}

}  // namespace ctxsql::corpus
