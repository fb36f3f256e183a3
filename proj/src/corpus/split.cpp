#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "ctxsql/corpus/corpus.hpp"

namespace ctxsql::corpus {

std::vector<std::vector<Interaction>> split_by_scenario(const std::vector<Interaction>& interactions,
                                                        const std::vector<double>& ratios, std::uint64_t seed) {
  if (ratios.empty()) throw Error("split ratios must not be empty");
  double total_ratio = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error("split ratios must be positive");
    total_ratio += r;
  }
  if (std::abs(total_ratio - 1.0) > 1e-9) throw Error("split ratios must sum to 1");

  std::map<std::string, std::vector<std::size_t>> by_scenario;
  for (std::size_t i = 0; i < interactions.size(); ++i) by_scenario[interactions[i].scenario_id].push_back(i);
  if (by_scenario.size() < ratios.size()) {
    throw Error("cannot split " + std::to_string(by_scenario.size()) + " scenarios into " +
                std::to_string(ratios.size()) + " splits");
  }

  std::vector<std::string> scenarios;
  for (const auto& [id, _] : by_scenario) scenarios.push_back(id);
  std::mt19937_64 rng(seed);
  std::shuffle(scenarios.begin(), scenarios.end(), rng);
  std::stable_sort(scenarios.begin(), scenarios.end(), [&](const std::string& x, const std::string& y) {
    return by_scenario[x].size() > by_scenario[y].size();
  });

  const std::size_t n_splits = ratios.size();
  std::vector<std::vector<std::string>> assigned(n_splits);
  std::vector<double> counts(n_splits, 0.0);
  double dealt = 0.0;
  std::size_t empty_splits = n_splits;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const double size = static_cast<double>(by_scenario[scenarios[s]].size());
    const std::size_t remaining = scenarios.size() - s;
    std::size_t best = n_splits;
    double best_deficit = -1e300;
    for (std::size_t k = 0; k < n_splits; ++k) {
      // Once the remaining scenarios are only enough to fill the empty splits, fill those.
      if (remaining <= empty_splits && !assigned[k].empty()) continue;
      double deficit = ratios[k] * (dealt + size) - counts[k];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = k;
      }
    }
    if (assigned[best].empty()) --empty_splits;
    assigned[best].push_back(scenarios[s]);
    counts[best] += size;
    dealt += size;
  }

  std::vector<std::vector<Interaction>> out(n_splits);
  for (std::size_t k = 0; k < n_splits; ++k) {
    std::set<std::size_t> members;
    for (const auto& id : assigned[k]) members.insert(by_scenario[id].begin(), by_scenario[id].end());
    for (std::size_t i : members) out[k].push_back(interactions[i]);
  }
  return out;
}

CorpusStatistics corpus_statistics(const std::vector<Interaction>& interactions) {
  if (interactions.empty()) throw DataError("corpus statistics require a non-empty corpus");
  CorpusStatistics s;
  s.n_interactions = interactions.size();
  std::set<std::string> in_vocab;
  std::set<std::string> out_vocab;
  double utt_tokens = 0.0;
  double query_tokens = 0.0;
  for (const auto& interaction : interactions) {
    s.n_turns += interaction.turns.size();
    s.max_turns = std::max(s.max_turns, interaction.turns.size());
    for (const auto& turn : interaction.turns) {
      utt_tokens += static_cast<double>(turn.utterance.tokens.size());
      s.max_utterance_tokens = std::max(s.max_utterance_tokens, turn.utterance.tokens.size());
      const auto& q = turn.query.tokens();
      query_tokens += static_cast<double>(q.size());
      s.max_query_tokens = std::max(s.max_query_tokens, q.size());
      in_vocab.insert(turn.utterance.tokens.begin(), turn.utterance.tokens.end());
      for (const auto& alt : turn.query.alternatives) out_vocab.insert(alt.begin(), alt.end());
    }
  }
  s.mean_turns = static_cast<double>(s.n_turns) / static_cast<double>(s.n_interactions);
  if (s.n_turns > 0) {
    s.mean_utterance_tokens = utt_tokens / static_cast<double>(s.n_turns);
    s.mean_query_tokens = query_tokens / static_cast<double>(s.n_turns);
  }
  s.input_vocab_size = in_vocab.size();
  s.output_vocab_size = out_vocab.size();
  return s;
}

nlohmann::ordered_json statistics_to_json(const CorpusStatistics& s) {
  return {{"interactions", s.n_interactions},
          {"turns", s.n_turns},
          {"mean_turns", s.mean_turns},
          {"max_turns", s.max_turns},
          {"mean_utterance_tokens", s.mean_utterance_tokens},
          {"max_utterance_tokens", s.max_utterance_tokens},
          {"mean_query_tokens", s.mean_query_tokens},
          {"max_query_tokens", s.max_query_tokens},
          {"input_vocab_size", s.input_vocab_size},
          {"output_vocab_size", s.output_vocab_size}};
}

}  // namespace ctxsql::corpus
