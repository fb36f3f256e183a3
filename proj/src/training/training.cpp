#include "ctxsql/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "ctxsql/common.hpp"
#include "ctxsql/corpus/corpus.hpp"
#include "ctxsql/infer_eval/inference.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::training {

using model::EncoderStates;
using model::Memory;
using model::Model;

namespace {

const Tokens& shortest(const std::vector<Tokens>& alternatives) {
  return *std::min_element(alternatives.begin(), alternatives.end(),
                           [](const Tokens& a, const Tokens& b) { return a.size() < b.size(); });
}

int argmax_lowest(const nn::Mat& z) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(z.rows()); ++k) {
    if (z(k, 0) > z(best, 0)) best = k;
  }
  return best;
}

model::Candidates turn_candidates(Graph& g, Model& m, const TrainingExample& ex, const Memory& memory) {
  NodeId seg = -1;
  if (model::uses_segments(m.config().variant) && !ex.segments.empty()) {
    seg = model::encode_segments(g, m, ex.segment_source, ex.segments, ex.turn);
  }
  return model::make_candidates(m, memory, &ex.segments, seg);
}

void teacher_force(Graph& g, Model& m, const TrainingExample& ex, NodeId final_state, const Memory& memory,
                   const model::Dropout& dropout, ForwardStats& stats) {
  model::Candidates c = turn_candidates(g, m, ex, memory);
  model::DecoderState state = model::initial_decoder_state(g, m, final_state);
  NodeId prev = model::start_embedding(g, m);
  for (std::size_t k = 0; k <= ex.target.size(); ++k) {
    const std::string& gold = k < ex.target.size() ? ex.target[k] : std::string(model::kEnd);
    model::DecoderStep step = model::decoder_step(g, m, prev, state, memory, c, dropout);
    const int idx = model::target_index(m, c, gold);
    ++stats.decisions;
    if (idx >= 0) {
      if (argmax_lowest(g.value(step.logits)) == idx) ++stats.correct;
      stats.token_losses.push_back(g.neg_log_softmax(step.logits, idx));
    }
    if (k == ex.target.size()) break;
    model::OutputSymbol symbol;
    std::size_t ref = sqlkit::segment_reference_index(gold);
    if (ref > 0 && static_cast<int>(ref) <= c.n_segments()) {
      symbol.segment = &ex.segments.segments[ref - 1];
    } else {
      symbol.token = gold;
    }
    prev = model::embed_output(g, m, symbol);
  }
}

// Calls f(example, encoder states, memory) for each turn, building the
// encoder side the way the variant sees it.
template <class F>
void walk_turns(Graph& g, Model& m, const InteractionExamples& x, F&& f) {
  const auto variant = m.config().variant;
  if (!model::uses_turn_encoder(variant)) {
    for (const auto& ex : x.turns) {
      EncoderStates enc = model::encode_utterance(g, m, ex.encoder_input, std::nullopt);
      Memory memory = model::build_memory(g, m, {{&enc, ex.turn, 0}});
      f(ex, enc, memory);
    }
    return;
  }
  const int hw = m.config().history_window();
  std::vector<EncoderStates> encs;
  encs.reserve(x.turns.size());
  NodeId discourse = model::initial_discourse(g, m);
  for (std::size_t k = 0; k < x.turns.size(); ++k) {
    const auto& ex = x.turns[k];
    encs.push_back(model::encode_utterance(g, m, ex.utterance, discourse));
    discourse = model::update_discourse(g, m, discourse, encs.back().final_hidden);
    std::vector<model::MemoryPart> parts;
    const int i = static_cast<int>(k) + 1;
    for (int t = std::max(1, i - hw); t <= i; ++t) parts.push_back({&encs[static_cast<std::size_t>(t - 1)], t, i - t});
    Memory memory = model::build_memory(g, m, parts);
    f(ex, encs.back(), memory);
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto rate = [](double x, const char* name) {
    if (!(x > 0.0 && x <= 1.0)) throw Error(std::string(name) + " must be in (0, 1]");
  };
  rate(learning_rate, "learning_rate");
  rate(lr_decay, "lr_decay");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must be in [0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw Error("validation_fraction must be in [0, 1)");
  if (batch_size < 1) throw Error("batch_size must be at least 1");
  if (initial_patience <= 0.0) throw Error("initial_patience must be positive");
  if (patience_multiplier < 1.0) throw Error("patience_multiplier must be at least 1");
  if (max_gold_tokens < 1) throw Error("max_gold_tokens must be positive");
  if (max_epochs < 0) throw Error("max_epochs must be non-negative");
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"initial_patience", c.initial_patience},
          {"patience_multiplier", c.patience_multiplier},
          {"lr_decay", c.lr_decay},
          {"dropout", c.dropout},
          {"max_gold_tokens", c.max_gold_tokens},
          {"validation_fraction", c.validation_fraction},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error("training config must be an object");
  TrainConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "initial_patience") c.initial_patience = value.get<double>();
    else if (key == "patience_multiplier") c.patience_multiplier = value.get<double>();
    else if (key == "lr_decay") c.lr_decay = value.get<double>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "max_gold_tokens") c.max_gold_tokens = value.get<int>();
    else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
    else if (key == "max_epochs") c.max_epochs = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw Error("unknown training config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::vector<InteractionExamples> build_examples(const std::vector<preprocess::AnonymizedInteraction>& data,
                                                const model::ModelConfig& mc, const TrainConfig& tc) {
  std::vector<InteractionExamples> out;
  const bool copy = model::uses_segments(mc.variant);
  for (const auto& x : data) {
    InteractionExamples ix;
    ix.id = x.raw.id;
    std::vector<Tokens> previous;
    std::vector<sqlkit::SegmentSet> sets;
    for (std::size_t k = 0; k < x.turns.size(); ++k) {
      const auto& turn = x.turns[k];
      if (turn.queries.empty()) throw DataError(x.raw.id + ": turn without a gold query");
      TrainingExample ex;
      ex.turn = static_cast<int>(k) + 1;
      ex.utterance = turn.utterance;
      ex.encoder_input = model::uses_concat_history(mc.variant)
                             ? model::concat_history(previous, turn.utterance, mc.history_window())
                             : turn.utterance;
      ex.golds = turn.queries;
      const Tokens& gold = shortest(turn.queries);
      ex.skip_loss = static_cast<int>(gold.size()) > tc.max_gold_tokens;
      if (copy && !sets.empty()) {
        ex.segments = sets.back();
        ex.segment_source = shortest(x.turns[k - 1].queries);
        std::set<std::string> protect;
        for (const auto& t : turn.utterance) {
          if (sqlkit::is_placeholder(t)) protect.insert(t);
        }
        ex.target = sqlkit::align_gold_with_segments(gold, ex.segments, protect);
      } else {
        ex.target = gold;
      }
      sets.push_back(sqlkit::extract_segments(gold, ex.turn, sets));
      previous.push_back(turn.utterance);
      ix.turns.push_back(std::move(ex));
    }
    out.push_back(std::move(ix));
  }
  return out;
}

void forward_utterance(Graph& g, Model& m, const TrainingExample& ex, const model::Dropout& dropout,
                       ForwardStats& stats) {
  if (model::uses_turn_encoder(m.config().variant)) throw Error("turn-level variants train on whole interactions");
  if (ex.skip_loss) return;
  EncoderStates enc = model::encode_utterance(g, m, ex.encoder_input, std::nullopt, dropout);
  Memory memory = model::build_memory(g, m, {{&enc, ex.turn, 0}});
  teacher_force(g, m, ex, enc.final_state, memory, dropout, stats);
}

void forward_interaction(Graph& g, Model& m, const InteractionExamples& x, const model::Dropout& dropout,
                         ForwardStats& stats) {
  walk_turns(g, m, x, [&](const TrainingExample& ex, const EncoderStates& enc, const Memory& memory) {
    if (!ex.skip_loss) teacher_force(g, m, ex, enc.final_state, memory, dropout, stats);
  });
}

NodeId utterance_batch_loss(Graph& g, const std::vector<NodeId>& token_losses) {
  if (token_losses.empty()) return -1;
  return g.scale(g.sum(token_losses), 1.0 / static_cast<double>(token_losses.size()));
}

NodeId interaction_loss(Graph& g, const std::vector<NodeId>& token_losses, std::size_t n, int batch_size) {
  if (token_losses.empty()) return -1;
  const double mean_scale = 1.0 / static_cast<double>(token_losses.size());
  return g.scale(g.scale(g.sum(token_losses), mean_scale), static_cast<double>(n) / batch_size);
}

TeacherForcedMetrics teacher_forced_metrics(Model& m, const std::vector<InteractionExamples>& data) {
  double loss = 0.0;
  std::size_t counted = 0;
  std::size_t correct = 0;
  TeacherForcedMetrics out;
  for (const auto& x : data) {
    Graph g;
    ForwardStats stats;
    if (model::uses_turn_encoder(m.config().variant)) {
      forward_interaction(g, m, x, {}, stats);
    } else {
      for (const auto& ex : x.turns) forward_utterance(g, m, ex, {}, stats);
    }
    for (NodeId l : stats.token_losses) loss += g.scalar(l);
    counted += stats.token_losses.size();
    correct += stats.correct;
    out.decisions += stats.decisions;
  }
  out.token_loss = counted ? loss / static_cast<double>(counted) : 0.0;
  out.token_accuracy = out.decisions ? static_cast<double>(correct) / static_cast<double>(out.decisions) : 0.0;
  return out;
}

double string_accuracy(Model& m, const std::vector<InteractionExamples>& data, int max_tokens) {
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const auto& x : data) {
    Graph g;
    walk_turns(g, m, x, [&](const TrainingExample& ex, const EncoderStates& enc, const Memory& memory) {
      model::Candidates c = turn_candidates(g, m, ex, memory);
      auto d = infer_eval::greedy_decode(g, m, enc.final_state, memory, c, max_tokens);
      ++total;
      hits += std::find(ex.golds.begin(), ex.golds.end(), d.expanded) != ex.golds.end();
    });
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

Schedule::Schedule(const TrainConfig& c, double initial_val_loss)
    : config_(c), lr_(c.learning_rate), patience_(c.initial_patience), prev_loss_(initial_val_loss) {}

bool Schedule::end_epoch(double val_token_loss, double val_token_acc) {
  if (val_token_loss > prev_loss_) lr_ *= config_.lr_decay;
  prev_loss_ = val_token_loss;
  if (val_token_acc > best_acc_) {
    best_acc_ = val_token_acc;
    patience_ *= config_.patience_multiplier;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ > patience_;
}

nlohmann::ordered_json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"lr", e.lr},
          {"patience", e.patience},
          {"train_loss", e.train_loss},
          {"val_token_loss", e.val_token_loss},
          {"val_token_acc", e.val_token_acc},
          {"val_string_acc", e.val_string_acc},
          {"wall_seconds", e.wall_seconds}};
}

TrainResult train(const std::vector<preprocess::AnonymizedInteraction>& data, const TrainConfig& tc,
                  const model::ModelConfig& mc, const std::function<void(const EpochLog&)>& on_epoch) {
  tc.validate();
  mc.validate();
  if (data.empty()) throw DataError("training set is empty");

  std::vector<preprocess::AnonymizedInteraction> train_set;
  std::vector<preprocess::AnonymizedInteraction> val_set;
  if (tc.validation_fraction > 0.0) {
    std::vector<corpus::Interaction> raw;
    for (const auto& x : data) raw.push_back(x.raw);
    auto parts = corpus::split_by_scenario(raw, {1.0 - tc.validation_fraction, tc.validation_fraction}, tc.seed);
    std::set<std::string> val_ids;
    for (const auto& x : parts[1]) val_ids.insert(x.id);
    for (const auto& x : data) (val_ids.count(x.raw.id) ? val_set : train_set).push_back(x);
    if (train_set.empty()) throw DataError("no training interactions left after the validation split");
  } else {
    train_set = data;
  }
  if (val_set.empty()) val_set = train_set;

  std::vector<Tokens> utterances;
  std::vector<Tokens> queries;
  for (const auto& x : train_set) {
    for (const auto& t : x.turns) {
      utterances.push_back(t.utterance);
      for (const auto& q : t.queries) queries.push_back(q);
    }
  }
  TrainResult result;
  result.model = std::make_unique<Model>(mc, model::build_vocabs(utterances, queries, mc));
  Model& m = *result.model;
  m.initialize(tc.seed);
  result.n_train = train_set.size();
  result.n_validation = val_set.size();

  const auto train_x = build_examples(train_set, mc, tc);
  const auto val_x = build_examples(val_set, mc, tc);
  const bool turn_level = model::uses_turn_encoder(mc.variant);

  std::vector<std::pair<std::size_t, std::size_t>> units;  // (interaction, turn or all)
  for (std::size_t k = 0; k < train_x.size(); ++k) {
    if (turn_level) {
      units.emplace_back(k, 0);
    } else {
      for (std::size_t t = 0; t < train_x[k].turns.size(); ++t) units.emplace_back(k, t);
    }
  }

  std::mt19937_64 shuffle_rng(tc.seed ^ 0x5eedULL);
  std::mt19937_64 dropout_rng(tc.seed ^ 0xd20fULL);
  const model::Dropout dropout{tc.dropout, &dropout_rng};
  nn::Adam adam({tc.learning_rate, 0.9, 0.999, 1e-8});
  Schedule schedule(tc, teacher_forced_metrics(m, val_x).token_loss);
  double best_string_acc = -1.0;
  std::vector<nn::Mat> best_values;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; tc.max_epochs == 0 || epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(units.begin(), units.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    auto update = [&](Graph& g, NodeId loss, const ForwardStats& stats, const std::string& where) {
      if (loss < 0) return;
      for (NodeId l : stats.token_losses) loss_sum += g.scalar(l);
      loss_count += stats.token_losses.size();
      if (!std::isfinite(g.scalar(loss))) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + " (" + where + ", lr " +
                    std::to_string(adam.lr()) + ")");
      }
      m.params().zero_grad();
      g.backward(loss);
      adam.step(m.params());
    };
    if (turn_level) {
      for (const auto& [k, unused] : units) {
        Graph g;
        ForwardStats stats;
        forward_interaction(g, m, train_x[k], dropout, stats);
        update(g, interaction_loss(g, stats.token_losses, train_x[k].turns.size(), tc.batch_size), stats,
               "interaction " + train_x[k].id);
      }
    } else {
      for (std::size_t b = 0; b < units.size(); b += static_cast<std::size_t>(tc.batch_size)) {
        Graph g;
        ForwardStats stats;
        const std::size_t e = std::min(units.size(), b + static_cast<std::size_t>(tc.batch_size));
        for (std::size_t u = b; u < e; ++u) {
          forward_utterance(g, m, train_x[units[u].first].turns[units[u].second], dropout, stats);
        }
        update(g, utterance_batch_loss(g, stats.token_losses), stats, "batch starting at " + std::to_string(b));
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = adam.lr();
    log.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    auto tf = teacher_forced_metrics(m, val_x);
    log.val_token_loss = tf.token_loss;
    log.val_token_acc = tf.token_accuracy;
    log.val_string_acc = string_accuracy(m, val_x);

    const bool stop = schedule.end_epoch(tf.token_loss, tf.token_accuracy);
    adam.set_lr(schedule.lr());
    if (log.val_string_acc > best_string_acc) {
      best_string_acc = log.val_string_acc;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : m.params().params()) best_values.push_back(p->value);
    }
    log.patience = schedule.patience();
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stop) break;
  }
  for (std::size_t k = 0; k < best_values.size(); ++k) m.params().params()[k]->value = best_values[k];
  return result;
}

}  // namespace ctxsql::training
