#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxsql/model/model.hpp"
#include "ctxsql/preprocess/anonymize.hpp"
#include "ctxsql/sqlkit/segments.hpp"

namespace ctxsql::training {

using model::Graph;
using model::NodeId;
using model::Tokens;

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 16;
  double initial_patience = 10.0;
  double patience_multiplier = 1.01;
  double lr_decay = 0.8;
  double dropout = 0.5;
  int max_gold_tokens = 200;
  double validation_fraction = 0.05;  // 0 validates on the training set
  int max_epochs = 0;                 // 0: until patience runs out
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct TrainingExample {
  int turn = 0;                  // 1-based
  Tokens utterance;              // anonymized
  Tokens encoder_input;          // utterance, or the delimited history for concatenation variants
  std::vector<Tokens> golds;     // anonymized gold alternatives
  Tokens target;                 // shortest gold, aligned with segments where the variant copies
  sqlkit::SegmentSet segments;   // S_{i-1} from gold previous queries
  Tokens segment_source;
  bool skip_loss = false;        // gold longer than max_gold_tokens
};

struct InteractionExamples {
  std::string id;
  std::vector<TrainingExample> turns;
};

std::vector<InteractionExamples> build_examples(const std::vector<preprocess::AnonymizedInteraction>& data,
                                                const model::ModelConfig& mc, const TrainConfig& tc);

struct ForwardStats {
  std::vector<NodeId> token_losses;  // one per reachable gold decision
  std::size_t decisions = 0;         // all teacher-forced steps, <end> included
  std::size_t correct = 0;           // steps whose argmax is the gold decision
};

// Teacher-forced pass over one utterance (no turn-level state).
void forward_utterance(Graph& g, model::Model& m, const TrainingExample& ex, const model::Dropout& dropout,
                       ForwardStats& stats);
// Teacher-forced pass over a whole interaction; the discourse state flows
// across turns and skipped turns are still encoded.
void forward_interaction(Graph& g, model::Model& m, const InteractionExamples& x, const model::Dropout& dropout,
                         ForwardStats& stats);

// Mean token loss over a batch of utterances.
NodeId utterance_batch_loss(Graph& g, const std::vector<NodeId>& token_losses);
// (n / B) * mean token loss, n = utterances in the interaction.
NodeId interaction_loss(Graph& g, const std::vector<NodeId>& token_losses, std::size_t n, int batch_size);

struct TeacherForcedMetrics {
  double token_loss = 0.0;
  double token_accuracy = 0.0;
  std::size_t decisions = 0;
};
TeacherForcedMetrics teacher_forced_metrics(model::Model& m, const std::vector<InteractionExamples>& data);

// Fraction of utterances whose greedy decode (gold previous queries) equals
// an anonymized gold alternative once segments are expanded.
double string_accuracy(model::Model& m, const std::vector<InteractionExamples>& data, int max_tokens = 300);

// Per-epoch learning-rate decay and patience bookkeeping. The loss before
// the first epoch is the reference for the first decay decision.
class Schedule {
 public:
  Schedule(const TrainConfig& c, double initial_val_loss);
  // Applies the rules for one finished epoch; returns true when training stops.
  bool end_epoch(double val_token_loss, double val_token_acc);
  double lr() const { return lr_; }
  double patience() const { return patience_; }
  int epochs_since_best() const { return since_best_; }

 private:
  TrainConfig config_;
  double lr_;
  double patience_;
  double prev_loss_;
  double best_acc_ = -1.0;
  int since_best_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double patience = 0.0;
  double train_loss = 0.0;
  double val_token_loss = 0.0;
  double val_token_acc = 0.0;
  double val_string_acc = 0.0;
  double wall_seconds = 0.0;
};
nlohmann::ordered_json epoch_log_to_json(const EpochLog& e);

struct TrainResult {
  std::unique_ptr<model::Model> model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
};

// Splits off a scenario-disjoint validation set, trains with Adam and the
// patience schedule, and returns the parameters with the best validation
// string accuracy.
TrainResult train(const std::vector<preprocess::AnonymizedInteraction>& data, const TrainConfig& tc,
                  const model::ModelConfig& mc, const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace ctxsql::training
