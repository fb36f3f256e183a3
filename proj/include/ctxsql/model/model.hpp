#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxsql/nn/graph.hpp"
#include "ctxsql/sqlkit/segments.hpp"

namespace ctxsql::model {

using Tokens = std::vector<std::string>;
using nn::Graph;
using nn::NodeId;

enum class Variant { Seq2Seq0, Seq2SeqH, S2SAnon, Full0, Full };

const char* variant_name(Variant v);  // seq2seq-0, seq2seq-h, s2s-anon, full-0, full
Variant parse_variant(const std::string& name);

bool uses_turn_encoder(Variant v);
bool uses_concat_history(Variant v);
bool uses_anon_scoring(Variant v);
bool uses_segments(Variant v);

struct ModelConfig {
  int word_embedding_dim = 400;
  int hidden_dim = 800;
  int position_embedding_dim = 50;
  int segment_age_embedding_dim = 64;
  int h = 3;  // history window
  int g = 4;  // max distinct segment age
  int decoder_layers = 2;
  int min_input_count = 2;  // rarer input words map to <unk>
  Variant variant = Variant::Full;

  void validate() const;
  // Previous utterances attendable at each turn for this variant.
  int history_window() const;
  int segment_encoder_dim() const { return (2 * hidden_dim - segment_age_embedding_dim) / 4; }
  int state_dim() const { return hidden_dim + position_embedding_dim; }  // attended vector width
};

nlohmann::ordered_json config_to_json(const ModelConfig& c);
// Unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& doc);

inline constexpr const char* kUnk = "<unk>";
inline constexpr const char* kDelim = "<delim>";
inline constexpr const char* kEnd = "<end>";
inline constexpr const char* kStart = "<start>";

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);
  int add(const std::string& token);
  int id(const std::string& token) const;  // -1 if absent
  const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

struct Vocabs {
  Vocabulary input;   // phi^x rows
  Vocabulary output;  // scored output tokens (W^o rows); phi^y has extra <start> and type rows
  std::vector<std::string> anon_types;
};

// Builds vocabularies from anonymized training utterances and gold queries.
Vocabs build_vocabs(const std::vector<Tokens>& utterances, const std::vector<Tokens>& queries, const ModelConfig& config);

struct Dropout {
  double p = 0.0;
  std::mt19937_64* rng = nullptr;
  bool active() const { return p > 0.0 && rng != nullptr; }
};

class Model {
 public:
  Model(ModelConfig config, Vocabs vocabs);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void initialize(std::uint64_t seed, double scale = 0.1);

  const ModelConfig& config() const { return config_; }
  const Vocabs& vocabs() const { return vocabs_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  int input_id(const std::string& token) const;
  // phi^y column of a token (placeholders use their type row in anon variants).
  int output_embedding_id(const std::string& token) const;
  int start_embedding_id() const { return vocabs_.output.size(); }
  int end_id() const { return vocabs_.output.id(kEnd); }
  int output_vocab_size() const { return vocabs_.output.size(); }

  struct Lstm {
    nn::Param* w = nullptr;
    nn::Param* b = nullptr;
  };

  nn::Param* emb_x = nullptr;
  nn::Param* emb_y = nullptr;
  nn::Param* pos = nullptr;  // phi^I, columns are distances 0..h
  nn::Param* age = nullptr;  // phi^g, columns are ages 0..g
  Lstm enc_fw, enc_bw, turn, seg_fw, seg_bw;
  std::vector<Lstm> dec;
  nn::Param* discourse0 = nullptr;  // [h; c] learned initial discourse state
  nn::Param* w_a = nullptr;
  nn::Param* w_m = nullptr;
  nn::Param* w_o = nullptr;
  nn::Param* b_o = nullptr;
  nn::Param* w_s = nullptr;

 private:
  ModelConfig config_;
  Vocabs vocabs_;
  nn::ParamStore params_;
  std::map<std::string, int> type_row_;

  Lstm add_lstm(const std::string& name, int input, int hidden);
};

// --- graph building -----------------------------------------------------

struct EncoderStates {
  Tokens tokens;
  std::vector<NodeId> states;      // h^E per token (hidden_dim wide)
  std::vector<bool> attendable;    // false for delimiters
  NodeId final_hidden = -1;        // h^E at the last token
  NodeId final_state = -1;         // [h^E; c^E] at the last token, decoder init
};

// `discourse` is the previous [h^I; c^I] node for turn-level variants.
EncoderStates encode_utterance(Graph& g, Model& m, const Tokens& tokens, std::optional<NodeId> discourse,
                               const Dropout& dropout = {});
NodeId initial_discourse(Graph& g, Model& m);
NodeId update_discourse(Graph& g, Model& m, NodeId discourse, NodeId final_hidden);

// The attendable memory for one decoding pass: columns [h^E; phi^I(i - t)].
struct Memory {
  NodeId matrix = -1;             // state_dim x N
  Tokens tokens;                  // attendable tokens in order
  std::vector<int> turns;         // source turn of each column
  std::vector<int> positions;     // token index within its utterance
};

struct MemoryPart {
  const EncoderStates* states;
  int turn;
  int distance;  // i - t
};
Memory build_memory(Graph& g, Model& m, const std::vector<MemoryPart>& parts);

struct Attention {
  NodeId scores = -1;
  NodeId alpha = -1;
  NodeId context = -1;
};
Attention attend(Graph& g, Model& m, NodeId decoder_hidden, const Memory& memory);

// Columns h^s for each segment (2 * hidden_dim x |S|), or -1 for an empty set.
NodeId encode_segments(Graph& g, Model& m, const Tokens& source_query, const sqlkit::SegmentSet& segments, int turn,
                       const Dropout& dropout = {});

// Output candidates: [vocab | anonymized placeholders | segments].
struct Candidates {
  int n_vocab = 0;
  Tokens placeholders;                      // by first occurrence in memory
  std::vector<std::vector<int>> occurrences;  // memory columns of each placeholder
  const sqlkit::SegmentSet* segments = nullptr;
  NodeId segment_matrix = -1;

  int size() const { return n_vocab + static_cast<int>(placeholders.size()) + n_segments(); }
  int n_segments() const { return segments && segment_matrix >= 0 ? static_cast<int>(segments->size()) : 0; }
  int placeholder_index(const std::string& token) const;  // candidate index or -1
};

Candidates make_candidates(const Model& m, const Memory& memory, const sqlkit::SegmentSet* segments,
                           NodeId segment_matrix);

// Logits z with exp(z) equal to the unnormalized scores of all candidates.
NodeId output_distribution(Graph& g, Model& m, NodeId mk, NodeId scores, const Candidates& c);

// A previous decoder output: an output token or a segment.
struct OutputSymbol {
  std::string token;                               // used when segment is null
  const sqlkit::Segment* segment = nullptr;
};
NodeId embed_output(Graph& g, Model& m, const OutputSymbol& symbol);
NodeId start_embedding(Graph& g, Model& m);

struct DecoderState {
  std::vector<NodeId> layers;  // [h; c] per layer
  NodeId context = -1;         // c_{k-1}
};
DecoderState initial_decoder_state(Graph& g, Model& m, NodeId encoder_final_state);

struct DecoderStep {
  NodeId hidden = -1;
  Attention attention;
  NodeId mk = -1;
  NodeId logits = -1;
};
DecoderStep decoder_step(Graph& g, Model& m, NodeId prev_embedding, DecoderState& state, const Memory& memory,
                         const Candidates& candidates, const Dropout& dropout = {});

// Candidate index of a gold decision, or -1 if it cannot be generated.
int target_index(const Model& m, const Candidates& c, const std::string& token);

// Anonymized utterance encoding input for concatenation variants:
// previous utterances and the current one joined by delimiters.
Tokens concat_history(const std::vector<Tokens>& previous, const Tokens& current, int h);

// --- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Model& m, const std::string& path, const nlohmann::json& extra = nlohmann::json::object());
std::unique_ptr<Model> load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace ctxsql::model
