#include "ctxsql/model/model.hpp"

#include <algorithm>
#include <set>

#include "ctxsql/common.hpp"
#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::model {

namespace {

const std::vector<std::string> kDefaultAnonTypes = {"AIRLINE", "AIRPORT", "CITY", "DAY", "MONTH", "NUM", "TIME", "YEAR"};

NodeId apply_dropout(Graph& g, NodeId x, const Dropout& d) {
  if (!d.active()) return x;
  const nn::Mat& v = g.value(x);
  std::bernoulli_distribution keep(1.0 - d.p);
  nn::Mat mask(v.rows(), v.cols());
  const double s = 1.0 / (1.0 - d.p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*d.rng) ? s : 0.0;
  return g.mask(x, mask);
}

struct BiStates {
  std::vector<NodeId> fw;  // [h; c] per position
  std::vector<NodeId> bw;
};

BiStates run_bilstm(Graph& g, const Model::Lstm& fw, const Model::Lstm& bw, const std::vector<NodeId>& inputs, int dim) {
  BiStates out;
  const std::size_t n = inputs.size();
  out.fw.resize(n);
  out.bw.resize(n);
  NodeId zero = g.input(nn::Mat::Zero(2 * dim, 1));
  NodeId s = zero;
  for (std::size_t j = 0; j < n; ++j) out.fw[j] = s = g.lstm(*fw.w, *fw.b, inputs[j], s);
  s = zero;
  for (std::size_t j = n; j-- > 0;) out.bw[j] = s = g.lstm(*bw.w, *bw.b, inputs[j], s);
  return out;
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Seq2Seq0: return "seq2seq-0";
    case Variant::Seq2SeqH: return "seq2seq-h";
    case Variant::S2SAnon: return "s2s-anon";
    case Variant::Full0: return "full-0";
    case Variant::Full: return "full";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Seq2Seq0, Variant::Seq2SeqH, Variant::S2SAnon, Variant::Full0, Variant::Full}) {
    if (name == variant_name(v)) return v;
  }
  throw Error("unknown variant '" + name + "' (expected seq2seq-0, seq2seq-h, s2s-anon, full-0 or full)");
}

bool uses_turn_encoder(Variant v) { return v == Variant::Full0 || v == Variant::Full; }
bool uses_concat_history(Variant v) { return v == Variant::Seq2SeqH || v == Variant::S2SAnon; }
bool uses_anon_scoring(Variant v) { return v == Variant::S2SAnon || v == Variant::Full0 || v == Variant::Full; }
bool uses_segments(Variant v) { return v == Variant::Full0 || v == Variant::Full; }

void ModelConfig::validate() const {
  if (word_embedding_dim <= 0 || hidden_dim <= 0 || position_embedding_dim <= 0 || segment_age_embedding_dim <= 0)
    throw Error("model dimensions must be positive");
  if (hidden_dim % 2 != 0) throw Error("hidden_dim must be even (split across encoder directions)");
  if (2 * hidden_dim - segment_age_embedding_dim <= 0 || (2 * hidden_dim - segment_age_embedding_dim) % 4 != 0)
    throw Error("2 * hidden_dim - segment_age_embedding_dim must be a positive multiple of 4");
  if (h < 0) throw Error("h must be non-negative");
  if (g < 1) throw Error("g must be at least 1");
  if (decoder_layers < 1) throw Error("decoder_layers must be at least 1");
  if (min_input_count < 1) throw Error("min_input_count must be at least 1");
}

int ModelConfig::history_window() const {
  switch (variant) {
    case Variant::Seq2Seq0:
    case Variant::Full0: return 0;
    default: return h;
  }
}

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  return {{"word_embedding_dim", c.word_embedding_dim},
          {"hidden_dim", c.hidden_dim},
          {"position_embedding_dim", c.position_embedding_dim},
          {"segment_age_embedding_dim", c.segment_age_embedding_dim},
          {"h", c.h},
          {"g", c.g},
          {"decoder_layers", c.decoder_layers},
          {"min_input_count", c.min_input_count},
          {"variant", variant_name(c.variant)}};
}

ModelConfig config_from_json(const nlohmann::json& doc) {
  ModelConfig c;
  if (!doc.is_object()) throw Error("model config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "word_embedding_dim") c.word_embedding_dim = value.get<int>();
    else if (key == "hidden_dim") c.hidden_dim = value.get<int>();
    else if (key == "position_embedding_dim") c.position_embedding_dim = value.get<int>();
    else if (key == "segment_age_embedding_dim") c.segment_age_embedding_dim = value.get<int>();
    else if (key == "h") c.h = value.get<int>();
    else if (key == "g") c.g = value.get<int>();
    else if (key == "decoder_layers") c.decoder_layers = value.get<int>();
    else if (key == "min_input_count") c.min_input_count = value.get<int>();
    else if (key == "variant") c.variant = parse_variant(value.get<std::string>());
    else throw Error("unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (auto& t : tokens) add(t);
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

Vocabs build_vocabs(const std::vector<Tokens>& utterances, const std::vector<Tokens>& queries, const ModelConfig& config) {
  const bool anon = uses_anon_scoring(config.variant);
  std::set<std::string> types(kDefaultAnonTypes.begin(), kDefaultAnonTypes.end());
  std::map<std::string, int> counts;
  for (const auto& u : utterances) {
    for (const auto& t : u) {
      if (sqlkit::is_placeholder(t)) types.insert(sqlkit::placeholder_type(t));
      ++counts[anon && sqlkit::is_placeholder(t) ? sqlkit::placeholder_type(t) : t];
    }
  }
  Vocabs v;
  v.input.add(kUnk);
  v.input.add(kDelim);
  if (anon) {
    for (const auto& t : types) v.input.add(t);
  }
  for (const auto& [t, n] : counts) {
    if (n >= config.min_input_count) v.input.add(t);
  }
  std::set<std::string> out;
  for (const auto& q : queries) {
    for (const auto& t : q) {
      if (sqlkit::is_placeholder(t)) {
        types.insert(sqlkit::placeholder_type(t));
        if (anon) continue;
      }
      out.insert(t);
    }
  }
  v.output.add(kEnd);
  v.output.add(kUnk);
  for (const auto& t : out) v.output.add(t);
  v.anon_types.assign(types.begin(), types.end());
  return v;
}

Model::Lstm Model::add_lstm(const std::string& name, int input, int hidden) {
  Lstm l;
  l.w = &params_.add(name + ".w", 4 * hidden, input + hidden);
  l.b = &params_.add(name + ".b", 4 * hidden, 1);
  return l;
}

Model::Model(ModelConfig config, Vocabs vocabs) : config_(config), vocabs_(std::move(vocabs)) {
  config_.validate();
  const int e = config_.word_embedding_dim;
  const int h = config_.hidden_dim;
  const int sd = config_.state_dim();
  const Variant v = config_.variant;
  for (std::size_t k = 0; k < vocabs_.anon_types.size(); ++k) {
    type_row_[vocabs_.anon_types[k]] = vocabs_.output.size() + 1 + static_cast<int>(k);
  }
  emb_x = &params_.add("emb_x", e, vocabs_.input.size());
  emb_y = &params_.add("emb_y", e, vocabs_.output.size() + 1 + static_cast<int>(vocabs_.anon_types.size()));
  const int enc_in = e + (uses_turn_encoder(v) ? h : 0);
  enc_fw = add_lstm("enc_fw", enc_in, h / 2);
  enc_bw = add_lstm("enc_bw", enc_in, h / 2);
  if (uses_turn_encoder(v)) {
    pos = &params_.add("pos", config_.position_embedding_dim, config_.history_window() + 1);
    turn = add_lstm("turn", h, h);
    discourse0 = &params_.add("discourse0", 2 * h, 1);
  }
  if (uses_segments(v)) {
    age = &params_.add("age", config_.segment_age_embedding_dim, config_.g + 1);
    seg_fw = add_lstm("seg_fw", e, config_.segment_encoder_dim());
    seg_bw = add_lstm("seg_bw", e, config_.segment_encoder_dim());
    w_s = &params_.add("w_s", h, 2 * h);
  }
  for (int l = 0; l < config_.decoder_layers; ++l) {
    dec.push_back(add_lstm("dec" + std::to_string(l + 1), l == 0 ? e + sd : h, h));
  }
  w_a = &params_.add("w_a", sd, h);
  w_m = &params_.add("w_m", h, h + sd);
  w_o = &params_.add("w_o", vocabs_.output.size(), h);
  b_o = &params_.add("b_o", vocabs_.output.size(), 1);
}

void Model::initialize(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  params_.init_uniform(scale, rng);
}

int Model::input_id(const std::string& token) const {
  if (uses_anon_scoring(config_.variant) && sqlkit::is_placeholder(token)) {
    int id = vocabs_.input.id(sqlkit::placeholder_type(token));
    return id >= 0 ? id : vocabs_.input.id(kUnk);
  }
  int id = vocabs_.input.id(token);
  return id >= 0 ? id : vocabs_.input.id(kUnk);
}

int Model::output_embedding_id(const std::string& token) const {
  if (token == kStart) return start_embedding_id();
  if (uses_anon_scoring(config_.variant) && sqlkit::is_placeholder(token)) {
    auto it = type_row_.find(sqlkit::placeholder_type(token));
    return it != type_row_.end() ? it->second : vocabs_.output.id(kUnk);
  }
  int id = vocabs_.output.id(token);
  return id >= 0 ? id : vocabs_.output.id(kUnk);
}

EncoderStates encode_utterance(Graph& g, Model& m, const Tokens& tokens, std::optional<NodeId> discourse,
                               const Dropout&) {
  if (tokens.empty()) throw Error("cannot encode an empty utterance");
  const int h = m.config().hidden_dim;
  const int q = h / 2;
  EncoderStates out;
  out.tokens = tokens;
  std::optional<NodeId> dh;
  if (discourse && uses_turn_encoder(m.config().variant)) dh = g.slice(*discourse, 0, h);
  std::vector<NodeId> inputs;
  for (const auto& t : tokens) {
    NodeId x = g.lookup(*m.emb_x, m.input_id(t));
    inputs.push_back(dh ? g.concat({x, *dh}) : x);
    out.attendable.push_back(t != kDelim);
  }
  BiStates bi = run_bilstm(g, m.enc_fw, m.enc_bw, inputs, q);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    out.states.push_back(g.concat({g.slice(bi.fw[j], 0, q), g.slice(bi.bw[j], 0, q)}));
  }
  const std::size_t last = tokens.size() - 1;
  out.final_hidden = out.states[last];
  out.final_state = g.concat({g.slice(bi.fw[last], 0, q), g.slice(bi.bw[last], 0, q), g.slice(bi.fw[last], q, q),
                              g.slice(bi.bw[last], q, q)});
  return out;
}

NodeId initial_discourse(Graph& g, Model& m) { return g.param(*m.discourse0); }

NodeId update_discourse(Graph& g, Model& m, NodeId discourse, NodeId final_hidden) {
  return g.lstm(*m.turn.w, *m.turn.b, final_hidden, discourse);
}

Memory build_memory(Graph& g, Model& m, const std::vector<MemoryPart>& parts) {
  Memory mem;
  std::vector<NodeId> cols;
  NodeId zero_pos = -1;
  for (const auto& part : parts) {
    NodeId p;
    if (m.pos) {
      p = g.lookup(*m.pos, std::min(part.distance, static_cast<int>(m.pos->value.cols()) - 1));
    } else {
      if (zero_pos < 0) zero_pos = g.input(nn::Mat::Zero(m.config().position_embedding_dim, 1));
      p = zero_pos;
    }
    for (std::size_t j = 0; j < part.states->tokens.size(); ++j) {
      if (!part.states->attendable[j]) continue;
      cols.push_back(g.concat({part.states->states[j], p}));
      mem.tokens.push_back(part.states->tokens[j]);
      mem.turns.push_back(part.turn);
      mem.positions.push_back(static_cast<int>(j));
    }
  }
  if (cols.empty()) throw Error("attention memory is empty");
  mem.matrix = g.columns(cols);
  return mem;
}

Attention attend(Graph& g, Model& m, NodeId decoder_hidden, const Memory& memory) {
  Attention a;
  NodeId u = g.linear(*m.w_a, decoder_hidden);
  a.scores = g.mat_t_vec(memory.matrix, u);
  a.alpha = g.softmax(a.scores);
  a.context = g.mat_vec(memory.matrix, a.alpha);
  return a;
}

NodeId encode_segments(Graph& g, Model& m, const Tokens& source, const sqlkit::SegmentSet& segments, int turn,
                       const Dropout&) {
  if (segments.empty() || !uses_segments(m.config().variant)) return -1;
  const int q = m.config().segment_encoder_dim();
  std::vector<NodeId> inputs;
  for (const auto& t : source) inputs.push_back(g.lookup(*m.emb_y, m.output_embedding_id(t)));
  BiStates bi = run_bilstm(g, m.seg_fw, m.seg_bw, inputs, q);
  std::vector<NodeId> cols;
  for (const auto& s : segments.segments) {
    const std::size_t l = s.l - 1;
    const std::size_t r = s.r - 1;
    int age = std::clamp(turn - s.a, 0, m.config().g);
    cols.push_back(g.concat({g.slice(bi.fw[l], 0, q), g.slice(bi.bw[l], 0, q), g.slice(bi.fw[r], 0, q),
                             g.slice(bi.bw[r], 0, q), g.lookup(*m.age, age)}));
  }
  return g.columns(cols);
}

int Candidates::placeholder_index(const std::string& token) const {
  auto it = std::find(placeholders.begin(), placeholders.end(), token);
  return it == placeholders.end() ? -1 : n_vocab + static_cast<int>(it - placeholders.begin());
}

Candidates make_candidates(const Model& m, const Memory& memory, const sqlkit::SegmentSet* segments,
                           NodeId segment_matrix) {
  Candidates c;
  c.n_vocab = m.output_vocab_size();
  if (uses_anon_scoring(m.config().variant)) {
    for (std::size_t j = 0; j < memory.tokens.size(); ++j) {
      const auto& t = memory.tokens[j];
      if (!sqlkit::is_placeholder(t)) continue;
      auto it = std::find(c.placeholders.begin(), c.placeholders.end(), t);
      if (it == c.placeholders.end()) {
        c.placeholders.push_back(t);
        c.occurrences.emplace_back();
        it = c.placeholders.end() - 1;
      }
      c.occurrences[static_cast<std::size_t>(it - c.placeholders.begin())].push_back(static_cast<int>(j));
    }
  }
  if (uses_segments(m.config().variant) && segments && !segments->empty() && segment_matrix >= 0) {
    c.segments = segments;
    c.segment_matrix = segment_matrix;
  }
  return c;
}

NodeId output_distribution(Graph& g, Model& m, NodeId mk, NodeId scores, const Candidates& c) {
  std::vector<NodeId> parts = {g.affine(*m.w_o, mk, *m.b_o)};
  if (!c.placeholders.empty()) parts.push_back(g.group_logsumexp(scores, c.occurrences));
  if (c.n_segments() > 0) parts.push_back(g.mat_t_vec(c.segment_matrix, g.linear_t(*m.w_s, mk)));
  return parts.size() == 1 ? parts[0] : g.concat(parts);
}

NodeId embed_output(Graph& g, Model& m, const OutputSymbol& symbol) {
  if (symbol.segment) {
    std::vector<int> ids;
    for (const auto& t : symbol.segment->tokens) ids.push_back(m.output_embedding_id(t));
    return g.mean_lookup(*m.emb_y, ids);
  }
  return g.lookup(*m.emb_y, m.output_embedding_id(symbol.token));
}

NodeId start_embedding(Graph& g, Model& m) { return g.lookup(*m.emb_y, m.start_embedding_id()); }

DecoderState initial_decoder_state(Graph& g, Model& m, NodeId encoder_final_state) {
  DecoderState s;
  s.layers.assign(m.dec.size(), encoder_final_state);
  s.context = g.input(nn::Mat::Zero(m.config().state_dim(), 1));
  return s;
}

DecoderStep decoder_step(Graph& g, Model& m, NodeId prev_embedding, DecoderState& state, const Memory& memory,
                         const Candidates& candidates, const Dropout& dropout) {
  const int h = m.config().hidden_dim;
  DecoderStep step;
  NodeId x = g.concat({prev_embedding, state.context});
  for (std::size_t l = 0; l < m.dec.size(); ++l) {
    state.layers[l] = g.lstm(*m.dec[l].w, *m.dec[l].b, x, state.layers[l]);
    x = g.slice(state.layers[l], 0, h);
    if (l == 0 && m.dec.size() > 1) x = apply_dropout(g, x, dropout);
  }
  step.hidden = x;
  step.attention = attend(g, m, step.hidden, memory);
  step.mk = apply_dropout(g, g.tanh(g.linear(*m.w_m, g.concat({step.hidden, step.attention.context}))), dropout);
  step.logits = output_distribution(g, m, step.mk, step.attention.scores, candidates);
  state.context = step.attention.context;
  return step;
}

int target_index(const Model& m, const Candidates& c, const std::string& token) {
  if (std::size_t k = sqlkit::segment_reference_index(token)) {
    return static_cast<int>(k) <= c.n_segments()
               ? c.n_vocab + static_cast<int>(c.placeholders.size()) + static_cast<int>(k) - 1
               : -1;
  }
  if (uses_anon_scoring(m.config().variant) && sqlkit::is_placeholder(token)) return c.placeholder_index(token);
  return m.vocabs().output.id(token);
}

Tokens concat_history(const std::vector<Tokens>& previous, const Tokens& current, int h) {
  Tokens out;
  std::size_t n = std::min(previous.size(), static_cast<std::size_t>(std::max(h, 0)));
  for (std::size_t k = previous.size() - n; k < previous.size(); ++k) {
    out.insert(out.end(), previous[k].begin(), previous[k].end());
    out.push_back(kDelim);
  }
  out.insert(out.end(), current.begin(), current.end());
  return out;
}

}  // namespace ctxsql::model
