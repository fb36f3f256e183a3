#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "model_fixtures.hpp"

using namespace ctxsql;
using fixtures::tok;
using model::Variant;

namespace {

nn::Mat column(std::initializer_list<double> xs) {
  nn::Mat m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index k = 0;
  for (double x : xs) m(k++, 0) = x;
  return m;
}

void zero_params(model::Model& m) {
  for (auto& p : m.params().params()) p->value.setZero();
}

void copy_shared_params(const model::Model& from, model::Model& to) {
  for (auto& p : to.params().params()) {
    if (const nn::Param* q = from.params().find(p->name); q && q->value.rows() == p->value.rows() &&
                                                          q->value.cols() == p->value.cols()) {
      p->value = q->value;
    }
  }
}

}  // namespace

TEST_CASE("graph softmax and group log-sum-exp closed forms") {
  nn::Graph g;
  auto s = g.input(column({std::log(3.0), std::log(1.0)}));
  auto a = g.softmax(s);
  CHECK(g.value(a)(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(g.value(a)(1, 0) == doctest::Approx(0.25).epsilon(1e-15));
  auto s3 = g.input(column({0.3, -1.2, 2.0}));
  auto grp = g.group_logsumexp(s3, {{0, 2}, {1}});
  CHECK(g.value(grp)(0, 0) == doctest::Approx(std::log(std::exp(0.3) + std::exp(2.0))));
  CHECK(g.value(grp)(1, 0) == doctest::Approx(-1.2));
  CHECK(nn::logsumexp(column({1000.0, 1000.0})) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("config validation and json round trip") {
  model::ModelConfig c = fixtures::tiny_config(Variant::Full);
  auto back = model::config_from_json(model::config_to_json(c));
  CHECK(model::config_to_json(back) == model::config_to_json(c));
  CHECK_THROWS_AS(model::config_from_json({{"hidden", 3}}), Error);
  model::ModelConfig bad = c;
  bad.hidden_dim = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  model::ModelConfig defaults;
  CHECK(defaults.segment_encoder_dim() * 4 + defaults.segment_age_embedding_dim == 2 * defaults.hidden_dim);
  CHECK(defaults.state_dim() == 850);
  for (auto v : fixtures::kAllVariants) CHECK(model::parse_variant(model::variant_name(v)) == v);
  CHECK_THROWS_AS(model::parse_variant("full-gold"), Error);
}

TEST_CASE("vocabularies: rare input words map to unk, placeholders to types in anon variants") {
  model::ModelConfig c = fixtures::tiny_config(Variant::Full);
  c.min_input_count = 2;
  auto v = model::build_vocabs({tok("from CITY#1 to CITY#2"), tok("from CITY#3 rare")},
                               {tok("SELECT x = CITY#1 ;")}, c);
  model::Model m(c, v);
  CHECK(m.input_id("rare") == m.input_id(model::kUnk));
  CHECK(m.input_id("from") != m.input_id(model::kUnk));
  CHECK(m.input_id("CITY#1") == m.input_id("CITY#7"));
  CHECK(m.vocabs().output.id("CITY#1") == -1);
  CHECK(m.output_embedding_id("CITY#1") == m.output_embedding_id("CITY#2"));
  CHECK(m.output_embedding_id("CITY#1") != m.output_embedding_id("AIRLINE#1"));

  c.variant = Variant::Seq2SeqH;
  auto v2 = model::build_vocabs({tok("from CITY#1 to CITY#2"), tok("from CITY#1")}, {tok("SELECT x = CITY#1 ;")}, c);
  model::Model m2(c, v2);
  CHECK(m2.vocabs().output.id("CITY#1") >= 0);
  CHECK(m2.input_id("CITY#1") != m2.input_id("CITY#2"));
  CHECK(m2.input_id("CITY#2") == m2.input_id(model::kUnk));
}

TEST_CASE("concat_history joins the last h utterances with delimiters") {
  std::vector<model::Tokens> prev = {tok("a b"), tok("c"), tok("d e")};
  CHECK(model::concat_history(prev, tok("x"), 2) == tok("c <delim> d e <delim> x"));
  CHECK(model::concat_history(prev, tok("x"), 0) == tok("x"));
  CHECK(model::concat_history({}, tok("x"), 3) == tok("x"));
  CHECK(model::concat_history(prev, tok("x"), 9) == tok("a b <delim> c <delim> d e <delim> x"));
}

TEST_CASE("attention closed forms") {
  auto m = fixtures::tiny_model(Variant::Full);
  const int sd = m->config().state_dim();
  const int h = m->config().hidden_dim;
  m->w_a->value.setZero();
  m->w_a->value(0, 0) = 1.0;
  nn::Graph g;
  nn::Mat cols = nn::Mat::Zero(sd, 2);
  cols(0, 0) = std::log(3.0);
  cols(0, 1) = std::log(1.0);
  cols(1, 0) = 2.0;
  cols(1, 1) = -4.0;
  model::Memory mem;
  mem.matrix = g.input(cols);
  nn::Mat hd = nn::Mat::Zero(h, 1);
  hd(0, 0) = 1.0;
  auto a = model::attend(g, *m, g.input(hd), mem);
  CHECK(g.value(a.alpha)(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(g.value(a.alpha)(1, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(g.value(a.context)(1, 0) == doctest::Approx(0.75 * 2.0 - 0.25 * 4.0));

  SUBCASE("equal scores give uniform weights") {
    m->w_a->value.setZero();
    auto b = model::attend(g, *m, g.input(hd), mem);
    CHECK(g.value(b.alpha)(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("a single position takes all the mass") {
    model::Memory one;
    one.matrix = g.input(cols.col(0));
    auto b = model::attend(g, *m, g.input(hd), one);
    CHECK(g.value(b.alpha)(0, 0) == 1.0);
    CHECK(g.value(b.context).isApprox(cols.col(0)));
  }
}

TEST_CASE("output distribution hand case: 3 vocab, 1 anonymized token, 1 segment, all zero scores") {
  model::ModelConfig c = fixtures::tiny_config(Variant::Full);
  model::Vocabs v;
  v.input = model::Vocabulary({model::kUnk, model::kDelim, "CITY"});
  v.output = model::Vocabulary({model::kEnd, model::kUnk, "x"});
  v.anon_types = {"CITY"};
  model::Model m(c, v);
  zero_params(m);
  nn::Graph g;
  sqlkit::SegmentSet set;
  set.segments.push_back({1, 1, 1, 1, {"x"}});
  model::Candidates cand;
  cand.n_vocab = 3;
  cand.placeholders = {"CITY#1"};
  cand.occurrences = {{0}};
  cand.segments = &set;
  cand.segment_matrix = g.input(nn::Mat::Zero(2 * c.hidden_dim, 1));
  auto mk = g.input(nn::Mat::Zero(c.hidden_dim, 1));
  auto scores = g.input(nn::Mat::Zero(2, 1));
  auto z = model::output_distribution(g, m, mk, scores, cand);
  nn::Vec p = nn::softmax(g.value(z));
  REQUIRE(p.size() == 5);
  for (Eigen::Index k = 0; k < 5; ++k) CHECK(p(k) == doctest::Approx(0.2).epsilon(1e-15));

  SUBCASE("a placeholder at two positions scores the sum of both exponentials") {
    cand.occurrences = {{0, 1}};
    auto s2 = g.input(column({0.4, -0.9}));
    auto z2 = model::output_distribution(g, m, mk, s2, cand);
    CHECK(std::exp(g.value(z2)(3, 0)) == doctest::Approx(std::exp(0.4) + std::exp(-0.9)));
  }
  SUBCASE("target indices follow the candidate order") {
    CHECK(model::target_index(m, cand, "x") == 2);
    CHECK(model::target_index(m, cand, "CITY#1") == 3);
    CHECK(model::target_index(m, cand, "CITY#2") == -1);
    CHECK(model::target_index(m, cand, "SEGMENT#1") == 4);
    CHECK(model::target_index(m, cand, "SEGMENT#2") == -1);
  }
}

TEST_CASE("embed_output: tokens, type rows and segment means") {
  auto m = fixtures::tiny_model(Variant::Full);
  nn::Graph g;
  auto emb = [&](const model::OutputSymbol& s) -> nn::Mat { return g.value(model::embed_output(g, *m, s)); };
  sqlkit::Segment one{1, 1, 1, 1, {"f.a"}};
  CHECK(emb({"", &one}) == emb({"f.a", nullptr}));
  sqlkit::Segment cities{1, 1, 1, 2, {"CITY#1", "CITY#2"}};
  CHECK(emb({"", &cities}).isApprox(emb({"CITY#9", nullptr}), 1e-15));
  sqlkit::Segment four{1, 1, 1, 4, {"f.a", "=", "CITY#1", "AND"}};
  nn::Mat mean = (emb({"f.a", nullptr}) + emb({"=", nullptr}) + emb({"CITY#1", nullptr}) + emb({"AND", nullptr})) / 4.0;
  nn::Mat got = emb({"", &four});
  for (Eigen::Index k = 0; k < got.size(); ++k) CHECK(got(k) == doctest::Approx(mean(k)).epsilon(1e-14));
}

TEST_CASE("segment encoding: endpoints and capped age embeddings") {
  auto m = fixtures::tiny_model(Variant::Full);
  const int q = m->config().segment_encoder_dim();
  const int age = m->config().segment_age_embedding_dim;
  const auto source = fixtures::tiny_data()[0].turns[1].queries[0];
  auto base = sqlkit::extract_segments(source, 1, {});
  REQUIRE(base.size() >= 2);
  sqlkit::SegmentSet set;
  set.segments = {base.segments[0], base.segments[0], base.segments[0], base.segments[1]};
  set.segments[0].a = 10 - 5;  // i - a = 5
  set.segments[1].a = 10 - 9;  // i - a = 9
  set.segments[2].a = 10;      // i - a = 0
  nn::Graph g;
  auto hs = g.value(model::encode_segments(g, *m, source, set, 10));
  REQUIRE(hs.cols() == 4);
  REQUIRE(hs.rows() == 4 * q + age);
  CHECK(hs.col(0).tail(age) == hs.col(1).tail(age));
  CHECK(hs.col(0).tail(age) == m->age->value.col(m->config().g));
  CHECK(hs.col(2).tail(age) == m->age->value.col(0));
  CHECK(hs.col(0).head(4 * q) == hs.col(2).head(4 * q));
  CHECK(hs.col(0).head(4 * q) != hs.col(3).head(4 * q));
  CHECK(model::encode_segments(g, *m, source, sqlkit::SegmentSet{}, 3) == -1);
}

TEST_CASE("discourse update with zero parameters follows the LSTM closed form") {
  auto m = fixtures::tiny_model(Variant::Full);
  const int h = m->config().hidden_dim;
  m->turn.w->value.setZero();
  m->turn.b->value.setZero();
  nn::Graph g;
  nn::Mat state = nn::Mat::Random(2 * h, 1);
  auto next = g.value(model::update_discourse(g, *m, g.input(state), g.input(nn::Mat::Random(h, 1))));
  for (int k = 0; k < h; ++k) {
    const double c = 0.5 * state(h + k, 0);
    CHECK(next(h + k, 0) == doctest::Approx(c));
    CHECK(next(k, 0) == doctest::Approx(0.5 * std::tanh(c)));
  }
}

TEST_CASE("decoder steps evolve the state; delimiters are not attendable") {
  auto m = fixtures::tiny_model(Variant::Seq2SeqH);
  nn::Graph g;
  auto enc = model::encode_utterance(g, *m, tok("from CITY#1 <delim> to CITY#2"), std::nullopt);
  auto mem = model::build_memory(g, *m, {{&enc, 1, 0}});
  CHECK(mem.tokens == tok("from CITY#1 to CITY#2"));
  auto cand = model::make_candidates(*m, mem, nullptr, -1);
  CHECK(cand.placeholders.empty());
  auto st = model::initial_decoder_state(g, *m, enc.final_state);
  CHECK(g.value(st.context).isZero());
  auto start = model::start_embedding(g, *m);
  auto s1 = model::decoder_step(g, *m, start, st, mem, cand);
  auto s2 = model::decoder_step(g, *m, start, st, mem, cand);
  CHECK(g.value(s1.hidden) != g.value(s2.hidden));
}

TEST_CASE("variant containment at the decoder step") {
  auto full = fixtures::tiny_model(Variant::Full, 3);
  auto anon = std::make_unique<model::Model>(fixtures::tiny_config(Variant::S2SAnon), full->vocabs());
  auto s2sh = std::make_unique<model::Model>(fixtures::tiny_config(Variant::Seq2SeqH), full->vocabs());
  copy_shared_params(*full, *anon);
  copy_shared_params(*full, *s2sh);
  const int sd = full->config().state_dim();
  const int h = full->config().hidden_dim;
  const nn::Mat cols = nn::Mat::Random(sd, 5);
  const nn::Mat init = nn::Mat::Random(2 * h, 1);
  const nn::Mat prev = nn::Mat::Random(full->config().word_embedding_dim, 1);
  model::Memory mem;
  mem.tokens = tok("from CITY#1 to CITY#2 x");

  auto run = [&](model::Model& m, bool anon_family) {
    nn::Graph g;
    model::Memory local = mem;
    local.matrix = g.input(cols);
    model::Candidates c = anon_family ? model::make_candidates(m, local, nullptr, -1) : model::Candidates{};
    c.n_vocab = m.output_vocab_size();
    model::DecoderState st;
    st.layers.assign(m.dec.size(), g.input(init));
    st.context = g.input(nn::Mat::Zero(sd, 1));
    auto step = model::decoder_step(g, m, g.input(prev), st, local, c);
    return nn::Mat(g.value(step.logits));
  };
  SUBCASE("FULL with an empty segment set equals S2S_ANON") {
    auto a = run(*full, true);
    auto b = run(*anon, true);
    CHECK(a.rows() == full->output_vocab_size() + 2);
    CHECK(a == b);
  }
  SUBCASE("FULL without segment and anonymization families equals SEQ2SEQ_H") {
    auto a = run(*full, false);
    auto b = run(*s2sh, false);
    CHECK(a.rows() == full->output_vocab_size());
    CHECK(a == b);
  }
}

TEST_CASE("anonymized index neutrality") {
  for (auto v : {Variant::S2SAnon, Variant::Full0, Variant::Full}) {
    auto m = fixtures::tiny_model(v, 11);
    auto probs = [&](const model::Tokens& u) {
      nn::Graph g;
      std::optional<model::NodeId> d;
      if (model::uses_turn_encoder(v)) d = model::initial_discourse(g, *m);
      auto enc = model::encode_utterance(g, *m, u, d);
      auto mem = model::build_memory(g, *m, {{&enc, 1, 0}});
      auto c = model::make_candidates(*m, mem, nullptr, -1);
      auto st = model::initial_decoder_state(g, *m, enc.final_state);
      auto step = model::decoder_step(g, *m, model::start_embedding(g, *m), st, mem, c);
      nn::Vec p = nn::softmax(g.value(step.logits));
      std::map<std::string, double> out;
      for (int k = 0; k < c.n_vocab; ++k) out[m->vocabs().output.token(k)] = p(k);
      for (std::size_t k = 0; k < c.placeholders.size(); ++k) out[c.placeholders[k]] = p(c.n_vocab + static_cast<int>(k));
      return out;
    };
    auto a = probs(tok("from CITY#1 to CITY#2"));
    auto b = probs(tok("from CITY#2 to CITY#1"));
    CHECK(a["CITY#1"] == doctest::Approx(b["CITY#2"]).epsilon(1e-14));
    CHECK(a["CITY#2"] == doctest::Approx(b["CITY#1"]).epsilon(1e-14));
    for (const auto& [t, p] : a) {
      if (!sqlkit::is_placeholder(t)) CHECK(p == doctest::Approx(b[t]).epsilon(1e-14));
    }
  }
}

TEST_CASE("joint normalization over random decoder steps") {
  for (auto v : fixtures::kAllVariants) {
    fixtures::NormalizationCheck n;
    fixtures::random_decoder_steps(v, 200, 17, n);
    CHECK(n.steps == 200);
    CHECK(n.max_distribution_error < 1e-5);
    CHECK(n.max_attention_error < 1e-6);
    CHECK(n.delimiter_columns == 0);
  }
}

TEST_CASE("gradient check on a tiny configuration") {
  training::TrainConfig tc;
  for (auto v : fixtures::kAllVariants) {
    CAPTURE(model::variant_name(v));
    auto m = fixtures::tiny_model(v);
    auto x = training::build_examples(fixtures::tiny_data(), m->config(), tc);
    auto r = fixtures::gradient_check(*m, x[0], 6, 1);
    for (const auto& [name, err] : r.max_rel_error) {
      CAPTURE(name);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip and validation") {
  auto m = fixtures::tiny_model(Variant::Full, 5);
  const std::string path = "model_test_ckpt.bin";
  model::save_checkpoint(*m, path, {{"note", "x"}});
  nlohmann::json extra;
  auto back = model::load_checkpoint(path, &extra);
  CHECK(extra["note"] == "x");
  CHECK(model::config_to_json(back->config()) == model::config_to_json(m->config()));
  CHECK(back->vocabs().output.tokens() == m->vocabs().output.tokens());
  REQUIRE(back->params().params().size() == m->params().params().size());
  for (std::size_t k = 0; k < m->params().params().size(); ++k) {
    CHECK(back->params().params()[k]->value == m->params().params()[k]->value);
  }

  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto rewrite = [&](const std::string& h, const std::string& b) {
    std::ofstream out(path, std::ios::binary);
    out << h << '\n' << b;
  };
  auto doc = nlohmann::json::parse(header);
  doc["version"] = model::kCheckpointVersion + 1;
  rewrite(doc.dump(), body);
  CHECK_THROWS_AS(model::load_checkpoint(path), DataError);
  rewrite(header, body.substr(0, body.size() / 2));
  CHECK_THROWS_AS(model::load_checkpoint(path), DataError);
  CHECK_THROWS_AS(model::load_checkpoint("does-not-exist.bin"), DataError);
  std::remove(path.c_str());
}
