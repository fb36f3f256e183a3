#include <doctest.h>

#include <cmath>
#include <random>

#include "model_fixtures.hpp"

using namespace ctxsql;
using fixtures::tok;
using model::Variant;

namespace {

std::vector<model::NodeId> inputs(nn::Graph& g, const std::vector<double>& xs) {
  std::vector<model::NodeId> out;
  for (double x : xs) out.push_back(g.input(nn::Mat::Constant(1, 1, x)));
  return out;
}

}  // namespace

TEST_CASE("loss forms: batch mean and interaction re-weighting") {
  nn::Graph g;
  SUBCASE("two examples with token losses {1,1} and {2} average to 4/3") {
    CHECK(g.scalar(training::utterance_batch_loss(g, inputs(g, {1, 1, 2}))) == doctest::Approx(4.0 / 3.0));
  }
  SUBCASE("n=4, B=16, mean token loss 2 gives 0.5") {
    CHECK(g.scalar(training::interaction_loss(g, inputs(g, {1, 3, 2, 2}), 4, 16)) == doctest::Approx(0.5));
  }
  SUBCASE("n=1, B=1 equals the mean token loss") {
    auto xs = inputs(g, {0.3, 0.9});
    CHECK(g.scalar(training::interaction_loss(g, xs, 1, 1)) == g.scalar(training::utterance_batch_loss(g, xs)));
  }
  SUBCASE("zero losses stay zero") {
    CHECK(g.scalar(training::interaction_loss(g, inputs(g, {0, 0, 0}), 7, 3)) == 0.0);
  }
  SUBCASE("randomized identity") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t count = 1 + rng() % 300;
      std::vector<double> xs(count);
      double sum = 0.0;
      for (auto& x : xs) sum += (x = std::uniform_real_distribution<double>(0, 8)(rng));
      const std::size_t n = 1 + rng() % 20;
      const int b = 1 + static_cast<int>(rng() % 32);
      const double expected = static_cast<double>(n) / b * (sum / static_cast<double>(count));
      const double got = g.scalar(training::interaction_loss(g, inputs(g, xs), n, b));
      CHECK(std::abs(got - expected) / expected < 1e-10);
    }
  }
  CHECK(training::utterance_batch_loss(g, {}) == -1);
}

TEST_CASE("a uniform model has token loss ln of the candidate count") {
  auto m = fixtures::tiny_model(Variant::Seq2Seq0);
  for (auto& p : m->params().params()) p->value.setZero();
  auto x = training::build_examples(fixtures::tiny_data(), m->config(), {});
  auto tf = training::teacher_forced_metrics(*m, x);
  CHECK(tf.token_loss == doctest::Approx(std::log(m->output_vocab_size())));
}

TEST_CASE("training examples: shortest gold, alignment, length limit") {
  auto data = fixtures::tiny_data();
  data[0].turns[1].queries.insert(data[0].turns[1].queries.begin(),
                                  tok("( SELECT f.id FROM f WHERE f.a = CITY#1 AND f.b = CITY#2 AND f.c = AIRLINE#1 AND 1 = 1 ) ;"));
  training::TrainConfig tc;
  auto full = training::build_examples(data, fixtures::tiny_config(Variant::Full), tc);
  const auto& t2 = full[0].turns[1];
  CHECK(t2.golds.size() == 2);
  CHECK(t2.segments.size() > 0);
  CHECK(t2.segment_source == data[0].turns[0].queries[0]);
  CHECK(sqlkit::expand_segment_references(t2.target, t2.segments) == data[0].turns[1].queries[1]);
  CHECK(t2.target.size() < data[0].turns[1].queries[1].size());
  CHECK(full[0].turns[0].segments.empty());

  auto s2s = training::build_examples(data, fixtures::tiny_config(Variant::Seq2SeqH), tc);
  CHECK(s2s[0].turns[1].target == data[0].turns[1].queries[1]);
  CHECK(s2s[0].turns[2].encoder_input == tok("show flights from CITY#1 to CITY#2 <delim> on AIRLINE#1 <delim> after TIME#1"));

  tc.max_gold_tokens = 20;
  auto limited = training::build_examples(data, fixtures::tiny_config(Variant::Full), tc);
  CHECK_FALSE(limited[0].turns[0].skip_loss);
  CHECK(limited[0].turns[2].skip_loss);
}

TEST_CASE("teacher forcing counts one decision per aligned gold symbol plus end") {
  auto m = fixtures::tiny_model(Variant::Full);
  auto x = training::build_examples(fixtures::tiny_data(), m->config(), {});
  nn::Graph g;
  training::ForwardStats stats;
  training::forward_interaction(g, *m, x[0], {}, stats);
  std::size_t expected = 0;
  for (const auto& t : x[0].turns) expected += t.target.size() + 1;
  CHECK(stats.decisions == expected);
  CHECK(stats.token_losses.size() == expected);
  CHECK_THROWS_AS(training::forward_utterance(g, *m, x[0].turns[0], {}, stats), Error);
}

TEST_CASE("evaluation passes ignore dropout") {
  auto m = fixtures::tiny_model(Variant::Full);
  auto x = training::build_examples(fixtures::tiny_data(), m->config(), {});
  auto a = training::teacher_forced_metrics(*m, x);
  auto b = training::teacher_forced_metrics(*m, x);
  CHECK(a.token_loss == b.token_loss);
  CHECK(a.token_accuracy == b.token_accuracy);
}

TEST_CASE("schedule: decay on validation loss increase, patience growth on new best accuracy") {
  training::TrainConfig tc;
  SUBCASE("strictly increasing validation loss decays every epoch") {
    training::Schedule s(tc, 1.0);
    for (int e = 1; e <= 6; ++e) {
      s.end_epoch(1.0 + e, 0.5);
      CHECK(s.lr() == doctest::Approx(0.001 * std::pow(0.8, e)).epsilon(1e-12));
    }
  }
  SUBCASE("patience grows by 1.01 on each new best and stops after it runs out") {
    training::Schedule s(tc, 10.0);
    CHECK_FALSE(s.end_epoch(9.0, 0.1));
    CHECK_FALSE(s.end_epoch(8.0, 0.2));
    CHECK(s.patience() == doctest::Approx(10.0 * 1.01 * 1.01));
    CHECK(s.lr() == tc.learning_rate);
    int epochs = 0;
    while (!s.end_epoch(7.0, 0.2)) ++epochs;
    CHECK(epochs == 10);
  }
}

TEST_CASE("train config parsing and validation") {
  auto c = training::train_config_from_json({{"learning_rate", 0.01}, {"batch_size", 4}});
  CHECK(c.learning_rate == 0.01);
  CHECK(c.batch_size == 4);
  CHECK(training::train_config_to_json(training::train_config_from_json(training::train_config_to_json(c))) ==
        training::train_config_to_json(c));
  CHECK_THROWS_AS(training::train_config_from_json({{"lr", 0.1}}), Error);
  CHECK_THROWS_AS(training::train_config_from_json({{"batch_size", 0}}), Error);
  CHECK_THROWS_AS(training::train_config_from_json({{"dropout", 1.0}}), Error);
}

TEST_CASE("training is deterministic and reduces the loss") {
  training::TrainConfig tc;
  tc.validation_fraction = 0;
  tc.max_epochs = 4;
  tc.learning_rate = 0.02;
  tc.dropout = 0.2;
  for (auto v : {Variant::Seq2SeqH, Variant::Full}) {
    auto c = fixtures::tiny_config(v);
    auto a = training::train(fixtures::tiny_data(), tc, c);
    auto b = training::train(fixtures::tiny_data(), tc, c);
    REQUIRE(a.log.size() == 4);
    for (std::size_t k = 0; k < a.log.size(); ++k) {
      auto ja = training::epoch_log_to_json(a.log[k]);
      auto jb = training::epoch_log_to_json(b.log[k]);
      ja.erase("wall_seconds");
      jb.erase("wall_seconds");
      CHECK(ja == jb);
    }
    CHECK(a.log.back().val_token_loss < a.log.front().val_token_loss);
  }
  CHECK_THROWS_AS(training::train({}, tc, fixtures::tiny_config(Variant::Full)), DataError);
}
