#include <cmath>
#include <fstream>
#include <numeric>

#include "cotsched/difficulty.hpp"
#include "cotsched/error.hpp"
#include "cotsched/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cotsched;

namespace {

Question make_question(std::string id, std::vector<double> logprobs, std::vector<StepSpan> spans) {
  Question q;
  q.id = std::move(id);
  q.question_text = "q";
  q.answer_text = "a";
  q.rationale_tokens.assign(logprobs.size(), "t");
  q.token_logprobs = std::move(logprobs);
  q.step_spans = std::move(spans);
  return q;
}

QuestionDifficulty steps_of(std::vector<double> d) {
  QuestionDifficulty q;
  q.id = "x";
  q.total = std::accumulate(d.begin(), d.end(), 0.0);
  q.steps = std::move(d);
  return q;
}

}  // namespace

TEST_CASE("normalize_step_weights examples") {
  const std::vector<double> equal = {0.3, 0.3, 0.3, 0.3};
  for (double v : normalize_step_weights(equal, {0, 4})) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const std::vector<double> two = {0.9, 0.1};
  const auto w = normalize_step_weights(two, {0, 2});
  const double z = std::exp(0.9) + std::exp(0.1);
  CHECK(w[0] == doctest::Approx(std::exp(0.9) / z).epsilon(1e-15));
  CHECK(w[0] == doctest::Approx(0.6900).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.3100).epsilon(1e-4));

  const std::vector<double> one = {0.42, 0.7};
  CHECK(normalize_step_weights(one, {1, 2}) == std::vector<double>{1.0});
  CHECK_THROWS_AS(normalize_step_weights(one, {1, 1}), ValidationError);
  CHECK_THROWS_AS(normalize_step_weights(one, {0, 3}), ValidationError);
}

TEST_CASE("step_difficulty examples") {
  const std::vector<double> half = {std::log(0.5)};
  const std::vector<double> unit = {1.0};
  CHECK(step_difficulty(half, unit, {0, 1}) == doctest::Approx(0.6931471805599453).epsilon(1e-15));

  const std::vector<double> certain = {0.0, 0.0, 0.0};
  const std::vector<double> third = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(step_difficulty(certain, third, {0, 3}) == 0.0);

  const std::vector<double> lp = {std::log(0.5), std::log(0.01)};
  const std::vector<double> focused = {1.0, 0.0};
  CHECK(step_difficulty(lp, focused, {0, 2}) == doctest::Approx(0.6931471805599453).epsilon(1e-15));

  CHECK_THROWS_AS(step_difficulty({}, unit, {0, 1}), ValidationError);
}

TEST_CASE("question_generation_difficulty examples") {
  const auto q = steps_of({1.0, 2.0, 3.0});
  CHECK(question_generation_difficulty(q, 3) == 0.0);
  CHECK(question_generation_difficulty(q, 0) == 6.0);
  CHECK(question_generation_difficulty(q, 1) == 5.0);
  CHECK_THROWS_AS(question_generation_difficulty(q, 4), ValidationError);

  DifficultyTable table;
  table.questions.push_back(q);
  CHECK(question_generation_difficulty(table, "x", 2) == 3.0);
  CHECK_THROWS_AS(question_generation_difficulty(table, "nope", 0), ValidationError);
}

TEST_CASE("corpus_total_difficulty examples") {
  CHECK(corpus_total_difficulty(DifficultyTable{}) == 0.0);
  DifficultyTable t;
  t.questions = {steps_of({1.5}), steps_of({2.0, 0.5})};
  CHECK(corpus_total_difficulty(t) == 4.0);
}

TEST_CASE("assess_question needs logprobs") {
  Question q = make_question("q7", {-0.1, -0.2}, {{0, 2}});
  q.token_logprobs.reset();
  const std::vector<double> w = {1.0, 1.0};
  try {
    assess_question(q, w);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("token_logprobs") != std::string::npos);
  }
}

TEST_CASE("difficulty properties over random questions") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<double> lp(n), w(n);
    for (auto& x : lp) x = std::log(rng.uniform());
    for (auto& x : w) x = rng.uniform();
    std::vector<StepSpan> spans;
    for (std::size_t s = 0; s < n;) {
      const std::size_t e = std::min(n, s + 1 + rng.below(6));
      spans.push_back({s, e});
      s = e;
    }
    const Question q = make_question("r", lp, spans);
    const auto d = assess_question(q, w);

    double sum = 0.0;
    for (std::size_t k = 0; k < spans.size(); ++k) {
      CHECK(d.steps[k] >= 0.0);
      sum += d.steps[k];
      const auto w_hat = normalize_step_weights(w, spans[k]);
      CHECK(std::accumulate(w_hat.begin(), w_hat.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(d.total == doctest::Approx(sum).epsilon(1e-9));

    for (std::size_t c = 0; c < spans.size(); ++c)
      CHECK(question_generation_difficulty(d, c + 1) <= question_generation_difficulty(d, c));

    std::vector<double> shifted = w;
    const double shift = rng.uniform() * 5.0 - 2.5;
    for (auto& x : shifted) x += shift;
    const auto moved = assess_question(q, shifted);
    for (std::size_t k = 0; k < spans.size(); ++k)
      CHECK(moved.steps[k] == doctest::Approx(d.steps[k]).epsilon(1e-9));
  }
}

TEST_CASE("synthetic logprobs are seeded per id") {
  Corpus c;
  c.questions = {make_question("a", {0, 0, 0}, {{0, 3}}), make_question("b", {0, 0}, {{0, 2}})};
  for (auto& q : c.questions) q.token_logprobs.reset();
  Corpus d = c;
  fill_synthetic_logprobs(c, 5);
  fill_synthetic_logprobs(d, 5);
  CHECK(c == d);
  for (const auto& q : c.questions) {
    REQUIRE(q.token_logprobs);
    for (double x : *q.token_logprobs) CHECK((x < 0.0 && std::isfinite(x)));
  }
  // Reordering the corpus does not change a question's draws.
  Corpus swapped = d;
  std::swap(swapped.questions[0], swapped.questions[1]);
  for (auto& q : swapped.questions) q.token_logprobs.reset();
  fill_synthetic_logprobs(swapped, 5);
  CHECK(swapped.questions[1].token_logprobs == c.questions[0].token_logprobs);
}

TEST_CASE("bundled corpus total under uniform weights") {
  const Corpus c = parse_corpus(std::filesystem::path(COTSCHED_DATA_DIR) / "synthetic_corpus.jsonl");
  std::ifstream in(std::filesystem::path(COTSCHED_GOLDEN_DIR) / "synthetic_corpus_B.json");
  REQUIRE(in);
  const double expected = nlohmann::json::parse(in).at("B").get<double>();
  const auto table = compute_difficulty_table(c, default_weights(c));
  CHECK(table.total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(corpus_total_difficulty(table) == table.total);
  CHECK(table == serial::compute_difficulty_table(c, default_weights(c)));
}
