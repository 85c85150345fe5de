#include <cmath>

#include "cotsched/difficulty.hpp"
#include "cotsched/error.hpp"
#include "cotsched/loss_shaping.hpp"
#include "cotsched/rng.hpp"
#include "cotsched/synthetic.hpp"
#include "doctest.h"

using namespace cotsched;

namespace {

Question two_step() {
  Question q;
  q.id = "q";
  q.question_text = "x";
  q.answer_text = "y";
  q.rationale_tokens = {"a", "b", ".", "c", "."};
  q.step_spans = {{0, 3}, {3, 5}};
  q.token_logprobs = std::vector<double>{-0.1, -0.2, -0.3, -0.4, -0.5};
  return q;
}

Schedule flat_schedule(const Corpus& corpus, std::size_t c) {
  Schedule s;
  for (const auto& q : corpus.questions) s.ids.push_back(q.id);
  StageRecord r;
  for (const auto& q : corpus.questions) r.input_steps.push_back(std::min(c, q.num_steps()));
  s.stages.push_back(r);
  return s;
}

Corpus load_bundled() { return parse_corpus(std::filesystem::path(COTSCHED_DATA_DIR) / "synthetic_corpus.jsonl"); }

}  // namespace

TEST_CASE("shape_stage_loss examples") {
  const Question q = two_step();
  const auto mid = shape_stage_loss(q, 2, 1);
  CHECK(mid.input_end == 3);
  CHECK(mid.gen_start == 3);
  CHECK(mid.gen_end == 5);
  CHECK(mid.weights == std::vector<double>{1.0, 1.0});
  CHECK(mid.t == 2);

  const auto full = shape_stage_loss(q, 0, 0);
  CHECK(full.input_end == 0);
  CHECK(full.gen_start == 0);
  CHECK(full.gen_end == 5);
  CHECK(evaluate_loss(full, *q.token_logprobs) == doctest::Approx(1.5).epsilon(1e-15));

  const auto none = shape_stage_loss(q, 9, 2);
  CHECK(none.gen_size() == 0);
  CHECK(none.input_end == 5);

  const std::vector<double> w = {0.1, 0.2, 0.3, 0.4, 0.5};
  CHECK(shape_stage_loss(q, 1, 1, w).weights == std::vector<double>{0.4, 0.5});

  CHECK_THROWS_AS(shape_stage_loss(q, 0, 3), ValidationError);
  const std::vector<double> short_w = {1.0};
  CHECK_THROWS_AS(shape_stage_loss(q, 0, 0, short_w), ValidationError);
}

TEST_CASE("evaluate_loss examples") {
  LossSpec s;
  s.id = "x";
  s.gen_start = 0;
  s.gen_end = 2;
  s.weights = {1.0, 1.0};
  const std::vector<double> zeros = {0.0, 0.0};
  CHECK(evaluate_loss(s, zeros) == 0.0);
  const std::vector<double> halves = {std::log(0.5), std::log(0.5)};
  CHECK(evaluate_loss(s, halves) == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(evaluate_loss(s, halves) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  s.weights = {0.0, 1.0};
  const std::vector<double> wild = {-1e6, std::log(0.5)};
  CHECK(evaluate_loss(s, wild) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const std::vector<double> wrong = {-0.1};
  CHECK_THROWS_AS(evaluate_loss(s, wrong), ValidationError);
  const std::vector<double> positive = {-0.1, 0.2};
  CHECK_THROWS_AS(evaluate_loss(s, positive), ValidationError);
}

TEST_CASE("generation ranges follow step boundaries") {
  const Corpus c = make_synthetic_corpus(40, 3);
  for (const auto& q : c.questions) {
    std::size_t prev = 0;
    for (std::size_t k = q.num_steps() + 1; k-- > 0;) {
      const auto spec = shape_stage_loss(q, 0, k);
      CHECK(spec.gen_end == q.num_tokens());
      CHECK(spec.input_end == spec.gen_start);
      CHECK(spec.weights.size() == spec.gen_size());
      if (k < q.num_steps()) CHECK(spec.gen_start == q.step_spans[k].start);
      if (k == 0) CHECK(spec.input_end == 0);
      if (k < q.num_steps()) CHECK(spec.gen_size() > prev);
      prev = spec.gen_size();
    }
  }
}

TEST_CASE("evaluate_loss is linear in the weights") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    LossSpec s;
    s.gen_start = rng.below(n);
    s.gen_end = n;
    std::vector<double> lp(n);
    for (auto& x : lp) x = std::log(rng.uniform());
    std::vector<double> a(s.gen_size()), b(s.gen_size()), sum(s.gen_size()), scaled(s.gen_size());
    const double k = rng.uniform() * 3.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = rng.uniform();
      b[j] = rng.uniform();
      sum[j] = a[j] + b[j];
      scaled[j] = k * a[j];
    }
    auto at = [&](const std::vector<double>& w) {
      LossSpec t = s;
      t.weights = w;
      return evaluate_loss(t, lp);
    };
    CHECK(std::abs(at(sum) - at(a) - at(b)) <= 1e-12 * std::max(1.0, std::abs(at(sum))));
    CHECK(std::abs(at(scaled) - k * at(a)) <= 1e-12 * std::max(1.0, std::abs(at(scaled))));
  }
}

TEST_CASE("batched evaluation matches the serial loop") {
  const Corpus c = make_synthetic_corpus(30, 8);
  std::vector<LossSpec> specs;
  std::vector<std::vector<double>> lps;
  for (const auto& q : c.questions) {
    specs.push_back(shape_stage_loss(q, 0, q.num_steps() / 2));
    lps.push_back(*q.token_logprobs);
  }
  const auto a = evaluate_losses(specs, lps);
  CHECK(a == serial::evaluate_losses(specs, lps));
  for (std::size_t i = 0; i < specs.size(); ++i) CHECK(a[i] == evaluate_loss(specs[i], lps[i]));
  lps.pop_back();
  CHECK_THROWS_AS(evaluate_losses(specs, lps), ValidationError);
}

TEST_CASE("loss spec JSON round-trips") {
  const auto spec = shape_stage_loss(two_step(), 3, 1, std::vector<double>{0.5, 0.5, 0.5, 0.25, 0.75});
  const auto doc = loss_spec_to_json(spec);
  CHECK(doc.dump() == R"({"t":3,"id":"q","input_end":3,"gen_start":3,"gen_end":5,"weights":[0.25,0.75]})");
  CHECK(loss_spec_from_json(nlohmann::json::parse(doc.dump())) == spec);
  auto broken = nlohmann::json::parse(doc.dump());
  broken["gen_end"] = 9;
  CHECK_THROWS_AS(loss_spec_from_json(broken), ParseError);
}

TEST_CASE("all-zero schedule reproduces plain training bit for bit") {
  const Corpus c = load_bundled();
  StudentConfig cfg;
  cfg.seed = 21;
  const auto plain = train_full_rationale(c, cfg);
  const auto scheduled = simulate_student(c, flat_schedule(c, 0), nullptr, cfg);
  CHECK(scheduled == plain);

  const auto ones = std::vector<std::vector<double>>(default_weights(c));
  CHECK(simulate_student(c, flat_schedule(c, 0), &ones, cfg) == plain);
}

TEST_CASE("simulation improves and is reproducible") {
  const Corpus c = load_bundled();
  StudentConfig cfg;
  cfg.seed = 4;
  const auto s = flat_schedule(c, 1);
  const auto a = simulate_student(c, s, nullptr, cfg);
  CHECK(a.epoch_losses.size() == cfg.epochs);
  CHECK(a.epoch_losses.back() < a.epoch_losses.front());
  CHECK(simulate_student(c, s, nullptr, cfg) == a);

  Schedule wrong = s;
  wrong.ids[0] = "nope";
  CHECK_THROWS_AS(simulate_student(c, wrong, nullptr, cfg), ValidationError);
}
