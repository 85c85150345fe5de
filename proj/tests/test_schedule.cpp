#include <cmath>

#include "cotsched/error.hpp"
#include "cotsched/rng.hpp"
#include "cotsched/schedule.hpp"
#include "doctest.h"

using namespace cotsched;

namespace {

DifficultyTable table_of(const std::vector<std::vector<double>>& steps) {
  DifficultyTable t;
  double b = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    double total = 0.0;
    for (double d : steps[i]) total += d;
    t.questions.push_back({"q" + std::to_string(i), steps[i], total});
    b += total;
  }
  t.total = b;
  return t;
}

ClusterAssignment round_robin(const DifficultyTable& t, std::size_t k) {
  ClusterAssignment c;
  c.k = k;
  for (std::size_t i = 0; i < t.questions.size(); ++i) {
    c.ids.push_back(t.questions[i].id);
    c.assignment.push_back(i % k);
  }
  c.centroids.assign(k, std::vector<double>{0.0});
  return c;
}

void check_schedule_invariants(const Schedule& s, const DifficultyTable& table) {
  const std::size_t T = s.curve.terminal_stage;
  double prev_h = -1.0;
  for (std::size_t k = 0; k < s.stages.size(); ++k) {
    const auto& st = s.stages[k];
    CHECK(st.t == k);
    const double h = generated_difficulty(table, st.input_steps);
    CHECK(h >= prev_h - 1e-12);
    prev_h = h;
    if (k > 0) {
      CHECK(st.difficulty_delta <= st.budget_delta + 1e-9);
      for (std::size_t i = 0; i < st.input_steps.size(); ++i)
        CHECK(st.input_steps[i] <= s.stages[k - 1].input_steps[i]);
    }
    if (k >= T)
      for (auto c : st.input_steps) CHECK(c == 0);
  }
}

}  // namespace

TEST_CASE("solve_growth_rate examples") {
  CHECK(solve_growth_rate(2.0, 0.0, 1.0, 1) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(solve_growth_rate(1.5, 1.5, 0.5, 7) == 0.0);
  CHECK(solve_growth_rate(1.0, 0.3, 0.5, 10) == doctest::Approx(0.7 * 1.5 / std::pow(10.0, 1.5)).epsilon(1e-15));
  CHECK(solve_growth_rate(1.0, 0.3, 0.5, 10) == doctest::Approx(0.033204).epsilon(1e-5));
  CHECK_THROWS_AS(solve_growth_rate(1.0, 2.0, 0.5, 3), ValidationError);
  CHECK_THROWS_AS(solve_growth_rate(1.0, 0.0, 0.0, 3), ValidationError);
  CHECK_THROWS_AS(solve_growth_rate(1.0, 0.0, 0.5, 0), ValidationError);
}

TEST_CASE("budget_at examples") {
  const auto curve = make_budget_curve(10.0, 3.0, 0.5, 5);
  CHECK(budget_at(curve, 0.0) == 3.0);
  CHECK(budget_at(curve, 5.0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(budget_at(curve, 50.0) == 10.0);

  BudgetCurve hand;
  hand.u = 4.0;
  hand.p = 1.0;
  hand.c0 = 0.0;
  hand.terminal_stage = 1;
  hand.max_difficulty = 2.0;
  CHECK(budget_at(hand, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("budget curves are monotone and hit their end points") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const double b = rng.uniform() * 100.0;
    const double c0 = b * rng.uniform();
    const double p = 0.1 + rng.uniform() * 3.0;
    const std::size_t T = 1 + rng.below(20);
    const auto curve = make_budget_curve(b, c0, p, T);
    CHECK(budget_at(curve, 0.0) == c0);
    CHECK(std::abs(budget_at(curve, static_cast<double>(T)) - b) <= 1e-9 * std::max(1.0, b));
    double prev = budget_at(curve, 0.0);
    for (int g = 1; g <= 1000; ++g) {
      const double d = budget_at(curve, T * g / 1000.0);
      CHECK(d >= prev);
      prev = d;
    }
  }
}

TEST_CASE("stage_budget_delta examples") {
  const auto table = table_of({{1.0, 2.0}});
  const auto curve = make_budget_curve(3.0, 0.0, 1.0, 3);
  ScheduleState state = initial_state(table, 1);
  state.generated = budget_at(curve, 2.0);
  CHECK(stage_budget_delta(curve, state, 2.0) == 0.0);
  state.generated = 1.0;
  CHECK(stage_budget_delta(curve, state, 3.0) == doctest::Approx(2.0));
  state.generated = 2.9;
  CHECK(stage_budget_delta(curve, state, 1.0) == 0.0);
}

TEST_CASE("advance_stage examples") {
  const auto table = table_of({{1.0, 1.0, 1.0}, {2.0, 5.0}, {4.0}});
  ScheduleState s = initial_state(table, 1);
  CHECK(s.input_steps == std::vector<std::size_t>{3, 2, 1});
  CHECK(s.generated == 0.0);

  const std::vector<std::size_t> first = {0};
  const auto next = advance_stage(s, table, first, 1.0, 1.0);
  CHECK(next.input_steps == std::vector<std::size_t>{2, 2, 1});
  CHECK(next.t == 1);
  REQUIRE(next.history.size() == 1);
  CHECK(next.history[0].difficulty_delta == 1.0);
  CHECK(next.generated == 1.0);
  check_state(next, table);

  ScheduleState wide = initial_state(table, 2);
  const std::vector<std::size_t> last = {2};
  const auto clamped = advance_stage(wide, table, last, 9.0, 9.0);
  CHECK(clamped.input_steps[2] == 0);
  CHECK(clamped.history.back().difficulty_delta == 4.0);

  CHECK_THROWS_AS(advance_stage(clamped, table, last, 9.0, 9.0), ValidationError);
}

TEST_CASE("check_state rejects inconsistent states") {
  const auto table = table_of({{1.0, 1.0}});
  ScheduleState s = initial_state(table, 1);
  s.input_steps[0] = 3;
  CHECK_THROWS_AS(check_state(s, table), ValidationError);
  s = initial_state(table, 1);
  s.generated = 0.5;
  CHECK_THROWS_AS(check_state(s, table), ValidationError);
}

TEST_CASE("zero difficulty corpus drains by T") {
  const auto table = table_of({{0.0, 0.0, 0.0}, {0.0, 0.0}, {0.0}});
  const auto curve = make_budget_curve(0.0, 0.0, 0.5, 4);
  ScheduleConfig cfg;
  cfg.epochs = 8;
  const auto s = plan_full_schedule(table, round_robin(table, 2), curve, cfg);
  REQUIRE(s.stages.size() == 9);
  // Zero-cost items always fit, so stage 0 already empties every question.
  for (auto c : s.stages[0].input_steps) CHECK(c == 0);
  check_schedule_invariants(s, table);
}

TEST_CASE("single question hand simulation") {
  const auto table = table_of({{1.0, 1.0, 1.0}});
  const auto curve = make_budget_curve(3.0, 1.0, 1.0, 3);
  CHECK(curve.u == doctest::Approx(4.0 / 9.0));
  ScheduleConfig cfg;
  cfg.epochs = 6;
  const auto s = plan_full_schedule(table, round_robin(table, 1), curve, cfg);
  CHECK(s.stages[0].input_steps == std::vector<std::size_t>{2});
  CHECK(generated_difficulty(table, s.stages[0].input_steps) == 1.0);
  // D(1) - H and D(2) - H stay below one step of difficulty.
  CHECK(s.stages[1].input_steps == std::vector<std::size_t>{2});
  CHECK(s.stages[2].input_steps == std::vector<std::size_t>{2});
  CHECK(s.stages[3].input_steps == std::vector<std::size_t>{0});
  for (std::size_t t = 3; t <= 6; ++t) CHECK(s.input_steps_at(t) == std::vector<std::size_t>{0});
  CHECK(s.input_steps_at(100) == std::vector<std::size_t>{0});
  check_schedule_invariants(s, table);
}

TEST_CASE("random schedules keep their invariants") {
  Rng rng(32);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::vector<double>> steps(2 + rng.below(20));
    for (auto& q : steps) {
      q.resize(1 + rng.below(6));
      for (auto& d : q) d = rng.uniform() * 2.0;
    }
    const auto table = table_of(steps);
    ScheduleConfig cfg;
    cfg.epochs = 2 + rng.below(10);
    cfg.step_reduction = 1 + rng.below(2);
    cfg.beta = rng.below(2) ? 12.0 : 0.0;
    const std::size_t T = 1 + rng.below(cfg.epochs);
    const auto curve = make_budget_curve(table.total, 0.3 * table.total, 0.5, T);
    const auto s = plan_full_schedule(table, round_robin(table, 1 + rng.below(4)), curve, cfg);
    REQUIRE(s.stages.size() == cfg.epochs + 1);
    check_schedule_invariants(s, table);
    CHECK(generated_difficulty(table, s.stages[0].input_steps) <= curve.c0 + 1e-9);
  }
}

TEST_CASE("schedule JSON round-trips") {
  const auto table = table_of({{1.0, 0.5}, {2.0}, {0.25, 0.25, 0.25}});
  ScheduleConfig cfg;
  cfg.epochs = 4;
  const auto s = plan_full_schedule(table, round_robin(table, 2), make_budget_curve(table.total, 1.0, 0.5, 2), cfg);
  const auto doc = schedule_to_json(s);
  CHECK(doc.at("stages").size() == 5);
  CHECK(doc.at("stages")[0].contains("D_t"));
  CHECK(doc.at("stages")[0].at("c").at("q2") == s.stages[0].input_steps[2]);
  const auto back = schedule_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(schedule_to_json(back).dump() == doc.dump());
}
