#include "cotsched/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cotsched/error.hpp"
#include "cotsched/numeric.hpp"

namespace cotsched {

using nlohmann::json;
using nlohmann::ordered_json;

double solve_growth_rate(double max_difficulty, double c0, double p, std::size_t terminal_stage) {
  if (!(c0 >= 0.0)) throw ValidationError("initial difficulty C0 must be nonnegative");
  if (max_difficulty < c0)
    throw ValidationError("maximum difficulty B (" + std::to_string(max_difficulty) +
                          ") is below the initial difficulty C0 (" + std::to_string(c0) + ")");
  if (!(p > 0.0)) throw ValidationError("growth exponent p must be positive");
  if (terminal_stage < 1) throw ValidationError("terminal stage T must be at least 1");
  return (max_difficulty - c0) * (p + 1.0) / std::pow(static_cast<double>(terminal_stage), p + 1.0);
}

BudgetCurve make_budget_curve(double max_difficulty, double c0, double p, std::size_t terminal_stage) {
  return {solve_growth_rate(max_difficulty, c0, p, terminal_stage), p, c0, terminal_stage,
          max_difficulty};
}

double budget_at(const BudgetCurve& curve, double t) {
  if (!(t >= 0.0)) throw ValidationError("budget_at: stage must be nonnegative");
  if (t >= static_cast<double>(curve.terminal_stage)) return curve.max_difficulty;
  const double d = curve.u * std::pow(t, curve.p + 1.0) / (curve.p + 1.0) + curve.c0;
  return std::min(d, curve.max_difficulty);
}

double generated_difficulty(const DifficultyTable& table, std::span<const std::size_t> input_steps) {
  if (input_steps.size() != table.questions.size())
    throw ValidationError("input-step counts do not match the difficulty table");
  CompensatedSum s;
  for (std::size_t i = 0; i < input_steps.size(); ++i)
    s.add(question_generation_difficulty(table.questions[i], input_steps[i]));
  return s.value();
}

ScheduleState initial_state(const DifficultyTable& table, std::size_t step_reduction) {
  if (step_reduction == 0) throw ValidationError("step reduction must be positive");
  ScheduleState state;
  state.step_reduction = step_reduction;
  for (const auto& q : table.questions) state.input_steps.push_back(q.steps.size());
  state.generated = 0.0;
  return state;
}

void check_state(const ScheduleState& state, const DifficultyTable& table) {
  const double h = generated_difficulty(table, state.input_steps);
  if (std::abs(h - state.generated) > 1e-9)
    throw ValidationError("schedule state: H does not match the input-step counts");
  for (std::size_t k = 1; k < state.history.size(); ++k) {
    const auto& prev = state.history[k - 1].input_steps;
    const auto& cur = state.history[k].input_steps;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (cur[i] > prev[i]) throw ValidationError("schedule state: input-step count increased");
    }
  }
}

double stage_budget_delta(const BudgetCurve& curve, const ScheduleState& state, double t) {
  return std::max(0.0, budget_at(curve, t) - state.generated);
}

double apply_selection(ScheduleState& state, const DifficultyTable& table,
                       std::span<const std::size_t> selected_questions) {
  for (std::size_t i : selected_questions) {
    if (i >= state.input_steps.size()) throw ValidationError("selected question index out of range");
    if (state.input_steps[i] == 0)
      throw ValidationError("question \"" + table.questions[i].id +
                            "\" has no input steps left and cannot be selected");
  }
  for (std::size_t i : selected_questions) {
    auto& c = state.input_steps[i];
    c = c > state.step_reduction ? c - state.step_reduction : 0;
  }
  const double before = state.generated;
  state.generated = generated_difficulty(table, state.input_steps);
  return state.generated - before;
}

ScheduleState advance_stage(const ScheduleState& state, const DifficultyTable& table,
                            std::span<const std::size_t> selected_questions, double budget,
                            double budget_delta) {
  ScheduleState next = state;
  StageRecord rec;
  rec.difficulty_delta = apply_selection(next, table, selected_questions);
  next.t = state.t + 1;
  rec.t = next.t;
  rec.budget = budget;
  rec.budget_delta = budget_delta;
  rec.rounds = 1;
  for (std::size_t i : selected_questions) rec.selected.push_back(table.questions[i].id);
  rec.input_steps = next.input_steps;
  next.history.push_back(std::move(rec));
  return next;
}

const std::vector<std::size_t>& Schedule::input_steps_at(std::size_t t) const {
  if (stages.empty()) throw ValidationError("schedule has no stages");
  return stages[std::min(t, stages.size() - 1)].input_steps;
}

namespace {

SelectionProblem build_problem(const std::vector<Increment>& increments, const DifficultyTable& table,
                               const ClusterAssignment& clusters, double budget, double beta) {
  SelectionProblem problem;
  problem.budget = budget;
  problem.beta = beta;
  problem.num_clusters = clusters.k;
  for (const auto& inc : increments) {
    problem.candidates.push_back(
        {table.questions[inc.question].id, inc.delta, clusters.assignment[inc.question]});
  }
  return problem;
}

// One selection round; returns question indices chosen.
std::vector<std::size_t> run_round(const ScheduleState& state, const DifficultyTable& table,
                                   const ClusterAssignment& clusters, double budget,
                                   const ScheduleConfig& config) {
  const auto increments = candidate_increments(state.input_steps, table, state.step_reduction);
  const auto problem = build_problem(increments, table, clusters, budget, config.beta);
  std::vector<std::size_t> chosen;
  for (std::size_t k : select_ftgp(problem, config.epsilon)) chosen.push_back(increments[k].question);
  return chosen;
}

}  // namespace

Schedule plan_full_schedule(const DifficultyTable& table, const ClusterAssignment& clusters,
                            const BudgetCurve& curve, const ScheduleConfig& config) {
  if (clusters.assignment.size() != table.questions.size())
    throw ValidationError("cluster assignment does not cover the difficulty table");
  for (std::size_t i = 0; i < table.questions.size(); ++i) {
    if (clusters.ids[i] != table.questions[i].id)
      throw ValidationError("cluster assignment and difficulty table disagree on question order");
  }
  if (curve.terminal_stage > config.epochs)
    throw ValidationError("terminal stage T exceeds the epoch count");

  Schedule schedule;
  schedule.curve = curve;
  schedule.config = config;
  schedule.num_clusters = clusters.k;
  for (const auto& q : table.questions) schedule.ids.push_back(q.id);

  // Stage 0: repeat rounds until the initial budget admits nothing more.
  ScheduleState state = initial_state(table, config.step_reduction);
  StageRecord first;
  first.t = 0;
  first.budget = budget_at(curve, 0.0);
  first.budget_delta = stage_budget_delta(curve, state, 0.0);
  for (;;) {
    const double remaining = std::max(0.0, first.budget - state.generated);
    const auto chosen = run_round(state, table, clusters, remaining, config);
    if (chosen.empty()) break;
    apply_selection(state, table, chosen);
    ++first.rounds;
    for (std::size_t i : chosen) first.selected.push_back(table.questions[i].id);
  }
  first.difficulty_delta = state.generated;
  first.input_steps = state.input_steps;
  state.history.push_back(first);

  for (std::size_t t = 1; t <= config.epochs; ++t) {
    const double budget = budget_at(curve, static_cast<double>(t));
    const double delta = stage_budget_delta(curve, state, static_cast<double>(t));
    std::vector<std::size_t> chosen;
    if (t >= curve.terminal_stage) {
      // From T on every question generates its full rationale.
      for (std::size_t i = 0; i < state.input_steps.size(); ++i) {
        if (state.input_steps[i] > 0) chosen.push_back(i);
      }
      ScheduleState forced = state;
      forced.step_reduction = std::numeric_limits<std::size_t>::max();
      state = advance_stage(forced, table, chosen, budget, delta);
      state.step_reduction = config.step_reduction;
    } else {
      chosen = run_round(state, table, clusters, delta, config);
      state = advance_stage(state, table, chosen, budget, delta);
    }
  }
  schedule.stages = std::move(state.history);
  return schedule;
}

ordered_json schedule_to_json(const Schedule& schedule) {
  ordered_json doc;
  ordered_json stages = ordered_json::array();
  for (const auto& s : schedule.stages) {
    ordered_json rec;
    rec["t"] = s.t;
    rec["D_t"] = s.budget;
    rec["delta_D"] = s.budget_delta;
    rec["selected"] = s.selected;
    rec["delta_H"] = s.difficulty_delta;
    rec["rounds"] = s.rounds;
    ordered_json c = ordered_json::object();
    for (std::size_t i = 0; i < schedule.ids.size(); ++i) c[schedule.ids[i]] = s.input_steps[i];
    rec["c"] = std::move(c);
    stages.push_back(std::move(rec));
  }
  doc["stages"] = std::move(stages);
  ordered_json params;
  params["u"] = schedule.curve.u;
  params["p"] = schedule.curve.p;
  params["C0"] = schedule.curve.c0;
  params["T"] = schedule.curve.terminal_stage;
  params["B"] = schedule.curve.max_difficulty;
  params["epochs"] = schedule.config.epochs;
  params["delta_s"] = schedule.config.step_reduction;
  params["beta"] = schedule.config.beta;
  params["epsilon"] = schedule.config.epsilon;
  params["K"] = schedule.num_clusters;
  params["ids"] = schedule.ids;
  doc["params"] = std::move(params);
  return doc;
}

Schedule schedule_from_json(const json& doc) {
  try {
    Schedule s;
    const auto& params = doc.at("params");
    s.curve.u = params.at("u").get<double>();
    s.curve.p = params.at("p").get<double>();
    s.curve.c0 = params.at("C0").get<double>();
    s.curve.terminal_stage = params.at("T").get<std::size_t>();
    s.curve.max_difficulty = params.at("B").get<double>();
    s.config.epochs = params.at("epochs").get<std::size_t>();
    s.config.step_reduction = params.at("delta_s").get<std::size_t>();
    s.config.beta = params.at("beta").get<double>();
    s.config.epsilon = params.at("epsilon").get<double>();
    s.num_clusters = params.at("K").get<std::size_t>();
    s.ids = params.at("ids").get<std::vector<std::string>>();
    for (const auto& rec : doc.at("stages")) {
      StageRecord r;
      r.t = rec.at("t").get<std::size_t>();
      r.budget = rec.at("D_t").get<double>();
      r.budget_delta = rec.at("delta_D").get<double>();
      r.selected = rec.at("selected").get<std::vector<std::string>>();
      r.difficulty_delta = rec.at("delta_H").get<double>();
      r.rounds = rec.value("rounds", std::size_t{1});
      const auto& c = rec.at("c");
      for (const auto& id : s.ids) r.input_steps.push_back(c.at(id).get<std::size_t>());
      s.stages.push_back(std::move(r));
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("schedule JSON: ") + e.what());
  }
}

}  // namespace cotsched
