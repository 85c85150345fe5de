#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cotsched/difficulty.hpp"
#include "cotsched/selection.hpp"
#include "json.hpp"

namespace cotsched {

// D(t) = u t^(p+1) / (p+1) + C0, reaching B at stage T.
struct BudgetCurve {
  double u = 0.0;
  double p = 0.5;
  double c0 = 0.0;
  std::size_t terminal_stage = 1;  // T
  double max_difficulty = 0.0;     // B
};

double solve_growth_rate(double max_difficulty, double c0, double p, std::size_t terminal_stage);
BudgetCurve make_budget_curve(double max_difficulty, double c0, double p, std::size_t terminal_stage);
// Clamped to B for t >= T.
double budget_at(const BudgetCurve& curve, double t);

struct StageRecord {
  std::size_t t = 0;
  double budget = 0.0;        // D(t)
  double budget_delta = 0.0;  // ΔD(t)
  std::vector<std::string> selected;
  double difficulty_delta = 0.0;  // ΔH
  std::size_t rounds = 0;
  std::vector<std::size_t> input_steps;  // c_i(t), aligned to the table
};

struct ScheduleState {
  std::size_t t = 0;
  std::vector<std::size_t> input_steps;  // c_i, aligned to the difficulty table
  double generated = 0.0;                // H = sum_i h_i(c_i)
  std::size_t step_reduction = 1;        // Δ_s
  std::vector<StageRecord> history;
};

// Stage-0 state: every step given as input, nothing generated.
ScheduleState initial_state(const DifficultyTable& table, std::size_t step_reduction);
double generated_difficulty(const DifficultyTable& table, std::span<const std::size_t> input_steps);
// Throws ValidationError if any ScheduleState invariant fails.
void check_state(const ScheduleState& state, const DifficultyTable& table);

// max(0, D(t) - H) for the stage being entered.
double stage_budget_delta(const BudgetCurve& curve, const ScheduleState& state, double t);

// Lowers c_i by Δ_s (clamped at 0) for every selected question and
// recomputes H. Returns ΔH.
double apply_selection(ScheduleState& state, const DifficultyTable& table,
                       std::span<const std::size_t> selected_questions);

// apply_selection followed by a history record and t + 1.
ScheduleState advance_stage(const ScheduleState& state, const DifficultyTable& table,
                            std::span<const std::size_t> selected_questions, double budget,
                            double budget_delta);

struct ScheduleConfig {
  std::size_t epochs = 10;
  std::size_t step_reduction = 1;
  double beta = 12.0;
  double epsilon = 0.1;
};

struct Schedule {
  std::vector<std::string> ids;
  BudgetCurve curve;
  ScheduleConfig config;
  std::size_t num_clusters = 1;
  std::vector<StageRecord> stages;  // t = 0..epochs

  // c_i for an epoch; epochs past the last stage reuse it.
  const std::vector<std::size_t>& input_steps_at(std::size_t t) const;
};

Schedule plan_full_schedule(const DifficultyTable& table, const ClusterAssignment& clusters,
                            const BudgetCurve& curve, const ScheduleConfig& config);

nlohmann::ordered_json schedule_to_json(const Schedule& schedule);
Schedule schedule_from_json(const nlohmann::json& doc);

}  // namespace cotsched
