#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotsched/corpus.hpp"

namespace cotsched {

struct QuestionDifficulty {
  std::string id;
  std::vector<double> steps;  // d_1..d_n, one per step span
  double total = 0.0;

  bool operator==(const QuestionDifficulty&) const = default;
};

struct DifficultyTable {
  std::vector<QuestionDifficulty> questions;  // corpus order
  double total = 0.0;                          // B

  const QuestionDifficulty& at(std::string_view id) const;
  bool operator==(const DifficultyTable&) const = default;
};

// Softmax of the raw weights inside one step.
std::vector<double> normalize_step_weights(std::span<const double> weights, StepSpan span);

// -sum of normalized weight times logprob over the step. `normalized` is
// aligned to the span; `logprobs` covers the whole rationale.
double step_difficulty(std::span<const double> logprobs, std::span<const double> normalized,
                       StepSpan span);

// Difficulty of generating steps c+1..n of one question.
double question_generation_difficulty(const DifficultyTable& table, std::string_view id,
                                      std::size_t input_steps);
double question_generation_difficulty(const QuestionDifficulty& q, std::size_t input_steps);

double corpus_total_difficulty(const DifficultyTable& table);

// Per-question difficulties for the whole corpus. `weights[i]` are the raw
// significance weights of question i. Questions without token_logprobs are
// rejected. The parallel and serial versions return bit-identical tables.
DifficultyTable compute_difficulty_table(const Corpus& corpus,
                                         const std::vector<std::vector<double>>& weights);
namespace serial {
DifficultyTable compute_difficulty_table(const Corpus& corpus,
                                         const std::vector<std::vector<double>>& weights);
}

QuestionDifficulty assess_question(const Question& q, std::span<const double> weights);

// Fills token_logprobs with ln(Beta(2,2)) draws, seeded per question id.
void fill_synthetic_logprobs(Corpus& corpus, std::uint64_t seed);

// The weights each question contributes when no trained weights are given:
// its own token_weights if present, otherwise all ones.
std::vector<std::vector<double>> default_weights(const Corpus& corpus);

}  // namespace cotsched
