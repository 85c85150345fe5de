#include "cotsched/difficulty.hpp"

#include <algorithm>
#include <cmath>

#include "cotsched/error.hpp"
#include "cotsched/numeric.hpp"
#include "cotsched/rng.hpp"

namespace cotsched {

const QuestionDifficulty& DifficultyTable::at(std::string_view id) const {
  for (const auto& q : questions) {
    if (q.id == id) return q;
  }
  throw ValidationError("difficulty table has no question \"" + std::string(id) + "\"");
}

std::vector<double> normalize_step_weights(std::span<const double> weights, StepSpan span) {
  if (span.end <= span.start) throw ValidationError("normalize_step_weights: empty step");
  if (span.end > weights.size()) throw ValidationError("normalize_step_weights: weights do not cover step");
  const auto step = weights.subspan(span.start, span.size());
  const double peak = *std::max_element(step.begin(), step.end());
  std::vector<double> out(step.size());
  double z = 0.0;
  for (std::size_t j = 0; j < step.size(); ++j) {
    out[j] = std::exp(step[j] - peak);
    z += out[j];
  }
  for (double& v : out) v /= z;
  return out;
}

double step_difficulty(std::span<const double> logprobs, std::span<const double> normalized,
                       StepSpan span) {
  if (logprobs.empty())
    throw ValidationError("step difficulty needs token_logprobs; supply them in the corpus "
                          "or request synthetic logprobs");
  if (span.end > logprobs.size() || normalized.size() != span.size())
    throw ValidationError("step_difficulty: logprobs or weights do not cover the step");
  double d = 0.0;
  for (std::size_t j = 0; j < span.size(); ++j) d -= normalized[j] * logprobs[span.start + j];
  // -0.0 and rounding dust never make d negative.
  return std::max(d, 0.0);
}

double question_generation_difficulty(const QuestionDifficulty& q, std::size_t input_steps) {
  if (input_steps > q.steps.size())
    throw ValidationError("question \"" + q.id + "\": input-step count " +
                          std::to_string(input_steps) + " exceeds step count " +
                          std::to_string(q.steps.size()));
  CompensatedSum s;
  for (std::size_t k = input_steps; k < q.steps.size(); ++k) s.add(q.steps[k]);
  return s.value();
}

double question_generation_difficulty(const DifficultyTable& table, std::string_view id,
                                      std::size_t input_steps) {
  return question_generation_difficulty(table.at(id), input_steps);
}

double corpus_total_difficulty(const DifficultyTable& table) {
  CompensatedSum s;
  for (const auto& q : table.questions) s.add(q.total);
  return s.value();
}

QuestionDifficulty assess_question(const Question& q, std::span<const double> weights) {
  if (!q.token_logprobs)
    throw ValidationError("question \"" + q.id +
                          "\": missing token_logprobs; supply them in the corpus or pass "
                          "--synthetic-logprobs SEED");
  if (weights.size() != q.num_tokens())
    throw ValidationError("question \"" + q.id + "\": weight count does not match token count");
  QuestionDifficulty out;
  out.id = q.id;
  out.steps.reserve(q.num_steps());
  for (const auto& span : q.step_spans) {
    const auto w_hat = normalize_step_weights(weights, span);
    out.steps.push_back(step_difficulty(*q.token_logprobs, w_hat, span));
  }
  out.total = question_generation_difficulty(out, 0);
  return out;
}

namespace {

void check_shapes(const Corpus& corpus, const std::vector<std::vector<double>>& weights) {
  if (weights.size() != corpus.size())
    throw ValidationError("weights cover " + std::to_string(weights.size()) +
                          " questions but the corpus has " + std::to_string(corpus.size()));
}

}  // namespace

DifficultyTable compute_difficulty_table(const Corpus& corpus,
                                         const std::vector<std::vector<double>>& weights) {
  check_shapes(corpus, weights);
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
  DifficultyTable table;
  table.questions.resize(corpus.size());
  // Exceptions may not cross the parallel region; remember the first by index.
  std::vector<std::string> failures(corpus.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      table.questions[i] = assess_question(corpus.questions[i], weights[i]);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw ValidationError(f);
  }
  table.total = corpus_total_difficulty(table);
  return table;
}

namespace serial {

DifficultyTable compute_difficulty_table(const Corpus& corpus,
                                         const std::vector<std::vector<double>>& weights) {
  check_shapes(corpus, weights);
  DifficultyTable table;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    table.questions.push_back(assess_question(corpus.questions[i], weights[i]));
  table.total = corpus_total_difficulty(table);
  return table;
}

}  // namespace serial

void fill_synthetic_logprobs(Corpus& corpus, std::uint64_t seed) {
  for (auto& q : corpus.questions) {
    Rng rng(fnv1a64(q.id, seed));
    std::vector<double> lp(q.num_tokens());
    for (double& v : lp) v = std::log(rng.beta22());
    q.token_logprobs = std::move(lp);
  }
}

std::vector<std::vector<double>> default_weights(const Corpus& corpus) {
  std::vector<std::vector<double>> out;
  out.reserve(corpus.size());
  for (const auto& q : corpus.questions)
    out.push_back(q.token_weights ? *q.token_weights : std::vector<double>(q.num_tokens(), 1.0));
  return out;
}

}  // namespace cotsched
