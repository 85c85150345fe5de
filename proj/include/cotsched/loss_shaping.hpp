#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotsched/corpus.hpp"
#include "cotsched/schedule.hpp"
#include "json.hpp"

namespace cotsched {

// What a trainer needs for one question at one stage: tokens
// [0, input_end) are context, tokens [gen_start, gen_end) are generated and
// weighted by `weights` (aligned to the generation range).
struct LossSpec {
  std::string id;
  std::size_t t = 0;
  std::size_t input_end = 0;
  std::size_t gen_start = 0;
  std::size_t gen_end = 0;
  std::vector<double> weights;

  std::size_t gen_size() const { return gen_end - gen_start; }
  bool operator==(const LossSpec&) const = default;
};

// Generation starts at the first token of step c+1. Without weights every
// generated token gets weight 1.
LossSpec shape_stage_loss(const Question& question, std::size_t t, std::size_t input_steps,
                          std::optional<std::span<const double>> weights = std::nullopt);

// -sum_j weight_j * logprob_j over the generation range. `logprobs` covers
// the rationale from token 0 through gen_end.
double evaluate_loss(const LossSpec& spec, std::span<const double> logprobs);

// Batched evaluate_loss; entry i pairs specs[i] with logprobs[i].
std::vector<double> evaluate_losses(const std::vector<LossSpec>& specs,
                                    const std::vector<std::vector<double>>& logprobs);
namespace serial {
std::vector<double> evaluate_losses(const std::vector<LossSpec>& specs,
                                    const std::vector<std::vector<double>>& logprobs);
}

// Loss specs for every question at every stage of the schedule.
std::vector<LossSpec> shape_schedule(const Corpus& corpus, const Schedule& schedule,
                                     const std::vector<std::vector<double>>* weights);

nlohmann::ordered_json loss_spec_to_json(const LossSpec& spec);
LossSpec loss_spec_from_json(const nlohmann::json& rec);

struct StudentConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

struct StudentTrace {
  std::vector<double> epoch_losses;                      // mean per-question loss, epochs 1..N
  std::vector<std::vector<std::size_t>> input_steps;     // c per epoch, corpus order
  std::vector<std::vector<double>> final_probabilities;  // P(r_j | r_{j-1}) per question

  bool operator==(const StudentTrace&) const = default;
};

// Toy student: softmax over (unigram + previous-token bigram) logits, one SGD
// step per question per epoch on the weighted generation loss. Epoch e uses
// schedule stage e.
StudentTrace simulate_student(const Corpus& corpus, const Schedule& schedule,
                              const std::vector<std::vector<double>>* weights,
                              const StudentConfig& config);

// Plain full-rationale NLL training of the same toy student.
StudentTrace train_full_rationale(const Corpus& corpus, const StudentConfig& config);

nlohmann::ordered_json trace_to_json(const StudentTrace& trace, const Corpus& corpus);

}  // namespace cotsched
