#include "cotsched/loss_shaping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cotsched/error.hpp"
#include "cotsched/rng.hpp"

namespace cotsched {

using nlohmann::json;
using nlohmann::ordered_json;

LossSpec shape_stage_loss(const Question& question, std::size_t t, std::size_t input_steps,
                          std::optional<std::span<const double>> weights) {
  const std::size_t steps = question.num_steps();
  if (input_steps > steps)
    throw ValidationError("question \"" + question.id + "\": input-step count " + std::to_string(input_steps) +
                          " exceeds step count " + std::to_string(steps));
  const std::size_t n = question.num_tokens();
  if (weights && weights->size() != n)
    throw ValidationError("question \"" + question.id + "\": weights do not cover the rationale");
  LossSpec spec;
  spec.id = question.id;
  spec.t = t;
  spec.input_end = input_steps == steps ? n : question.step_spans[input_steps].start;
  spec.gen_start = spec.input_end;
  spec.gen_end = n;
  if (weights) {
    spec.weights.assign(weights->begin() + static_cast<std::ptrdiff_t>(spec.gen_start), weights->end());
  } else {
    spec.weights.assign(spec.gen_size(), 1.0);
  }
  return spec;
}

double evaluate_loss(const LossSpec& spec, std::span<const double> logprobs) {
  if (logprobs.size() != spec.gen_end || spec.weights.size() != spec.gen_size())
    throw ValidationError("loss spec for \"" + spec.id + "\": logprobs or weights do not cover the generation range");
  double loss = 0.0;
  for (std::size_t j = spec.gen_start; j < spec.gen_end; ++j) {
    if (!(logprobs[j] <= 0.0)) throw ValidationError("loss spec for \"" + spec.id + "\": logprob above 0");
    loss -= spec.weights[j - spec.gen_start] * logprobs[j];
  }
  return loss;
}

std::vector<double> evaluate_losses(const std::vector<LossSpec>& specs,
                                    const std::vector<std::vector<double>>& logprobs) {
  if (specs.size() != logprobs.size()) throw ValidationError("evaluate_losses: specs and logprobs differ in count");
  std::vector<double> out(specs.size());
  std::vector<std::string> failures(specs.size());
  const auto n = static_cast<std::ptrdiff_t>(specs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = evaluate_loss(specs[i], logprobs[i]);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw ValidationError(f);
  }
  return out;
}

namespace serial {

std::vector<double> evaluate_losses(const std::vector<LossSpec>& specs,
                                    const std::vector<std::vector<double>>& logprobs) {
  if (specs.size() != logprobs.size()) throw ValidationError("evaluate_losses: specs and logprobs differ in count");
  std::vector<double> out;
  out.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) out.push_back(evaluate_loss(specs[i], logprobs[i]));
  return out;
}

}  // namespace serial

namespace {

void check_alignment(const Corpus& corpus, const Schedule& schedule) {
  if (schedule.ids.size() != corpus.size())
    throw ValidationError("schedule covers " + std::to_string(schedule.ids.size()) + " questions but the corpus has " +
                          std::to_string(corpus.size()));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (schedule.ids[i] != corpus.questions[i].id)
      throw ValidationError("schedule question \"" + schedule.ids[i] + "\" does not match corpus question \"" +
                            corpus.questions[i].id + "\"");
  }
}

std::optional<std::span<const double>> weights_for(const std::vector<std::vector<double>>* weights, std::size_t i) {
  if (!weights) return std::nullopt;
  return std::span<const double>((*weights)[i]);
}

}  // namespace

std::vector<LossSpec> shape_schedule(const Corpus& corpus, const Schedule& schedule,
                                     const std::vector<std::vector<double>>* weights) {
  check_alignment(corpus, schedule);
  if (weights && weights->size() != corpus.size()) throw ValidationError("weights do not cover the corpus");
  std::vector<LossSpec> specs;
  for (const auto& stage : schedule.stages) {
    for (std::size_t i = 0; i < corpus.size(); ++i)
      specs.push_back(shape_stage_loss(corpus.questions[i], stage.t, stage.input_steps[i], weights_for(weights, i)));
  }
  return specs;
}

ordered_json loss_spec_to_json(const LossSpec& spec) {
  ordered_json rec;
  rec["t"] = spec.t;
  rec["id"] = spec.id;
  rec["input_end"] = spec.input_end;
  rec["gen_start"] = spec.gen_start;
  rec["gen_end"] = spec.gen_end;
  rec["weights"] = spec.weights;
  return rec;
}

LossSpec loss_spec_from_json(const json& rec) {
  try {
    LossSpec s;
    s.t = rec.at("t").get<std::size_t>();
    s.id = rec.at("id").get<std::string>();
    s.input_end = rec.at("input_end").get<std::size_t>();
    s.gen_start = rec.at("gen_start").get<std::size_t>();
    s.gen_end = rec.at("gen_end").get<std::size_t>();
    s.weights = rec.at("weights").get<std::vector<double>>();
    if (s.gen_start > s.gen_end || s.weights.size() != s.gen_size())
      throw ParseError("loss spec for \"" + s.id + "\" has inconsistent ranges");
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("loss spec: ") + e.what());
  }
}

namespace {

// Unigram + bigram logits over the rationale vocabulary; index 0 is the
// begin-of-rationale context.
class ToyStudent {
 public:
  explicit ToyStudent(const Corpus& corpus) {
    index_.emplace("<bos>", 0);
    for (const auto& q : corpus.questions) {
      for (const auto& t : q.rationale_tokens) index_.emplace(t, index_.size());
    }
    vocab_ = index_.size();
    unigram_.assign(vocab_, 0.0);
    bigram_.assign(vocab_ * vocab_, 0.0);
    for (const auto& q : corpus.questions) {
      std::vector<std::size_t> ids;
      for (const auto& t : q.rationale_tokens) ids.push_back(index_.at(t));
      encoded_.push_back(std::move(ids));
    }
  }

  std::size_t context(std::size_t question, std::size_t j) const {
    return j == 0 ? 0 : encoded_[question][j - 1];
  }

  // Fills `probs` with P(. | context) and returns it.
  const std::vector<double>& distribution(std::size_t ctx) {
    probs_.resize(vocab_);
    double peak = -INFINITY;
    for (std::size_t v = 0; v < vocab_; ++v) {
      probs_[v] = unigram_[v] + bigram_[ctx * vocab_ + v];
      peak = std::max(peak, probs_[v]);
    }
    double z = 0.0;
    for (double& p : probs_) {
      p = std::exp(p - peak);
      z += p;
    }
    for (double& p : probs_) p /= z;
    return probs_;
  }

  double logprob(std::size_t question, std::size_t j) {
    const auto& p = distribution(context(question, j));
    return std::log(p[encoded_[question][j]]);
  }

  // Gradient of -scale * log P(token j) applied immediately with step lr.
  void descend(std::size_t question, std::size_t j, double scale, double lr) {
    const std::size_t ctx = context(question, j);
    const auto& p = distribution(ctx);
    const std::size_t target = encoded_[question][j];
    for (std::size_t v = 0; v < vocab_; ++v) {
      const double g = scale * (p[v] - (v == target ? 1.0 : 0.0));
      unigram_[v] -= lr * g;
      bigram_[ctx * vocab_ + v] -= lr * g;
    }
  }

  std::size_t length(std::size_t question) const { return encoded_[question].size(); }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t vocab_ = 0;
  std::vector<double> unigram_, bigram_, probs_;
  std::vector<std::vector<std::size_t>> encoded_;
};

std::vector<std::vector<double>> final_probabilities(ToyStudent& student, const Corpus& corpus) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<double> p;
    for (std::size_t j = 0; j < student.length(i); ++j) p.push_back(std::exp(student.logprob(i, j)));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

StudentTrace simulate_student(const Corpus& corpus, const Schedule& schedule,
                              const std::vector<std::vector<double>>* weights, const StudentConfig& config) {
  check_alignment(corpus, schedule);
  if (weights && weights->size() != corpus.size()) throw ValidationError("weights do not cover the corpus");
  ToyStudent student(corpus);
  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  StudentTrace trace;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto& c = schedule.input_steps_at(epoch);
    trace.input_steps.push_back(c);
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t i : order) {
      const auto spec = shape_stage_loss(corpus.questions[i], epoch, c[i], weights_for(weights, i));
      double loss = 0.0;
      for (std::size_t j = spec.gen_start; j < spec.gen_end; ++j)
        loss -= spec.weights[j - spec.gen_start] * student.logprob(i, j);
      total += loss;
      for (std::size_t j = spec.gen_start; j < spec.gen_end; ++j)
        student.descend(i, j, spec.weights[j - spec.gen_start], config.learning_rate);
    }
    trace.epoch_losses.push_back(corpus.size() ? total / static_cast<double>(corpus.size()) : 0.0);
  }
  trace.final_probabilities = final_probabilities(student, corpus);
  return trace;
}

StudentTrace train_full_rationale(const Corpus& corpus, const StudentConfig& config) {
  ToyStudent student(corpus);
  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  StudentTrace trace;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    trace.input_steps.emplace_back(corpus.size(), 0);
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t i : order) {
      double nll = 0.0;
      for (std::size_t j = 0; j < student.length(i); ++j) nll -= student.logprob(i, j);
      total += nll;
      for (std::size_t j = 0; j < student.length(i); ++j) student.descend(i, j, 1.0, config.learning_rate);
    }
    trace.epoch_losses.push_back(corpus.size() ? total / static_cast<double>(corpus.size()) : 0.0);
  }
  trace.final_probabilities = final_probabilities(student, corpus);
  return trace;
}

ordered_json trace_to_json(const StudentTrace& trace, const Corpus& corpus) {
  ordered_json doc;
  doc["epoch_losses"] = trace.epoch_losses;
  ordered_json epochs = ordered_json::array();
  for (const auto& c : trace.input_steps) {
    ordered_json rec = ordered_json::object();
    for (std::size_t i = 0; i < corpus.size(); ++i) rec[corpus.questions[i].id] = c[i];
    epochs.push_back(std::move(rec));
  }
  doc["c"] = std::move(epochs);
  ordered_json probs = ordered_json::object();
  for (std::size_t i = 0; i < corpus.size(); ++i) probs[corpus.questions[i].id] = trace.final_probabilities[i];
  doc["final_probabilities"] = std::move(probs);
  return doc;
}

}  // namespace cotsched
