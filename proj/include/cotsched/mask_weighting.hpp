#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cotsched/corpus.hpp"
#include "json.hpp"

namespace cotsched {

// Dense row-major matrix of parameters or gradients.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  bool operator==(const Tensor&) const = default;
};

struct WeightParams {
  Tensor embed;     // |V| x d_e, shared by the mixer and the predictor
  Tensor query;     // d_e x d_e
  Tensor key;       // d_e x d_e
  Tensor value;     // d_e x d_e
  Tensor hidden_w;  // d_h x d_e
  Tensor hidden_b;  // 1 x d_h
  Tensor out_w;     // 1 x d_h
  Tensor out_b;     // 1 x 1
  Tensor pool;      // 1 x d_e, predictor attention gate
  Tensor class_w;   // C x d_e
  Tensor class_b;   // 1 x C

  static constexpr std::size_t kCount = 11;
  static constexpr std::array<const char*, kCount> kNames = {
      "embed", "query", "key", "value", "hidden_w", "hidden_b",
      "out_w", "out_b", "pool", "class_w", "class_b"};

  std::array<Tensor*, kCount> tensors();
  std::array<const Tensor*, kCount> tensors() const;
  std::size_t size() const;
  WeightParams zeros_like() const;
  // Flat view across all tensors in kNames order.
  double& flat(std::size_t index);
  double flat(std::size_t index) const;

  bool operator==(const WeightParams&) const = default;
};

struct WeightingConfig {
  double alpha = 0.5;  // mask-ratio weight
  double tau = 1.0;    // Gumbel temperature
  double learning_rate = 0.05;
  std::size_t prefix_samples = 4;
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  double gradient_clip = 5.0;  // max global L2 norm of a batch gradient; 0 disables
  // Leading epochs that fit only the predictor (generator frozen, no mask pressure), standing
  // in for a pretrained predictor. Counted within `epochs`.
  std::size_t predictor_warmup = 50;
  std::uint64_t seed = 0;

  bool operator==(const WeightingConfig&) const = default;
};

class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;

  Vocabulary();
  // Rationale tokens and question words in first-appearance order.
  static Vocabulary build(const Corpus& corpus);
  std::size_t add(const std::string& token);
  std::size_t lookup(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TokenWeightModel {
  Vocabulary vocab;
  std::vector<std::string> classes;  // distinct answers, first-appearance order
  WeightParams params;
  WeightingConfig config;

  std::size_t class_of(std::string_view answer) const;
  bool operator==(const TokenWeightModel&) const = default;
};

// Seeded initialization. The generator readout is small, so initial weights sit
// near 0.5, and the classifier starts at zero.
TokenWeightModel init_model(const Corpus& corpus, const WeightingConfig& config);

// sigma(f_w(Att(Emb(tokens)))) for every token.
std::vector<double> forward_weights(const TokenWeightModel& model,
                                    const std::vector<std::string>& tokens);

inline constexpr double kWeightClamp = 1e-6;

struct GumbelNoise {
  std::vector<double> keep;  // g1
  std::vector<double> drop;  // g0
};
GumbelNoise draw_gumbel_noise(std::size_t n, std::uint64_t seed);

struct MaskSample {
  std::vector<std::uint8_t> hard;  // m_j, 1 = kept
  std::vector<double> soft;
};

MaskSample sample_masks(std::span<const double> weights, double tau, const GumbelNoise& noise);
MaskSample gumbel_sample(std::span<const double> weights, double tau, std::uint64_t seed);

// Prefix cut points k drawn uniformly from [1, n].
std::vector<std::size_t> sample_prefix_lengths(std::size_t n, std::size_t count, std::uint64_t seed);

// Sum over prefix lengths of -log P(answer | question, first k masked tokens).
double answer_prediction_loss(const TokenWeightModel& model, const Question& question,
                              const MaskSample& sample, std::span<const std::size_t> prefix_lengths);
double mask_ratio_loss(const MaskSample& sample);
double total_weighting_loss(double prediction_loss, double mask_loss, double alpha);

// Whether the predictor sees hard masks (straight-through training) or the
// soft relaxation (differentiable everywhere; used by the gradient check).
enum class MaskMode { kStraightThrough, kRelaxed };

struct LossBreakdown {
  double prediction = 0.0;
  double mask = 0.0;
  double total = 0.0;
};

// L_k for one question with frozen noise and prefixes. When `grad` is
// non-null the gradient of L_k is accumulated into it.
LossBreakdown weighting_loss(const TokenWeightModel& model, const Question& question,
                             const GumbelNoise& noise, std::span<const std::size_t> prefix_lengths,
                             MaskMode mode, WeightParams* grad = nullptr);

struct TrainingResult {
  TokenWeightModel model;
  std::vector<std::vector<double>> weights;  // per question, corpus order
  std::vector<double> epoch_losses;          // mean L_k per epoch
};

TrainingResult train_weighting(const Corpus& corpus, const WeightingConfig& config);

// Significance weights for every question, computed in parallel.
std::vector<std::vector<double>> corpus_weights(const TokenWeightModel& model, const Corpus& corpus);
namespace serial {
std::vector<std::vector<double>> corpus_weights(const TokenWeightModel& model, const Corpus& corpus);
}

struct GradientCheckOptions {
  std::size_t num_params = 100;
  double step = 1e-5;
  // Negative control: report this flat parameter's analytic gradient as zero.
  std::optional<std::size_t> zero_gradient_of;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences of L_k (relaxed masks, frozen noise) against the
// analytic gradient. The error of one parameter is |a - n| / max(|a|, |n|, 1e-4).
GradientCheckResult gradient_check(const TokenWeightModel& model, const Question& question,
                                   std::uint64_t seed, const GradientCheckOptions& options = {});

// Flat index of the parameter with the largest analytic gradient magnitude.
std::size_t largest_gradient_index(const TokenWeightModel& model, const Question& question,
                                   std::uint64_t seed);

inline constexpr int kCheckpointVersion = 1;
nlohmann::ordered_json model_to_json(const TokenWeightModel& model);
TokenWeightModel model_from_json(const nlohmann::json& doc);

}  // namespace cotsched
