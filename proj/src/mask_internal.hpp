#pragma once

// Forward/backward pieces of the token weight model shared between the
// model, training and gradient-check translation units.

#include <span>
#include <vector>

#include "cotsched/mask_weighting.hpp"

namespace cotsched::detail {

struct EncodedQuestion {
  std::vector<std::size_t> rationale;
  std::vector<std::size_t> question;
  std::size_t answer = 0;
};

EncodedQuestion encode(const TokenWeightModel& model, const Question& q, bool need_answer);

struct MixerCache {
  Tensor x, q, k, v;  // n x d
  Tensor attn;        // n x n
  Tensor e;           // n x d, mixed embeddings
  Tensor h;           // n x d_h
  std::vector<double> logit;
  std::vector<double> weight;
};

MixerCache mix_forward(const WeightParams& p, std::span<const std::size_t> ids);
void mix_backward(const WeightParams& p, const MixerCache& cache, std::span<const std::size_t> ids,
                  std::span<const double> dlogit, WeightParams& grad);

// -log P(answer) from the question words plus the first `prefix` rationale
// tokens, each rationale token scaled by keep[j] in the attention pool.
double predict_loss(const WeightParams& p, const EncodedQuestion& enc, std::span<const double> keep,
                    std::size_t prefix, WeightParams* grad, std::span<double> dkeep);

LossBreakdown weighting_loss(const WeightParams& p, const EncodedQuestion& enc, double alpha, double tau,
                             const GumbelNoise& noise, std::span<const std::size_t> prefixes,
                             MaskMode mode, WeightParams* grad);

}  // namespace cotsched::detail
