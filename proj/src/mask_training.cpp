#include <algorithm>
#include <cmath>
#include <numeric>

#include "cotsched/error.hpp"
#include "cotsched/mask_weighting.hpp"
#include "cotsched/rng.hpp"
#include "mask_internal.hpp"

namespace cotsched {

using nlohmann::json;
using nlohmann::ordered_json;

TrainingResult train_weighting(const Corpus& corpus, const WeightingConfig& config) {
  if (!(config.alpha >= 0.0)) throw ValidationError("alpha must be nonnegative");
  if (!(config.tau > 0.0)) throw ValidationError("tau must be positive");
  if (!(config.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (config.batch_size == 0) throw ValidationError("batch size must be positive");
  if (config.predictor_warmup > config.epochs)
    throw ValidationError("predictor warm-up cannot exceed the epoch count");

  TrainingResult result;
  result.model = init_model(corpus, config);
  auto& model = result.model;

  std::vector<detail::EncodedQuestion> encoded;
  for (const auto& q : corpus.questions) encoded.push_back(detail::encode(model, q, true));

  Rng order_rng(sub_seed(config.seed, "weigh-order"));
  Rng noise_rng(sub_seed(config.seed, "gumbel"));
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    const bool warmup = epoch < config.predictor_warmup;
    const double alpha = warmup ? 0.0 : config.alpha;
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      WeightParams grad = model.params.zeros_like();
      for (std::size_t b = start; b < stop; ++b) {
        const auto& enc = encoded[order[b]];
        const std::size_t n = enc.rationale.size();
        const auto noise = draw_gumbel_noise(n, noise_rng.next_u64());
        const auto prefixes = sample_prefix_lengths(n, config.prefix_samples, noise_rng.next_u64());
        const auto loss = detail::weighting_loss(model.params, enc, alpha, config.tau, noise, prefixes,
                                                 MaskMode::kStraightThrough, &grad);
        if (!std::isfinite(loss.total))
          throw NumericError("weighting loss became non-finite at epoch " + std::to_string(epoch + 1) +
                             " on question \"" + corpus.questions[order[b]].id +
                             "\"; lower the learning rate");
        epoch_loss += loss.prediction + config.alpha * loss.mask;
      }
      if (warmup) {
        for (Tensor* t : {&grad.query, &grad.key, &grad.value, &grad.hidden_w, &grad.hidden_b, &grad.out_w,
                          &grad.out_b})
          std::fill(t->values.begin(), t->values.end(), 0.0);
      }
      double step = config.learning_rate / static_cast<double>(stop - start);
      auto params = model.params.tensors();
      auto grads = grad.tensors();
      if (config.gradient_clip > 0.0) {
        double norm2 = 0.0;
        for (const Tensor* g : grads) {
          for (double v : g->values) norm2 += v * v;
        }
        const double norm = std::sqrt(norm2) / static_cast<double>(stop - start);
        if (norm > config.gradient_clip) step *= config.gradient_clip / norm;
      }
      for (std::size_t t = 0; t < WeightParams::kCount; ++t) {
        auto& pv = params[t]->values;
        const auto& gv = grads[t]->values;
        for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= step * gv[i];
      }
    }
    const double mean = order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size());
    if (!std::isfinite(mean)) throw NumericError("weighting loss became non-finite; lower the learning rate");
    result.epoch_losses.push_back(mean);
  }
  result.weights = corpus_weights(model, corpus);
  return result;
}

std::vector<std::vector<double>> corpus_weights(const TokenWeightModel& model, const Corpus& corpus) {
  std::vector<std::vector<double>> out(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = forward_weights(model, corpus.questions[i].rationale_tokens);
  return out;
}

namespace serial {

std::vector<std::vector<double>> corpus_weights(const TokenWeightModel& model, const Corpus& corpus) {
  std::vector<std::vector<double>> out;
  out.reserve(corpus.size());
  for (const auto& q : corpus.questions) out.push_back(forward_weights(model, q.rationale_tokens));
  return out;
}

}  // namespace serial

namespace {

struct CheckSetup {
  detail::EncodedQuestion enc;
  GumbelNoise noise;
  std::vector<std::size_t> prefixes;
  WeightParams grad;
};

CheckSetup prepare_check(const TokenWeightModel& model, const Question& question, std::uint64_t seed) {
  CheckSetup s;
  s.enc = detail::encode(model, question, true);
  const std::size_t n = s.enc.rationale.size();
  s.noise = draw_gumbel_noise(n, sub_seed(seed, "check-noise"));
  s.prefixes = sample_prefix_lengths(n, std::max<std::size_t>(1, model.config.prefix_samples),
                                     sub_seed(seed, "check-prefix"));
  s.grad = model.params.zeros_like();
  detail::weighting_loss(model.params, s.enc, model.config.alpha, model.config.tau, s.noise, s.prefixes,
                         MaskMode::kRelaxed, &s.grad);
  return s;
}

}  // namespace

std::size_t largest_gradient_index(const TokenWeightModel& model, const Question& question,
                                   std::uint64_t seed) {
  const auto setup = prepare_check(model, question, seed);
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < setup.grad.size(); ++i) {
    const double mag = std::abs(setup.grad.flat(i));
    if (mag > best_mag) {
      best_mag = mag;
      best = i;
    }
  }
  return best;
}

GradientCheckResult gradient_check(const TokenWeightModel& model, const Question& question,
                                   std::uint64_t seed, const GradientCheckOptions& options) {
  GradientCheckResult result;
  if (model.params.size() == 0) return result;
  const auto setup = prepare_check(model, question, seed);

  // Parameters that can influence this question's loss.
  std::vector<std::size_t> pool;
  const std::size_t d = model.params.embed.cols;
  std::vector<char> used(model.params.embed.rows, 0);
  for (std::size_t id : setup.enc.rationale) used[id] = 1;
  for (std::size_t id : setup.enc.question) used[id] = 1;
  for (std::size_t r = 0; r < used.size(); ++r) {
    if (!used[r]) continue;
    for (std::size_t c = 0; c < d; ++c) pool.push_back(r * d + c);
  }
  for (std::size_t i = model.params.embed.values.size(); i < model.params.size(); ++i) pool.push_back(i);

  Rng rng(sub_seed(seed, "check-pick"));
  rng.shuffle(pool.begin(), pool.end());
  if (pool.size() > options.num_params) pool.resize(options.num_params);
  if (options.zero_gradient_of) {
    if (*options.zero_gradient_of >= model.params.size())
      throw ValidationError("gradient_check: mutated parameter index out of range");
    if (std::find(pool.begin(), pool.end(), *options.zero_gradient_of) == pool.end()) {
      if (pool.empty()) pool.push_back(*options.zero_gradient_of);
      else pool.front() = *options.zero_gradient_of;
    }
  }

  WeightParams probe = model.params;
  auto loss_at = [&]() {
    return detail::weighting_loss(probe, setup.enc, model.config.alpha, model.config.tau, setup.noise,
                                  setup.prefixes, MaskMode::kRelaxed, nullptr)
        .total;
  };
  for (std::size_t idx : pool) {
    const double original = probe.flat(idx);
    probe.flat(idx) = original + options.step;
    const double plus = loss_at();
    probe.flat(idx) = original - options.step;
    const double minus = loss_at();
    probe.flat(idx) = original;

    const double numeric = (plus - minus) / (2.0 * options.step);
    const double analytic = options.zero_gradient_of == idx ? 0.0 : setup.grad.flat(idx);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  }
  return result;
}

ordered_json model_to_json(const TokenWeightModel& model) {
  ordered_json doc;
  doc["format_version"] = kCheckpointVersion;
  const auto& c = model.config;
  doc["config"] = {{"alpha", c.alpha},           {"tau", c.tau},
                   {"learning_rate", c.learning_rate}, {"prefix_samples", c.prefix_samples},
                   {"epochs", c.epochs},         {"batch_size", c.batch_size},
                   {"embed_dim", c.embed_dim},   {"hidden_dim", c.hidden_dim},
                   {"gradient_clip", c.gradient_clip}, {"predictor_warmup", c.predictor_warmup},
                   {"seed", c.seed}};
  doc["vocab"] = model.vocab.tokens();
  doc["classes"] = model.classes;
  const auto tensors = model.params.tensors();
  for (std::size_t t = 0; t < WeightParams::kCount; ++t) {
    const std::string name = WeightParams::kNames[t];
    doc[name + ".shape"] = {tensors[t]->rows, tensors[t]->cols};
    doc[name] = tensors[t]->values;
  }
  return doc;
}

TokenWeightModel model_from_json(const json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kCheckpointVersion)
      throw ParseError("unsupported checkpoint format_version");
    TokenWeightModel m;
    const auto& c = doc.at("config");
    m.config.alpha = c.at("alpha").get<double>();
    m.config.tau = c.at("tau").get<double>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.prefix_samples = c.at("prefix_samples").get<std::size_t>();
    m.config.epochs = c.at("epochs").get<std::size_t>();
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.embed_dim = c.at("embed_dim").get<std::size_t>();
    m.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    m.config.gradient_clip = c.at("gradient_clip").get<double>();
    m.config.predictor_warmup = c.at("predictor_warmup").get<std::size_t>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    const auto tokens = doc.at("vocab").get<std::vector<std::string>>();
    if (tokens.empty() || tokens.front() != "<unk>") throw ParseError("checkpoint vocabulary must start with <unk>");
    for (const auto& t : tokens) m.vocab.add(t);
    m.classes = doc.at("classes").get<std::vector<std::string>>();
    auto tensors = m.params.tensors();
    for (std::size_t t = 0; t < WeightParams::kCount; ++t) {
      const std::string name = WeightParams::kNames[t];
      const auto shape = doc.at(name + ".shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw ParseError("checkpoint tensor \"" + name + "\" has a bad shape");
      *tensors[t] = Tensor(shape[0], shape[1]);
      tensors[t]->values = doc.at(name).get<std::vector<double>>();
      if (tensors[t]->values.size() != shape[0] * shape[1])
        throw ParseError("checkpoint tensor \"" + name + "\" has the wrong number of values");
    }
    if (m.params.embed.rows != m.vocab.size()) throw ParseError("checkpoint embedding rows differ from vocabulary");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace cotsched
