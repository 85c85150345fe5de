#include <algorithm>
#include <cmath>

#include "cotsched/error.hpp"
#include "cotsched/mask_weighting.hpp"
#include "cotsched/numeric.hpp"
#include "cotsched/rng.hpp"
#include "mask_internal.hpp"

namespace cotsched {

std::array<Tensor*, WeightParams::kCount> WeightParams::tensors() {
  return {&embed, &query, &key, &value, &hidden_w, &hidden_b, &out_w, &out_b, &pool, &class_w, &class_b};
}

std::array<const Tensor*, WeightParams::kCount> WeightParams::tensors() const {
  return {&embed, &query, &key, &value, &hidden_w, &hidden_b, &out_w, &out_b, &pool, &class_w, &class_b};
}

std::size_t WeightParams::size() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->values.size();
  return n;
}

WeightParams WeightParams::zeros_like() const {
  WeightParams out;
  auto dst = out.tensors();
  auto src = tensors();
  for (std::size_t i = 0; i < kCount; ++i) *dst[i] = Tensor(src[i]->rows, src[i]->cols);
  return out;
}

double& WeightParams::flat(std::size_t index) {
  for (Tensor* t : tensors()) {
    if (index < t->values.size()) return t->values[index];
    index -= t->values.size();
  }
  throw ValidationError("flat parameter index out of range");
}

double WeightParams::flat(std::size_t index) const {
  return const_cast<WeightParams&>(*this).flat(index);
}

Vocabulary::Vocabulary() { add("<unk>"); }

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

Vocabulary Vocabulary::build(const Corpus& corpus) {
  Vocabulary v;
  for (const auto& q : corpus.questions) {
    for (const auto& t : q.rationale_tokens) v.add(t);
    for (const auto& w : split_words(q.question_text)) v.add(w);
  }
  return v;
}

std::size_t TokenWeightModel::class_of(std::string_view answer) const {
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c] == answer) return c;
  }
  throw ValidationError("answer \"" + std::string(answer) + "\" is not one of the model's answer classes");
}

TokenWeightModel init_model(const Corpus& corpus, const WeightingConfig& config) {
  if (config.embed_dim == 0 || config.hidden_dim == 0)
    throw ValidationError("embedding and hidden dimensions must be positive");
  TokenWeightModel m;
  m.config = config;
  m.vocab = Vocabulary::build(corpus);
  for (const auto& q : corpus.questions) {
    if (std::find(m.classes.begin(), m.classes.end(), q.answer_text) == m.classes.end())
      m.classes.push_back(q.answer_text);
  }
  if (m.classes.empty()) m.classes.push_back("");

  const std::size_t d = config.embed_dim, h = config.hidden_dim;
  auto& p = m.params;
  p.embed = Tensor(m.vocab.size(), d);
  p.query = Tensor(d, d);
  p.key = Tensor(d, d);
  p.value = Tensor(d, d);
  p.hidden_w = Tensor(h, d);
  p.hidden_b = Tensor(1, h);
  p.out_w = Tensor(1, h);
  p.out_b = Tensor(1, 1);
  p.pool = Tensor(1, d);
  p.class_w = Tensor(m.classes.size(), d);
  p.class_b = Tensor(1, m.classes.size());

  Rng rng(sub_seed(config.seed, "weigh-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (Tensor* t : {&p.embed, &p.query, &p.key, &p.value, &p.hidden_w}) {
    for (double& v : t->values) v = rng.normal() * scale;
  }
  // A small random readout makes weights context dependent from the start. The classifier
  // starts at zero so that, before it learns anything, keeping a token neither helps nor hurts.
  for (double& v : p.out_w.values) v = rng.normal() * 0.1;
  return m;
}

namespace detail {

EncodedQuestion encode(const TokenWeightModel& model, const Question& q, bool need_answer) {
  EncodedQuestion enc;
  for (const auto& t : q.rationale_tokens) enc.rationale.push_back(model.vocab.lookup(t));
  for (const auto& w : split_words(q.question_text)) enc.question.push_back(model.vocab.lookup(w));
  if (need_answer) enc.answer = model.class_of(q.answer_text);
  return enc;
}

MixerCache mix_forward(const WeightParams& p, std::span<const std::size_t> ids) {
  const std::size_t n = ids.size(), d = p.embed.cols, hd = p.hidden_w.rows;
  MixerCache c;
  c.x = Tensor(n, d);
  c.q = Tensor(n, d);
  c.k = Tensor(n, d);
  c.v = Tensor(n, d);
  c.attn = Tensor(n, n);
  c.e = Tensor(n, d);
  c.h = Tensor(n, hd);
  c.logit.assign(n, 0.0);
  c.weight.assign(n, 0.0);

  for (std::size_t j = 0; j < n; ++j) {
    std::copy_n(p.embed.row(ids[j]).begin(), d, c.x.row(j).begin());
    for (std::size_t a = 0; a < d; ++a) {
      double sq = 0.0, sk = 0.0, sv = 0.0;
      for (std::size_t b = 0; b < d; ++b) {
        sq += p.query(a, b) * c.x(j, b);
        sk += p.key(a, b) * c.x(j, b);
        sv += p.value(a, b) * c.x(j, b);
      }
      c.q(j, a) = sq;
      c.k(j, a) = sk;
      c.v(j, a) = sv;
    }
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t j = 0; j < n; ++j) {
    double peak = -INFINITY;
    for (std::size_t l = 0; l < n; ++l) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += c.q(j, a) * c.k(l, a);
      c.attn(j, l) = s * inv_sqrt_d;
      peak = std::max(peak, c.attn(j, l));
    }
    double z = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      c.attn(j, l) = std::exp(c.attn(j, l) - peak);
      z += c.attn(j, l);
    }
    for (std::size_t l = 0; l < n; ++l) c.attn(j, l) /= z;
    for (std::size_t a = 0; a < d; ++a) {
      double o = 0.0;
      for (std::size_t l = 0; l < n; ++l) o += c.attn(j, l) * c.v(l, a);
      c.e(j, a) = c.x(j, a) + o;
    }
    double logit = p.out_b(0, 0);
    for (std::size_t a = 0; a < hd; ++a) {
      double pre = p.hidden_b(0, a);
      for (std::size_t b = 0; b < d; ++b) pre += p.hidden_w(a, b) * c.e(j, b);
      c.h(j, a) = std::tanh(pre);
      logit += p.out_w(0, a) * c.h(j, a);
    }
    c.logit[j] = logit;
    c.weight[j] = sigmoid(logit);
  }
  return c;
}

void mix_backward(const WeightParams& p, const MixerCache& c, std::span<const std::size_t> ids,
                  std::span<const double> dlogit, WeightParams& g) {
  const std::size_t n = ids.size(), d = p.embed.cols, hd = p.hidden_w.rows;
  Tensor de(n, d);
  for (std::size_t j = 0; j < n; ++j) {
    const double dl = dlogit[j];
    if (dl == 0.0) continue;
    g.out_b(0, 0) += dl;
    for (std::size_t a = 0; a < hd; ++a) {
      g.out_w(0, a) += dl * c.h(j, a);
      const double da = dl * p.out_w(0, a) * (1.0 - c.h(j, a) * c.h(j, a));
      if (da == 0.0) continue;
      g.hidden_b(0, a) += da;
      for (std::size_t b = 0; b < d; ++b) {
        g.hidden_w(a, b) += da * c.e(j, b);
        de(j, b) += p.hidden_w(a, b) * da;
      }
    }
  }

  // e = x + A V
  Tensor dx = de;
  Tensor dv(n, d), dq(n, d), dk(n, d);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> dattn(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        s += de(j, a) * c.v(l, a);
        dv(l, a) += c.attn(j, l) * de(j, a);
      }
      dattn[l] = s;
      mean += c.attn(j, l) * s;
    }
    for (std::size_t l = 0; l < n; ++l) {
      const double ds = c.attn(j, l) * (dattn[l] - mean) * inv_sqrt_d;
      if (ds == 0.0) continue;
      for (std::size_t a = 0; a < d; ++a) {
        dq(j, a) += ds * c.k(l, a);
        dk(l, a) += ds * c.q(j, a);
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        g.query(a, b) += dq(j, a) * c.x(j, b);
        g.key(a, b) += dk(j, a) * c.x(j, b);
        g.value(a, b) += dv(j, a) * c.x(j, b);
        dx(j, b) += p.query(a, b) * dq(j, a) + p.key(a, b) * dk(j, a) + p.value(a, b) * dv(j, a);
      }
    }
    auto row = g.embed.row(ids[j]);
    for (std::size_t b = 0; b < d; ++b) row[b] += dx(j, b);
  }
}

double predict_loss(const WeightParams& p, const EncodedQuestion& enc, std::span<const double> keep,
                    std::size_t prefix, WeightParams* g, std::span<double> dkeep) {
  const std::size_t d = p.embed.cols, classes = p.class_w.rows;
  const std::size_t nq = enc.question.size();
  const std::size_t total = nq + prefix;
  auto id_of = [&](std::size_t t) { return t < nq ? enc.question[t] : enc.rationale[t - nq]; };
  auto mult_of = [&](std::size_t t) { return t < nq ? 1.0 : keep[t - nq]; };

  // Gated sum pooling: each token adds mult * sigmoid(pool . x) * x, so its contribution is
  // linear in its mask value and a masked token contributes nothing.
  std::vector<double> gate(total), pooled(d, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    const auto x = p.embed.row(id_of(t));
    double s = 0.0;
    for (std::size_t a = 0; a < d; ++a) s += p.pool(0, a) * x[a];
    gate[t] = sigmoid(s);
    const double share = mult_of(t) * gate[t];
    if (share == 0.0) continue;
    for (std::size_t a = 0; a < d; ++a) pooled[a] += share * x[a];
  }

  std::vector<double> logits(classes);
  double lpeak = -INFINITY;
  for (std::size_t c = 0; c < classes; ++c) {
    double l = p.class_b(0, c);
    for (std::size_t a = 0; a < d; ++a) l += p.class_w(c, a) * pooled[a];
    logits[c] = l;
    lpeak = std::max(lpeak, l);
  }
  double lse = 0.0;
  for (double l : logits) lse += std::exp(l - lpeak);
  lse = lpeak + std::log(lse);
  const double loss = lse - logits[enc.answer];
  if (!g) return loss;

  std::vector<double> dpooled(d, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double gl = std::exp(logits[c] - lse) - (c == enc.answer ? 1.0 : 0.0);
    g->class_b(0, c) += gl;
    for (std::size_t a = 0; a < d; ++a) {
      g->class_w(c, a) += gl * pooled[a];
      dpooled[a] += gl * p.class_w(c, a);
    }
  }
  for (std::size_t t = 0; t < total; ++t) {
    const auto x = p.embed.row(id_of(t));
    double u = 0.0;
    for (std::size_t a = 0; a < d; ++a) u += dpooled[a] * x[a];
    if (t >= nq) dkeep[t - nq] += gate[t] * u;
    const double m = mult_of(t);
    if (m == 0.0) continue;
    const double share = m * gate[t];
    const double dscore = m * u * gate[t] * (1.0 - gate[t]);
    auto gx = g->embed.row(id_of(t));
    for (std::size_t a = 0; a < d; ++a) {
      g->pool(0, a) += dscore * x[a];
      gx[a] += share * dpooled[a] + dscore * p.pool(0, a);
    }
  }
  return loss;
}

LossBreakdown weighting_loss(const WeightParams& p, const EncodedQuestion& enc, double alpha, double tau,
                             const GumbelNoise& noise, std::span<const std::size_t> prefixes,
                             MaskMode mode, WeightParams* g) {
  const std::size_t n = enc.rationale.size();
  if (noise.keep.size() != n || noise.drop.size() != n)
    throw ValidationError("Gumbel noise does not match the rationale length");
  for (std::size_t k : prefixes) {
    if (k > n) throw ValidationError("prefix length exceeds the rationale length");
  }
  const MixerCache cache = mix_forward(p, enc.rationale);

  std::vector<double> soft(n), keep(n), clamped(n);
  for (std::size_t j = 0; j < n; ++j) {
    clamped[j] = std::clamp(cache.weight[j], kWeightClamp, 1.0 - kWeightClamp);
    const double v =
        (std::log(clamped[j]) - std::log1p(-clamped[j]) + noise.keep[j] - noise.drop[j]) / tau;
    soft[j] = sigmoid(v);
    keep[j] = mode == MaskMode::kRelaxed ? soft[j] : (soft[j] >= 0.5 ? 1.0 : 0.0);
  }

  LossBreakdown out;
  std::vector<double> dkeep(n, 0.0);
  for (std::size_t k : prefixes) out.prediction += predict_loss(p, enc, keep, k, g, dkeep);
  for (double s : soft) out.mask += s;
  out.total = out.prediction + alpha * out.mask;
  if (!g) return out;

  std::vector<double> dlogit(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (clamped[j] != cache.weight[j]) continue;  // clamp blocks the gradient
    const double dsoft = dkeep[j] + alpha;
    // d soft / d logit = soft (1 - soft) / tau when the weight is unclamped.
    dlogit[j] = dsoft * soft[j] * (1.0 - soft[j]) / tau;
  }
  mix_backward(p, cache, enc.rationale, dlogit, *g);
  return out;
}

}  // namespace detail

std::vector<double> forward_weights(const TokenWeightModel& model, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ValidationError("forward_weights: empty token sequence");
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(model.vocab.lookup(t));
  return detail::mix_forward(model.params, ids).weight;
}

GumbelNoise draw_gumbel_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  GumbelNoise noise;
  noise.keep.resize(n);
  noise.drop.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    noise.keep[j] = rng.gumbel();
    noise.drop[j] = rng.gumbel();
  }
  return noise;
}

MaskSample sample_masks(std::span<const double> weights, double tau, const GumbelNoise& noise) {
  if (!(tau > 0.0)) throw ValidationError("Gumbel temperature must be positive");
  if (noise.keep.size() != weights.size() || noise.drop.size() != weights.size())
    throw ValidationError("Gumbel noise does not match the weight count");
  MaskSample s;
  s.hard.resize(weights.size());
  s.soft.resize(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double w = weights[j];
    if (!(w > 0.0 && w < 1.0))
      throw ValidationError("Gumbel sampling needs weights strictly inside (0,1); clamp to [1e-6, 1-1e-6]");
    // exp(a)/(exp(a)+exp(b)) == sigmoid(a - b)
    const double a = (std::log(w) + noise.keep[j]) / tau;
    const double b = (std::log1p(-w) + noise.drop[j]) / tau;
    s.soft[j] = sigmoid(a - b);
    s.hard[j] = s.soft[j] >= 0.5 ? 1 : 0;
  }
  return s;
}

MaskSample gumbel_sample(std::span<const double> weights, double tau, std::uint64_t seed) {
  return sample_masks(weights, tau, draw_gumbel_noise(weights.size(), seed));
}

std::vector<std::size_t> sample_prefix_lengths(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_prefix_lengths: empty rationale");
  Rng rng(seed);
  std::vector<std::size_t> out(count);
  for (auto& k : out) k = 1 + static_cast<std::size_t>(rng.below(n));
  return out;
}

double answer_prediction_loss(const TokenWeightModel& model, const Question& question,
                              const MaskSample& sample, std::span<const std::size_t> prefix_lengths) {
  const auto enc = detail::encode(model, question, true);
  if (sample.hard.size() != enc.rationale.size())
    throw ValidationError("mask sample length does not match the rationale of \"" + question.id + "\"");
  std::vector<double> keep(sample.hard.begin(), sample.hard.end());
  std::vector<double> unused(keep.size());
  double loss = 0.0;
  for (std::size_t k : prefix_lengths) {
    if (k > keep.size()) throw ValidationError("prefix length exceeds the rationale length");
    loss += detail::predict_loss(model.params, enc, keep, k, nullptr, unused);
  }
  return loss;
}

double mask_ratio_loss(const MaskSample& sample) {
  double s = 0.0;
  for (double v : sample.soft) s += v;
  return s;
}

double total_weighting_loss(double prediction_loss, double mask_loss, double alpha) {
  if (!(alpha >= 0.0)) throw ValidationError("alpha must be nonnegative");
  return prediction_loss + alpha * mask_loss;
}

LossBreakdown weighting_loss(const TokenWeightModel& model, const Question& question,
                             const GumbelNoise& noise, std::span<const std::size_t> prefix_lengths,
                             MaskMode mode, WeightParams* grad) {
  const auto enc = detail::encode(model, question, true);
  return detail::weighting_loss(model.params, enc, model.config.alpha, model.config.tau, noise,
                                prefix_lengths, mode, grad);
}

}  // namespace cotsched
