// Times the OpenMP kernels against their serial references.

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "cotsched/difficulty.hpp"
#include "cotsched/loss_shaping.hpp"
#include "cotsched/mask_weighting.hpp"
#include "cotsched/rng.hpp"
#include "cotsched/selection.hpp"
#include "cotsched/synthetic.hpp"

namespace {

double millis(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main() {
  using namespace cotsched;
  std::printf("threads: %d\n", omp_get_max_threads());

  const Corpus corpus = make_synthetic_corpus(4000, 11);
  const auto weights = default_weights(corpus);
  report("difficulty_table", millis([&] { serial::compute_difficulty_table(corpus, weights); }, 5),
         millis([&] { compute_difficulty_table(corpus, weights); }, 5));

  std::vector<std::vector<double>> points;
  for (const auto& q : corpus.questions) points.push_back(*q.embedding);
  std::vector<std::vector<double>> centroids(points.begin(), points.begin() + 16);
  report("assign_nearest", millis([&] { serial::assign_nearest(points, centroids); }, 5),
         millis([&] { assign_nearest(points, centroids); }, 5));

  const auto table = compute_difficulty_table(corpus, weights);
  std::vector<std::size_t> c;
  for (const auto& q : table.questions) c.push_back(q.steps.size());
  report("candidate_increments", millis([&] { serial::candidate_increments(c, table, 1); }, 20),
         millis([&] { candidate_increments(c, table, 1); }, 20));

  std::vector<LossSpec> specs;
  std::vector<std::vector<double>> logprobs;
  for (const auto& q : corpus.questions) {
    specs.push_back(shape_stage_loss(q, 0, 0));
    logprobs.push_back(*q.token_logprobs);
  }
  report("evaluate_losses", millis([&] { serial::evaluate_losses(specs, logprobs); }, 20),
         millis([&] { evaluate_losses(specs, logprobs); }, 20));

  WeightingConfig wc;
  wc.seed = 3;
  const auto model = init_model(corpus, wc);
  report("corpus_weights", millis([&] { serial::corpus_weights(model, corpus); }, 2),
         millis([&] { corpus_weights(model, corpus); }, 2));
  return 0;
}
