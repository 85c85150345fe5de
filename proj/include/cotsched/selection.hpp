#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotsched/difficulty.hpp"

namespace cotsched {

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::string> ids;                 // input order
  std::vector<std::size_t> assignment;          // aligned to ids
  std::vector<std::vector<double>> centroids;   // k rows

  std::size_t cluster_of(std::string_view id) const;
};

// Lloyd's algorithm from a seeded k-means++ start. Stops when assignments are
// stable or after `max_iterations`. Nearest-centroid ties go to the lowest
// cluster index.
ClusterAssignment kmeans_cluster(const std::vector<std::string>& ids,
                                 const std::vector<std::vector<double>>& points, std::size_t k,
                                 std::uint64_t seed, std::size_t max_iterations = 100);

ClusterAssignment kmeans_cluster(const Corpus& corpus, std::size_t k, std::uint64_t seed);

// Index of the nearest centroid for every point.
std::vector<std::size_t> assign_nearest(const std::vector<std::vector<double>>& points,
                                        const std::vector<std::vector<double>>& centroids);
namespace serial {
std::vector<std::size_t> assign_nearest(const std::vector<std::vector<double>>& points,
                                        const std::vector<std::vector<double>>& centroids);
}

struct Increment {
  std::size_t question = 0;  // index into the difficulty table
  double delta = 0.0;
  bool operator==(const Increment&) const = default;
};

// Difficulty added to each question if its input-step count drops by
// `step_reduction` (clamped at zero). Exhausted questions are omitted.
std::vector<Increment> candidate_increments(std::span<const std::size_t> input_steps,
                                            const DifficultyTable& table,
                                            std::size_t step_reduction);
namespace serial {
std::vector<Increment> candidate_increments(std::span<const std::size_t> input_steps,
                                            const DifficultyTable& table,
                                            std::size_t step_reduction);
}

struct Candidate {
  std::string id;
  double delta = 0.0;
  std::size_t cluster = 0;
};

struct SelectionProblem {
  std::vector<Candidate> candidates;
  double budget = 0.0;
  std::size_t num_clusters = 1;
  double beta = 0.0;
};

// Selected sets are ascending candidate indices.
using Selection = std::vector<std::size_t>;

// F(S) = (sum of deltas - budget) + beta * sum_k sqrt(|C_k & S|)
double value_of(const SelectionProblem& problem, std::span<const std::size_t> selected);
double marginal_gain(const SelectionProblem& problem, std::span<const std::size_t> selected,
                     std::size_t x);
double selection_cost(const SelectionProblem& problem, std::span<const std::size_t> selected);

// Threshold greedy under the knapsack constraint, with best-single-item
// augmentation. Always feasible.
Selection select_ftgp(const SelectionProblem& problem, double epsilon = 0.1);

inline constexpr std::size_t kBruteForceLimit = 22;

// Exhaustive optimum. Ties go to the lexicographically smallest id set.
Selection select_bruteforce(const SelectionProblem& problem);

std::vector<std::string> selection_ids(const SelectionProblem& problem,
                                       std::span<const std::size_t> selected);

}  // namespace cotsched
