#include "cotsched/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "cotsched/error.hpp"
#include "cotsched/numeric.hpp"
#include "cotsched/rng.hpp"

namespace cotsched {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

std::size_t nearest(std::span<const double> point, const std::vector<std::vector<double>>& centroids) {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double dist = squared_distance(point, centroids[c]);
    if (dist < best_dist) {  // strict: ties keep the lower index
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

// Validates S and returns per-cluster counts.
std::vector<std::size_t> cluster_counts(const SelectionProblem& problem,
                                        std::span<const std::size_t> selected) {
  std::vector<std::size_t> counts(problem.num_clusters, 0);
  std::vector<char> seen(problem.candidates.size(), 0);
  for (std::size_t i : selected) {
    if (i >= problem.candidates.size())
      throw ValidationError("selection index " + std::to_string(i) + " is not a candidate");
    if (seen[i]) throw ValidationError("candidate \"" + problem.candidates[i].id + "\" selected twice");
    seen[i] = 1;
    const std::size_t k = problem.candidates[i].cluster;
    if (k >= problem.num_clusters)
      throw ValidationError("candidate \"" + problem.candidates[i].id + "\" has cluster out of range");
    ++counts[k];
  }
  return counts;
}

double diversity_step(std::size_t count) {
  return std::sqrt(static_cast<double>(count + 1)) - std::sqrt(static_cast<double>(count));
}

// Incremental state for greedy construction.
class GreedyState {
 public:
  explicit GreedyState(const SelectionProblem& problem)
      : problem_(problem), counts_(problem.num_clusters, 0), in_(problem.candidates.size(), 0) {}

  double gain_of(std::size_t x) const {
    const auto& c = problem_.candidates[x];
    return c.delta + problem_.beta * diversity_step(counts_[c.cluster]);
  }
  bool fits(std::size_t x) const { return cost_ + problem_.candidates[x].delta <= problem_.budget; }
  bool contains(std::size_t x) const { return in_[x] != 0; }

  void add(std::size_t x) {
    gain_ += gain_of(x);
    cost_ += problem_.candidates[x].delta;
    ++counts_[problem_.candidates[x].cluster];
    in_[x] = 1;
    members_.push_back(x);
  }

  // Best single feasible addition, first in input order on ties.
  std::optional<std::size_t> best_addition() const {
    std::optional<std::size_t> best;
    double best_gain = -1.0;
    for (std::size_t x = 0; x < in_.size(); ++x) {
      if (in_[x] || !fits(x)) continue;
      const double g = gain_of(x);
      if (g > best_gain) {
        best_gain = g;
        best = x;
      }
    }
    return best;
  }

  double gain() const { return gain_; }
  const std::vector<std::size_t>& members() const { return members_; }

 private:
  const SelectionProblem& problem_;
  std::vector<std::size_t> counts_;
  std::vector<char> in_;
  std::vector<std::size_t> members_;
  double gain_ = 0.0;
  double cost_ = 0.0;
};

Selection sorted(std::vector<std::size_t> s) {
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

std::size_t ClusterAssignment::cluster_of(std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return assignment[i];
  }
  throw ValidationError("no cluster assignment for \"" + std::string(id) + "\"");
}

std::vector<std::size_t> assign_nearest(const std::vector<std::vector<double>>& points,
                                        const std::vector<std::vector<double>>& centroids) {
  std::vector<std::size_t> out(points.size());
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = nearest(points[i], centroids);
  return out;
}

namespace serial {

std::vector<std::size_t> assign_nearest(const std::vector<std::vector<double>>& points,
                                        const std::vector<std::vector<double>>& centroids) {
  std::vector<std::size_t> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(nearest(p, centroids));
  return out;
}

}  // namespace serial

ClusterAssignment kmeans_cluster(const std::vector<std::string>& ids,
                                 const std::vector<std::vector<double>>& points, std::size_t k,
                                 std::uint64_t seed, std::size_t max_iterations) {
  if (points.empty()) throw ValidationError("kmeans_cluster: no embeddings");
  if (k == 0) throw ValidationError("kmeans_cluster: K must be at least 1");
  if (ids.size() != points.size()) throw ValidationError("kmeans_cluster: ids and points differ in length");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ValidationError("kmeans_cluster: embeddings differ in dimension");
  }

  Rng rng(seed);
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[rng.below(n)]);
  std::vector<double> dist2(n);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
      dist2[i] = best;
      total += best;
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target && dist2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);  // fewer distinct points than clusters
    }
    centroids.push_back(points[pick]);
  }

  std::vector<std::size_t> assignment = assign_nearest(points, centroids);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assignment[i]][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(sizes[c]);
    }
    auto next = assign_nearest(points, centroids);
    if (next == assignment) break;
    assignment = std::move(next);
  }

  return ClusterAssignment{k, ids, std::move(assignment), std::move(centroids)};
}

ClusterAssignment kmeans_cluster(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> points;
  for (const auto& q : corpus.questions) {
    ids.push_back(q.id);
    points.push_back(q.embedding ? *q.embedding
                                 : embed_question(q.question_text, corpus.embedding_dim, 0));
  }
  return kmeans_cluster(ids, points, k, seed);
}

namespace {

std::optional<Increment> increment_for(const DifficultyTable& table, std::size_t i, std::size_t c,
                                       std::size_t step_reduction) {
  const auto& steps = table.questions[i].steps;
  if (c > steps.size())
    throw ValidationError("question \"" + table.questions[i].id + "\": input-step count exceeds step count");
  if (c == 0) return std::nullopt;
  const std::size_t first = c > step_reduction ? c - step_reduction : 0;
  CompensatedSum s;
  for (std::size_t k = first; k < c; ++k) s.add(steps[k]);
  return Increment{i, s.value()};
}

void check_increment_args(std::span<const std::size_t> input_steps, const DifficultyTable& table,
                          std::size_t step_reduction) {
  if (input_steps.size() != table.questions.size())
    throw ValidationError("input-step counts do not match the difficulty table");
  if (step_reduction == 0) throw ValidationError("step reduction must be positive");
}

}  // namespace

std::vector<Increment> candidate_increments(std::span<const std::size_t> input_steps,
                                            const DifficultyTable& table,
                                            std::size_t step_reduction) {
  check_increment_args(input_steps, table, step_reduction);
  const auto n = static_cast<std::ptrdiff_t>(input_steps.size());
  std::vector<std::optional<Increment>> slots(input_steps.size());
  std::vector<char> bad(input_steps.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (input_steps[i] > table.questions[i].steps.size()) {
      bad[i] = 1;
      continue;
    }
    slots[i] = increment_for(table, i, input_steps[i], step_reduction);
  }
  std::vector<Increment> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (bad[i]) increment_for(table, i, input_steps[i], step_reduction);  // throws
    if (slots[i]) out.push_back(*slots[i]);
  }
  return out;
}

namespace serial {

std::vector<Increment> candidate_increments(std::span<const std::size_t> input_steps,
                                            const DifficultyTable& table,
                                            std::size_t step_reduction) {
  check_increment_args(input_steps, table, step_reduction);
  std::vector<Increment> out;
  for (std::size_t i = 0; i < input_steps.size(); ++i) {
    if (auto inc = increment_for(table, i, input_steps[i], step_reduction)) out.push_back(*inc);
  }
  return out;
}

}  // namespace serial

double selection_cost(const SelectionProblem& problem, std::span<const std::size_t> selected) {
  cluster_counts(problem, selected);
  CompensatedSum s;
  for (std::size_t i : selected) s.add(problem.candidates[i].delta);
  return s.value();
}

double value_of(const SelectionProblem& problem, std::span<const std::size_t> selected) {
  const auto counts = cluster_counts(problem, selected);
  double added = 0.0;
  for (std::size_t i : selected) added += problem.candidates[i].delta;
  double diversity = 0.0;
  for (std::size_t c : counts) diversity += std::sqrt(static_cast<double>(c));
  return -(problem.budget - added) + problem.beta * diversity;
}

double marginal_gain(const SelectionProblem& problem, std::span<const std::size_t> selected,
                     std::size_t x) {
  const auto counts = cluster_counts(problem, selected);
  if (x >= problem.candidates.size()) throw ValidationError("marginal_gain: x is not a candidate");
  if (std::find(selected.begin(), selected.end(), x) != selected.end())
    throw ValidationError("marginal_gain: candidate \"" + problem.candidates[x].id +
                          "\" is already selected");
  const auto& c = problem.candidates[x];
  if (c.cluster >= problem.num_clusters) throw ValidationError("marginal_gain: cluster out of range");
  return c.delta + problem.beta * diversity_step(counts[c.cluster]);
}

Selection select_ftgp(const SelectionProblem& problem, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ValidationError("select_ftgp: epsilon must lie in (0, 1/2)");
  if (!(problem.budget >= 0.0)) throw ValidationError("select_ftgp: budget must be nonnegative");
  const std::size_t n = problem.candidates.size();
  if (n == 0) return {};
  for (const auto& c : problem.candidates) {
    if (!(c.delta >= 0.0)) throw ValidationError("candidate \"" + c.id + "\" has negative increment");
    if (c.cluster >= problem.num_clusters) throw ValidationError("candidate \"" + c.id + "\" has cluster out of range");
  }

  GreedyState state(problem);
  std::vector<std::size_t> best;
  double best_gain = 0.0;
  auto consider = [&](const std::vector<std::size_t>& set, double gain) {
    if (gain > best_gain) {
      best_gain = gain;
      best = set;
    }
  };
  // Augment the current greedy set with its best feasible single addition.
  auto augment = [&] {
    if (auto x = state.best_addition()) {
      auto set = state.members();
      set.push_back(*x);
      consider(set, state.gain() + state.gain_of(*x));
    }
  };

  augment();  // best feasible singleton

  for (std::size_t x = 0; x < n; ++x) {
    if (problem.candidates[x].delta == 0.0) state.add(x);
  }
  consider(state.members(), state.gain());
  augment();

  // Density sweep over geometrically decreasing thresholds.
  double top_density = 0.0;
  double top_singleton = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    if (state.contains(x) || !state.fits(x)) continue;
    top_density = std::max(top_density, state.gain_of(x) / problem.candidates[x].delta);
    top_singleton = std::max(top_singleton, problem.candidates[x].delta + problem.beta);
  }
  if (top_density > 0.0) {
    const double floor = epsilon * top_singleton / problem.budget;
    for (double theta = top_density; theta >= floor; theta *= 1.0 - epsilon) {
      for (std::size_t x = 0; x < n; ++x) {
        if (state.contains(x) || !state.fits(x)) continue;
        if (state.gain_of(x) / problem.candidates[x].delta >= theta) {
          state.add(x);
          consider(state.members(), state.gain());
          augment();
        }
      }
    }
  }

  // Gains are nonnegative, so any remaining feasible item can only help.
  for (std::size_t x = 0; x < n; ++x) {
    if (!state.contains(x) && state.fits(x)) state.add(x);
  }
  consider(state.members(), state.gain());

  return sorted(best);
}

Selection select_bruteforce(const SelectionProblem& problem) {
  const std::size_t n = problem.candidates.size();
  if (n > kBruteForceLimit)
    throw ValidationError("select_bruteforce: " + std::to_string(n) + " candidates exceed the limit of " +
                          std::to_string(kBruteForceLimit));
  for (const auto& c : problem.candidates) {
    if (c.cluster >= problem.num_clusters) throw ValidationError("candidate \"" + c.id + "\" has cluster out of range");
  }

  auto id_set = [&](std::uint32_t mask) {
    std::vector<std::string_view> out;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) out.push_back(problem.candidates[i].id);
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  std::uint32_t best_mask = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> counts(problem.num_clusters);
  for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
    double cost = 0.0;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) {
        cost += problem.candidates[i].delta;
        ++counts[problem.candidates[i].cluster];
      }
    }
    if (cost > problem.budget) continue;
    double diversity = 0.0;
    for (std::size_t c : counts) diversity += std::sqrt(static_cast<double>(c));
    const double value = cost - problem.budget + problem.beta * diversity;
    const double tol = 1e-12 * std::max(1.0, std::abs(value));
    if (value > best_value + tol ||
        (std::abs(value - best_value) <= tol && id_set(mask) < id_set(best_mask))) {
      best_value = std::max(value, best_value);
      best_mask = mask;
    }
  }
  Selection out;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask >> i & 1U) out.push_back(i);
  }
  return out;
}

std::vector<std::string> selection_ids(const SelectionProblem& problem,
                                       std::span<const std::size_t> selected) {
  std::vector<std::string> out;
  for (std::size_t i : selected) out.push_back(problem.candidates.at(i).id);
  return out;
}

}  // namespace cotsched
