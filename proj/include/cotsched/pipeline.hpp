#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cotsched/corpus.hpp"
#include "cotsched/difficulty.hpp"
#include "cotsched/loss_shaping.hpp"
#include "cotsched/mask_weighting.hpp"
#include "cotsched/schedule.hpp"
#include "cotsched/selection.hpp"

namespace cotsched {

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path out = "out";
  bool lenient = false;
  std::optional<std::uint64_t> synthetic_logprobs;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t embedding_dim = kDefaultEmbeddingDim;

  // token weighting
  double alpha = 0.5;
  double tau = 1.0;
  double weigh_learning_rate = 0.05;
  std::size_t prefix_samples = 4;
  std::size_t weigh_epochs = 200;
  std::size_t batch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  double gradient_clip = 5.0;
  std::size_t predictor_warmup = 50;

  // schedule
  std::size_t epochs = 10;         // student epochs N_e
  std::size_t terminal_stage = 0;  // T; 0 means epochs / 2
  double p = 0.5;
  double c0_fraction = 0.3;
  std::size_t step_reduction = 1;

  // selection
  std::size_t clusters = 5;
  double beta = 12.0;
  double epsilon = 0.1;

  // student simulation
  bool simulate = false;
  double student_learning_rate = 0.5;

  std::size_t resolved_terminal_stage() const;
  void validate() const;
};

// `key = value` lines; '#' starts a comment; [section] headers are ignored.
// Unknown keys are a usage error.
PipelineConfig load_config(const std::filesystem::path& path);
void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value);

// Artifact file names inside the output directory.
namespace artifact {
inline constexpr const char* kWeights = "weights.jsonl";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kDifficulty = "difficulty.jsonl";
inline constexpr const char* kClusters = "clusters.json";
inline constexpr const char* kSchedule = "schedule.json";
inline constexpr const char* kLossSpecs = "loss_specs.jsonl";
inline constexpr const char* kSimulation = "simulation.json";
}  // namespace artifact

// Writes via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

Corpus load_pipeline_corpus(const PipelineConfig& config);

std::string weights_to_jsonl(const Corpus& corpus, const std::vector<std::vector<double>>& weights);
std::vector<std::vector<double>> weights_from_jsonl(const std::string& text, const Corpus& corpus);
std::string difficulty_to_jsonl(const DifficultyTable& table);
DifficultyTable difficulty_from_jsonl(const std::string& text);
std::string clusters_to_json(const ClusterAssignment& clusters);
ClusterAssignment clusters_from_json(const std::string& text);

// One function per pipeline stage; each reads its inputs from `config.out`
// (or the corpus) and writes its artifact before returning.
void run_weigh(const PipelineConfig& config);
void run_assess(const PipelineConfig& config);
void run_cluster(const PipelineConfig& config);
void run_schedule(const PipelineConfig& config);
void run_shape_loss(const PipelineConfig& config);
void run_simulate(const PipelineConfig& config);
void run_validate(const PipelineConfig& config);

// weigh -> assess -> cluster -> schedule -> shape-loss (-> simulate).
void run_pipeline(const PipelineConfig& config);

WeightingConfig weighting_config(const PipelineConfig& config);
ScheduleConfig schedule_config(const PipelineConfig& config);

}  // namespace cotsched
