#include "cotsched/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "cotsched/error.hpp"
#include "cotsched/rng.hpp"

namespace cotsched {

using nlohmann::json;
using nlohmann::ordered_json;

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw UsageError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(path.string() + " not found; run the stage that produces it first");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

WeightingConfig weighting_config(const PipelineConfig& c) {
  WeightingConfig w;
  w.alpha = c.alpha;
  w.tau = c.tau;
  w.learning_rate = c.weigh_learning_rate;
  w.prefix_samples = c.prefix_samples;
  w.epochs = c.weigh_epochs;
  w.batch_size = c.batch_size;
  w.embed_dim = c.embed_dim;
  w.hidden_dim = c.hidden_dim;
  w.gradient_clip = c.gradient_clip;
  w.predictor_warmup = c.predictor_warmup;
  w.seed = sub_seed(c.seed, "weigh");
  return w;
}

ScheduleConfig schedule_config(const PipelineConfig& c) {
  return {c.epochs, c.step_reduction, c.beta, c.epsilon};
}

Corpus load_pipeline_corpus(const PipelineConfig& config) {
  if (config.corpus.empty()) throw UsageError("no corpus path given");
  if (!std::filesystem::exists(config.corpus)) throw UsageError("corpus not found: " + config.corpus.string());
  ParseOptions opts;
  opts.lenient = config.lenient;
  opts.embedding_dim = config.embedding_dim;
  Corpus corpus = parse_corpus(config.corpus, opts);
  if (config.synthetic_logprobs) {
    Corpus filled = corpus;
    fill_synthetic_logprobs(filled, *config.synthetic_logprobs);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (!corpus.questions[i].token_logprobs) corpus.questions[i].token_logprobs = filled.questions[i].token_logprobs;
    }
  }
  return corpus;
}

std::string weights_to_jsonl(const Corpus& corpus, const std::vector<std::vector<double>>& weights) {
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ordered_json rec;
    rec["id"] = corpus.questions[i].id;
    rec["weights"] = weights[i];
    out += rec.dump() + "\n";
  }
  return out;
}

std::vector<std::vector<double>> weights_from_jsonl(const std::string& text, const Corpus& corpus) {
  std::vector<std::vector<double>> out(corpus.size());
  std::vector<char> seen(corpus.size(), 0);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string id;
    std::vector<double> w;
    try {
      const auto rec = json::parse(line);
      id = rec.at("id").get<std::string>();
      w = rec.at("weights").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("weights: ") + e.what(), lineno);
    }
    const std::size_t i = corpus.index_of(id);
    if (w.size() != corpus.questions[i].num_tokens())
      throw ValidationError("weights for \"" + id + "\" do not match its token count");
    for (double x : w) {
      if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("weights for \"" + id + "\" must lie in [0,1]");
    }
    out[i] = std::move(w);
    seen[i] = 1;
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!seen[i]) throw ValidationError("weights file has no entry for \"" + corpus.questions[i].id + "\"");
  }
  return out;
}

std::string difficulty_to_jsonl(const DifficultyTable& table) {
  std::string out;
  for (const auto& q : table.questions) {
    ordered_json rec;
    rec["id"] = q.id;
    rec["step_difficulties"] = q.steps;
    rec["total"] = q.total;
    out += rec.dump() + "\n";
  }
  ordered_json summary;
  summary["B"] = table.total;
  out += summary.dump() + "\n";
  return out;
}

DifficultyTable difficulty_from_jsonl(const std::string& text) {
  DifficultyTable table;
  bool have_total = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto rec = json::parse(line);
      if (rec.contains("B")) {
        table.total = rec.at("B").get<double>();
        have_total = true;
        continue;
      }
      QuestionDifficulty q;
      q.id = rec.at("id").get<std::string>();
      q.steps = rec.at("step_difficulties").get<std::vector<double>>();
      q.total = rec.at("total").get<double>();
      table.questions.push_back(std::move(q));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("difficulty: ") + e.what(), lineno);
  }
  if (!have_total) throw ParseError("difficulty file lacks the trailing {\"B\": ...} record");
  return table;
}

std::string clusters_to_json(const ClusterAssignment& clusters) {
  ordered_json doc;
  doc["K"] = clusters.k;
  ordered_json assignment = ordered_json::object();
  for (std::size_t i = 0; i < clusters.ids.size(); ++i) assignment[clusters.ids[i]] = clusters.assignment[i];
  doc["ids"] = clusters.ids;
  doc["assignment"] = std::move(assignment);
  doc["centroids"] = clusters.centroids;
  return doc.dump(2) + "\n";
}

ClusterAssignment clusters_from_json(const std::string& text) {
  try {
    const auto doc = json::parse(text);
    ClusterAssignment c;
    c.k = doc.at("K").get<std::size_t>();
    c.ids = doc.at("ids").get<std::vector<std::string>>();
    for (const auto& id : c.ids) {
      const auto k = doc.at("assignment").at(id).get<std::size_t>();
      if (k >= c.k) throw ParseError("cluster index out of range for \"" + id + "\"");
      c.assignment.push_back(k);
    }
    c.centroids = doc.at("centroids").get<std::vector<std::vector<double>>>();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("clusters: ") + e.what());
  }
}

namespace {

std::filesystem::path out_path(const PipelineConfig& c, const char* name) { return c.out / name; }

std::vector<std::vector<double>> load_weights(const PipelineConfig& config, const Corpus& corpus) {
  return weights_from_jsonl(read_file(out_path(config, artifact::kWeights)), corpus);
}

Schedule load_schedule(const PipelineConfig& config) {
  const auto text = read_file(out_path(config, artifact::kSchedule));
  try {
    return schedule_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("schedule: ") + e.what());
  }
}

template <typename Fn>
void stage(const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const NumericError& e) {
    throw NumericError(std::string("stage ") + name + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(std::string("stage ") + name + ": " + e.what());
  } catch (const Error& e) {
    throw ValidationError(std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

void run_validate(const PipelineConfig& config) {
  stage("validate", [&] { load_pipeline_corpus(config); });
}

void run_weigh(const PipelineConfig& config) {
  stage("weigh", [&] {
    const Corpus corpus = load_pipeline_corpus(config);
    const auto result = train_weighting(corpus, weighting_config(config));
    write_atomic(out_path(config, artifact::kModel), model_to_json(result.model).dump() + "\n");
    write_atomic(out_path(config, artifact::kWeights), weights_to_jsonl(corpus, result.weights));
  });
}

void run_assess(const PipelineConfig& config) {
  stage("assess", [&] {
    const Corpus corpus = load_pipeline_corpus(config);
    const auto weights = std::filesystem::exists(out_path(config, artifact::kWeights))
                             ? load_weights(config, corpus)
                             : default_weights(corpus);
    const auto table = compute_difficulty_table(corpus, weights);
    write_atomic(out_path(config, artifact::kDifficulty), difficulty_to_jsonl(table));
  });
}

void run_cluster(const PipelineConfig& config) {
  stage("cluster", [&] {
    const Corpus corpus = load_pipeline_corpus(config);
    const auto clusters = kmeans_cluster(corpus, config.clusters, sub_seed(config.seed, "cluster"));
    write_atomic(out_path(config, artifact::kClusters), clusters_to_json(clusters));
  });
}

void run_schedule(const PipelineConfig& config) {
  stage("schedule", [&] {
    const auto table = difficulty_from_jsonl(read_file(out_path(config, artifact::kDifficulty)));
    const auto clusters = clusters_from_json(read_file(out_path(config, artifact::kClusters)));
    const double b = table.total;
    const auto curve = make_budget_curve(b, config.c0_fraction * b, config.p, config.resolved_terminal_stage());
    const auto schedule = plan_full_schedule(table, clusters, curve, schedule_config(config));
    write_atomic(out_path(config, artifact::kSchedule), schedule_to_json(schedule).dump(2) + "\n");
  });
}

void run_shape_loss(const PipelineConfig& config) {
  stage("shape-loss", [&] {
    const Corpus corpus = load_pipeline_corpus(config);
    const auto weights = load_weights(config, corpus);
    const auto schedule = load_schedule(config);
    std::string out;
    for (const auto& spec : shape_schedule(corpus, schedule, &weights)) out += loss_spec_to_json(spec).dump() + "\n";
    write_atomic(out_path(config, artifact::kLossSpecs), out);
  });
}

void run_simulate(const PipelineConfig& config) {
  stage("simulate", [&] {
    const Corpus corpus = load_pipeline_corpus(config);
    const auto weights = load_weights(config, corpus);
    const auto schedule = load_schedule(config);
    StudentConfig sc{config.epochs, config.student_learning_rate, sub_seed(config.seed, "simulate")};
    const auto trace = simulate_student(corpus, schedule, &weights, sc);
    write_atomic(out_path(config, artifact::kSimulation), trace_to_json(trace, corpus).dump(2) + "\n");
  });
}

void run_pipeline(const PipelineConfig& config) {
  config.validate();
  run_weigh(config);
  run_assess(config);
  run_cluster(config);
  run_schedule(config);
  run_shape_loss(config);
  if (config.simulate) run_simulate(config);
}

}  // namespace cotsched
