// Regenerates the bundled corpora under data/.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cotsched/pipeline.hpp"
#include "cotsched/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write the bundled synthetic corpora"};
  std::string out_dir = "data";
  std::uint64_t seed = 2024;
  std::size_t count = 50;
  app.add_option("--out", out_dir, "Directory to write into");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--count", count, "Questions in the arithmetic corpus");
  CLI11_PARSE(app, argc, argv);

  auto corpus = cotsched::make_synthetic_corpus(count, seed);
  // Embeddings are recomputed on load, so the file stays compact.
  for (auto& q : corpus.questions) q.embedding.reset();
  cotsched::write_atomic(std::filesystem::path(out_dir) / "synthetic_corpus.jsonl",
                         cotsched::serialize_corpus(corpus));

  auto keypoints = cotsched::make_keypoint_corpus(120, 8, seed);
  for (auto& q : keypoints.corpus.questions) q.embedding.reset();
  cotsched::write_atomic(std::filesystem::path(out_dir) / "keypoint_corpus.jsonl",
                         cotsched::serialize_corpus(keypoints.corpus));
  std::cout << "wrote " << count << " + 120 questions to " << out_dir << "\n";
  return 0;
}
