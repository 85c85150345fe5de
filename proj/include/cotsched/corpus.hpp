#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cotsched {

// Half-open token range [start, end) of one reasoning step.
struct StepSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool operator==(const StepSpan&) const = default;
};

struct Question {
  std::string id;
  std::string question_text;
  std::string answer_text;
  std::vector<std::string> rationale_tokens;
  std::optional<std::vector<double>> token_logprobs;
  std::optional<std::vector<double>> token_weights;
  std::vector<StepSpan> step_spans;
  std::optional<std::vector<double>> embedding;

  std::size_t num_tokens() const { return rationale_tokens.size(); }
  std::size_t num_steps() const { return step_spans.size(); }

  bool operator==(const Question&) const = default;
};

struct Corpus {
  std::vector<Question> questions;
  std::size_t embedding_dim = 64;

  std::size_t size() const { return questions.size(); }
  // Index of the question with this id; throws ValidationError if absent.
  std::size_t index_of(std::string_view id) const;

  bool operator==(const Corpus&) const = default;
};

struct ParseOptions {
  bool lenient = false;          // ignore unknown keys instead of rejecting
  std::size_t embedding_dim = 64;  // used when no record carries an embedding
  std::uint64_t embed_seed = 0;
};

inline constexpr std::size_t kDefaultEmbeddingDim = 64;

Corpus parse_corpus(const std::filesystem::path& path,
                    const ParseOptions& options = {});
Corpus parse_corpus(std::istream& in, const ParseOptions& options = {});

// One JSON object per line, fields in canonical order. Optional fields are
// emitted only when present.
std::string serialize_corpus(const Corpus& corpus);

// Checks every Question and Corpus invariant. Throws ValidationError naming
// the offending field and id.
void validate_question(const Question& q);
void validate_corpus(const Corpus& corpus);

// A token ends a step when it contains a period that is not flanked by digits
// on both sides in the space-joined token string. Tokens after the last
// terminator form a final step.
std::vector<StepSpan> segment_steps(const std::vector<std::string>& tokens);

// Signed feature hashing of lowercased whitespace tokens, averaged and
// L2-normalized.
std::vector<double> embed_question(std::string_view text, std::size_t dim,
                                   std::uint64_t seed);

// Lowercased whitespace split, shared by embedding and the answer predictor.
std::vector<std::string> split_words(std::string_view text);

}  // namespace cotsched
