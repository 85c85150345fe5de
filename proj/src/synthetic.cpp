#include "cotsched/synthetic.hpp"

#include <array>
#include <string>

#include "cotsched/difficulty.hpp"
#include "cotsched/rng.hpp"

namespace cotsched {

namespace {

template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& items) {
  return items[rng.below(N)];
}

void append(std::vector<std::string>& tokens, std::initializer_list<std::string> words) {
  tokens.insert(tokens.end(), words.begin(), words.end());
}

}  // namespace

Corpus make_synthetic_corpus(std::size_t count, std::uint64_t seed) {
  static const std::array<std::string, 6> kNames = {"tom", "ana", "li", "sam", "maya", "omar"};
  static const std::array<std::string, 5> kThings = {"apples", "books", "coins", "stamps", "marbles"};
  Rng rng(seed);
  Corpus corpus;
  corpus.embedding_dim = kDefaultEmbeddingDim;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& name = pick(rng, kNames);
    const auto& thing = pick(rng, kThings);
    const int a = 2 + static_cast<int>(rng.below(8));
    const int b = 1 + static_cast<int>(rng.below(5));
    const int kind = static_cast<int>(rng.below(3));

    Question q;
    q.id = "q" + std::to_string(i + 1);
    std::vector<std::string>& r = q.rationale_tokens;
    int answer = 0;
    if (kind == 0) {
      answer = a + b;
      q.question_text = name + " has " + std::to_string(a) + " " + thing + " and gets " + std::to_string(b) +
                        " more . how many " + thing + " now ?";
      append(r, {name, "starts", "with", std::to_string(a), thing, "."});
      append(r, {"then", name, "gets", std::to_string(b), "more", "."});
      append(r, {"so", std::to_string(a), "+", std::to_string(b), "=", std::to_string(answer), "."});
    } else if (kind == 1) {
      answer = a > b ? a - b : b - a;
      const int hi = std::max(a, b), lo = std::min(a, b);
      q.question_text = name + " had " + std::to_string(hi) + " " + thing + " and gave away " +
                        std::to_string(lo) + " . how many are left ?";
      append(r, {name, "had", std::to_string(hi), thing, "."});
      append(r, {name, "gave", "away", std::to_string(lo), "of", "them", "."});
      append(r, {"so", std::to_string(hi), "-", std::to_string(lo), "=", std::to_string(answer), "."});
    } else {
      answer = a * b;
      q.question_text = "each box holds " + std::to_string(a) + " " + thing + " . " + name + " has " +
                        std::to_string(b) + " boxes . how many " + thing + " in total ?";
      append(r, {"one", "box", "holds", std::to_string(a), thing, "."});
      append(r, {"there", "are", std::to_string(b), "boxes", "."});
      append(r, {"so", std::to_string(a), "*", std::to_string(b), "=", std::to_string(answer), "."});
      if (rng.below(2) == 0) append(r, {"that", "is", "about", std::to_string(answer) + ".0", "each", "time", "."});
    }
    if (rng.below(2) == 0) append(r, {"we", "can", "double", "check", "the", "arithmetic", "."});
    append(r, {"the", "answer", "is", std::to_string(answer)});
    q.answer_text = std::to_string(answer);
    q.step_spans = segment_steps(q.rationale_tokens);
    q.embedding = embed_question(q.question_text, corpus.embedding_dim, 0);
    corpus.questions.push_back(std::move(q));
  }
  fill_synthetic_logprobs(corpus, sub_seed(seed, "logprobs"));
  return corpus;
}

KeypointCorpus make_keypoint_corpus(std::size_t count, std::size_t filler_per_question, std::uint64_t seed) {
  static const std::array<std::string, 3> kFirst = {"x0", "x1", "x2"};
  static const std::array<std::string, 3> kSecond = {"y0", "y1", "y2"};
  static const std::array<std::string, 16> kFiller = {"the", "so", "we", "then", "it", "is", "a", "of",
                                                      "and", "that", "this", "now", "here", "just", "very", "well"};
  Rng rng(seed);
  KeypointCorpus out;
  out.corpus.embedding_dim = kDefaultEmbeddingDim;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = filler_per_question + 2;
    std::vector<std::string> tokens;
    for (std::size_t j = 0; j < filler_per_question; ++j) tokens.push_back(pick(rng, kFiller));
    const auto& first = pick(rng, kFirst);
    const auto& second = pick(rng, kSecond);
    // Insert the keypoints at random positions, first before second.
    std::size_t p1 = rng.below(n - 1);
    std::size_t p2 = p1 + 1 + rng.below(n - 1 - p1);
    std::vector<bool> key(n, false);
    std::vector<std::string> rationale;
    std::size_t f = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == p1) {
        rationale.push_back(first);
        key[j] = true;
      } else if (j == p2) {
        rationale.push_back(second);
        key[j] = true;
      } else {
        rationale.push_back(tokens[f++]);
      }
    }
    Question q;
    q.id = "k" + std::to_string(i + 1);
    q.question_text = "what is the code ?";
    q.answer_text = first + second;
    q.rationale_tokens = std::move(rationale);
    q.step_spans = {StepSpan{0, n}};
    q.embedding = embed_question(q.question_text, out.corpus.embedding_dim, 0);
    out.corpus.questions.push_back(std::move(q));
    out.is_keypoint.push_back(std::move(key));
  }
  return out;
}

}  // namespace cotsched
