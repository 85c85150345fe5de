#include <cmath>
#include <fstream>
#include <sstream>

#include "cotsched/corpus.hpp"
#include "cotsched/error.hpp"
#include "cotsched/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cotsched;

namespace {

Corpus parse_text(const std::string& text, ParseOptions options = {}) {
  std::istringstream in(text);
  return parse_corpus(in, options);
}

std::vector<std::string> words(const std::string& s) { return split_words(s); }

// Re-derives the span invariants without trusting segment_steps.
void require_cover(const std::vector<StepSpan>& spans, std::size_t n) {
  REQUIRE_FALSE(spans.empty());
  CHECK(spans.front().start == 0);
  CHECK(spans.back().end == n);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    CHECK(spans[i].start < spans[i].end);
    if (i > 0) CHECK(spans[i].start == spans[i - 1].end);
  }
}

const char* kTwoRecords =
    R"({"id":"a","question":"add two and three","answer":"5","rationale_tokens":["2","+","3","=","5","."]})"
    "\n"
    R"({"id":"b","question":"what is 1.5 times 2","answer":"3","rationale_tokens":["1.5","*","2","=","3","."],"token_logprobs":[-0.1,-0.2,-0.3,-0.4,-0.5,-0.6]})"
    "\n";

}  // namespace

TEST_CASE("parse keeps records in file order") {
  const Corpus c = parse_text(kTwoRecords);
  REQUIRE(c.size() == 2);
  CHECK(c.questions[0].id == "a");
  CHECK(c.questions[1].id == "b");
  CHECK(c.index_of("b") == 1);
  CHECK_THROWS_AS(c.index_of("zzz"), ValidationError);
  CHECK(c.questions[0].step_spans == std::vector<StepSpan>{{0, 6}});
  CHECK(c.questions[0].embedding->size() == kDefaultEmbeddingDim);
  CHECK_FALSE(c.questions[0].token_logprobs.has_value());
  CHECK(c.questions[1].token_logprobs->at(5) == doctest::Approx(-0.6));
}

TEST_CASE("logprob count mismatch names the record") {
  const std::string bad =
      R"({"id":"q9","question":"x","answer":"1","rationale_tokens":["a","."],"token_logprobs":[-0.1]})";
  try {
    parse_text(bad + "\n");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("q9") != std::string::npos);
    CHECK(std::string(e.what()).find("token_logprobs") != std::string::npos);
  }
}

TEST_CASE("positive logprob is rejected") {
  const std::string bad =
      R"({"id":"q1","question":"x","answer":"1","rationale_tokens":["a","."],"token_logprobs":[0.5,-0.1]})";
  CHECK_THROWS_AS(parse_text(bad + "\n"), ValidationError);
}

TEST_CASE("malformed input reports the line") {
  const std::string text = std::string(kTwoRecords) + "{not json}\n";
  try {
    parse_text(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.exit_code() == ExitCode::kValidation);
  }
}

TEST_CASE("structural violations") {
  auto rec = [](const std::string& extra) {
    return R"({"id":"q1","question":"x","answer":"1","rationale_tokens":["a","b","."])" + extra + "}\n";
  };
  SUBCASE("duplicate id") { CHECK_THROWS_AS(parse_text(rec("") + rec("")), ValidationError); }
  SUBCASE("gap in spans") { CHECK_THROWS_AS(parse_text(rec(R"(,"step_spans":[[0,1],[2,3]])")), ValidationError); }
  SUBCASE("spans stop short") { CHECK_THROWS_AS(parse_text(rec(R"(,"step_spans":[[0,2]])")), ValidationError); }
  SUBCASE("weight above one") {
    CHECK_THROWS_AS(parse_text(rec(R"(,"token_weights":[0.1,1.5,0.2])")), ValidationError);
  }
  SUBCASE("empty rationale") {
    CHECK_THROWS_AS(parse_text(R"({"id":"q1","question":"x","answer":"1","rationale_tokens":[]})"
                               "\n"),
                    ValidationError);
  }
  SUBCASE("unknown key is strict by default") {
    CHECK_THROWS(parse_text(rec(R"(,"extra":1)")));
    ParseOptions lenient;
    lenient.lenient = true;
    CHECK(parse_text(rec(R"(,"extra":1)"), lenient).size() == 1);
  }
  SUBCASE("mixed embedding dimensions") {
    CHECK_THROWS_AS(parse_text(rec(R"(,"embedding":[1,0])") +
                               R"({"id":"q2","question":"x","answer":"1","rationale_tokens":["a"],"embedding":[1,0,0]})"
                               "\n"),
                    ValidationError);
  }
}

TEST_CASE("missing file is a usage error") {
  CHECK_THROWS_AS(parse_corpus(std::filesystem::path("/nonexistent/corpus.jsonl")), UsageError);
}

TEST_CASE("serialize then parse round-trips") {
  const Corpus c = parse_corpus(std::filesystem::path(COTSCHED_DATA_DIR) / "synthetic_corpus.jsonl");
  REQUIRE(c.size() == 50);
  const Corpus again = parse_text(serialize_corpus(c));
  CHECK(again == c);
  CHECK(serialize_corpus(again) == serialize_corpus(c));
}

TEST_CASE("segment_steps examples") {
  CHECK(segment_steps(words("30 + 80 = 110 . Therefore 110 .")) == std::vector<StepSpan>{{0, 6}, {6, 9}});
  CHECK(segment_steps(words("3.5 cups needed .")) == std::vector<StepSpan>{{0, 4}});
  CHECK(segment_steps(words("done")) == std::vector<StepSpan>{{0, 1}});
  CHECK(segment_steps({"so", "x", ".", "then", "y"}) == std::vector<StepSpan>{{0, 3}, {3, 5}});
  CHECK_THROWS_AS(segment_steps({}), ValidationError);
}

TEST_CASE("segment_steps covers random token soups") {
  static const char* kPieces[] = {"1", "2.5", ".", "7.", ".3", "x", "so", "4", "a.b", "..", "9"};
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::string> tokens(1 + rng.below(20));
    for (auto& t : tokens) t = kPieces[rng.below(std::size(kPieces))];
    const auto spans = segment_steps(tokens);
    require_cover(spans, tokens.size());
    // A span may only end early on a token that carries a period.
    for (std::size_t i = 0; i + 1 < spans.size(); ++i)
      CHECK(tokens[spans[i].end - 1].find('.') != std::string::npos);
  }
}

TEST_CASE("embed_question is normalized and deterministic") {
  const auto a = embed_question("How many apples are left", 64, 3);
  CHECK(a == embed_question("How many apples are left", 64, 3));
  CHECK(a == embed_question("how   many apples ARE left", 64, 3));
  double n2 = 0.0;
  for (double x : a) n2 += x * x;
  CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(a != embed_question("How many apples are left", 64, 4));
  CHECK_THROWS_AS(embed_question("   ", 64, 0), ValidationError);
  CHECK_THROWS_AS(embed_question("x", 0, 0), ValidationError);
}

TEST_CASE("embed_question matches the frozen vector") {
  std::ifstream in(std::filesystem::path(COTSCHED_GOLDEN_DIR) / "embed_add_the_calories.json");
  REQUIRE(in);
  const auto golden = nlohmann::json::parse(in);
  const auto expected = golden.at("embedding").get<std::vector<double>>();
  const auto got = embed_question(golden.at("text").get<std::string>(), golden.at("dim").get<std::size_t>(),
                                  golden.at("seed").get<std::uint64_t>());
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}
