#include "cotsched/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "cotsched/error.hpp"
#include "cotsched/rng.hpp"
#include "json.hpp"

namespace cotsched {

using nlohmann::json;

namespace {

const std::set<std::string, std::less<>> kKnownKeys = {
    "id",           "question",       "answer",     "rationale_tokens",
    "token_logprobs", "token_weights", "step_spans", "embedding"};

std::string require_string(const json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end()) throw std::invalid_argument(std::string("missing key \"") + key + "\"");
  if (!it->is_string()) throw std::invalid_argument(std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::optional<std::vector<double>> optional_reals(const json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw std::invalid_argument(std::string("\"") + key + "\" must be an array");
  std::vector<double> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number()) throw std::invalid_argument(std::string("\"") + key + "\" must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

Question question_from_json(const json& rec, bool lenient) {
  if (!rec.is_object()) throw std::invalid_argument("record must be a JSON object");
  if (!lenient) {
    for (const auto& [key, _] : rec.items()) {
      if (!kKnownKeys.contains(key)) throw std::invalid_argument("unknown key \"" + key + "\"");
    }
  }
  Question q;
  q.id = require_string(rec, "id");
  q.question_text = require_string(rec, "question");
  q.answer_text = require_string(rec, "answer");

  auto toks = rec.find("rationale_tokens");
  if (toks == rec.end() || !toks->is_array())
    throw std::invalid_argument("\"rationale_tokens\" must be an array of strings");
  for (const auto& t : *toks) {
    if (!t.is_string()) throw std::invalid_argument("\"rationale_tokens\" must be an array of strings");
    q.rationale_tokens.push_back(t.get<std::string>());
  }
  q.token_logprobs = optional_reals(rec, "token_logprobs");
  q.token_weights = optional_reals(rec, "token_weights");
  q.embedding = optional_reals(rec, "embedding");

  if (auto spans = rec.find("step_spans"); spans != rec.end() && !spans->is_null()) {
    if (!spans->is_array()) throw std::invalid_argument("\"step_spans\" must be an array of [start,end]");
    for (const auto& s : *spans) {
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer() ||
          s[0].get<long long>() < 0 || s[1].get<long long>() < 0)
        throw std::invalid_argument("\"step_spans\" entries must be pairs of nonnegative integers");
      q.step_spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
  }
  return q;
}

json question_to_json(const Question& q) {
  json rec = json::object();
  rec["id"] = q.id;
  rec["question"] = q.question_text;
  rec["answer"] = q.answer_text;
  rec["rationale_tokens"] = q.rationale_tokens;
  if (q.token_logprobs) rec["token_logprobs"] = *q.token_logprobs;
  if (q.token_weights) rec["token_weights"] = *q.token_weights;
  json spans = json::array();
  for (const auto& s : q.step_spans) spans.push_back({s.start, s.end});
  rec["step_spans"] = std::move(spans);
  if (q.embedding) rec["embedding"] = *q.embedding;
  return rec;
}

[[noreturn]] void invalid(const Question& q, const std::string& field, const std::string& why) {
  throw ValidationError("question \"" + q.id + "\": " + field + ": " + why);
}

}  // namespace

std::size_t Corpus::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (questions[i].id == id) return i;
  }
  throw ValidationError("unknown question id \"" + std::string(id) + "\"");
}

void validate_question(const Question& q) {
  const std::size_t n = q.num_tokens();
  if (q.id.empty()) throw ValidationError("question with empty id");
  if (n == 0) invalid(q, "rationale_tokens", "rationale must have at least one token");
  if (q.step_spans.empty()) invalid(q, "step_spans", "rationale must have at least one step");
  std::size_t expect = 0;
  for (const auto& s : q.step_spans) {
    if (s.start != expect || s.end <= s.start)
      invalid(q, "step_spans", "spans must be non-empty, ordered and contiguous from 0");
    expect = s.end;
  }
  if (expect != n) invalid(q, "step_spans", "spans must cover exactly the rationale tokens");

  if (q.token_logprobs) {
    if (q.token_logprobs->size() != n)
      invalid(q, "token_logprobs", "length " + std::to_string(q.token_logprobs->size()) +
                                       " does not match token count " + std::to_string(n));
    for (double lp : *q.token_logprobs) {
      if (!(std::isfinite(lp) && lp <= 0.0)) invalid(q, "token_logprobs", "entries must be finite and <= 0");
    }
  }
  if (q.token_weights) {
    if (q.token_weights->size() != n)
      invalid(q, "token_weights", "length " + std::to_string(q.token_weights->size()) +
                                      " does not match token count " + std::to_string(n));
    for (double w : *q.token_weights) {
      if (!(w >= 0.0 && w <= 1.0)) invalid(q, "token_weights", "entries must lie in [0,1]");
    }
  }
  if (q.embedding) {
    for (double v : *q.embedding) {
      if (!std::isfinite(v)) invalid(q, "embedding", "entries must be finite");
    }
  }
}

void validate_corpus(const Corpus& corpus) {
  if (corpus.embedding_dim == 0) throw ValidationError("embedding_dim must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& q : corpus.questions) {
    validate_question(q);
    if (!seen.insert(q.id).second) throw ValidationError("duplicate question id \"" + q.id + "\"");
    if (q.embedding && q.embedding->size() != corpus.embedding_dim)
      invalid(q, "embedding", "dimension " + std::to_string(q.embedding->size()) +
                                  " differs from corpus dimension " +
                                  std::to_string(corpus.embedding_dim));
  }
}

Corpus parse_corpus(std::istream& in, const ParseOptions& options) {
  Corpus corpus;
  corpus.embedding_dim = options.embedding_dim;
  std::optional<std::size_t> supplied_dim;
  std::unordered_set<std::string> seen;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    Question q;
    try {
      q = question_from_json(json::parse(line), options.lenient);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!seen.insert(q.id).second) throw ValidationError("duplicate question id \"" + q.id + "\"");
    if (q.embedding) {
      if (!supplied_dim) supplied_dim = q.embedding->size();
      if (q.embedding->size() != *supplied_dim || q.embedding->empty())
        invalid(q, "embedding", "dimension mismatch across corpus");
    }
    corpus.questions.push_back(std::move(q));
  }
  if (supplied_dim) corpus.embedding_dim = *supplied_dim;

  for (auto& q : corpus.questions) {
    if (q.step_spans.empty() && !q.rationale_tokens.empty()) q.step_spans = segment_steps(q.rationale_tokens);
    if (!q.embedding) {
      const std::string& text = q.question_text.empty() ? q.id : q.question_text;
      q.embedding = embed_question(text, corpus.embedding_dim, options.embed_seed);
    }
  }
  validate_corpus(corpus);
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw UsageError("corpus not found: " + path.string());
  return parse_corpus(in, options);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& q : corpus.questions) {
    out += question_to_json(q).dump();
    out += '\n';
  }
  return out;
}

std::vector<StepSpan> segment_steps(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ValidationError("segment_steps: empty token sequence");
  std::string joined;
  std::vector<std::size_t> offset(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (j > 0) joined += ' ';
    offset[j] = joined.size();
    joined += tokens[j];
  }
  auto is_digit = [&](std::size_t pos) {
    return pos < joined.size() && std::isdigit(static_cast<unsigned char>(joined[pos]));
  };

  std::vector<StepSpan> spans;
  std::size_t start = 0;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    bool terminates = false;
    for (std::size_t k = 0; k < tokens[j].size() && !terminates; ++k) {
      if (tokens[j][k] != '.') continue;
      const std::size_t pos = offset[j] + k;
      const bool decimal = pos > 0 && is_digit(pos - 1) && is_digit(pos + 1);
      terminates = !decimal;
    }
    if (terminates) {
      spans.push_back({start, j + 1});
      start = j + 1;
    }
  }
  if (start < tokens.size()) spans.push_back({start, tokens.size()});
  return spans;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<double> embed_question(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ValidationError("embed_question: dim must be positive");
  const auto words = split_words(text);
  if (words.empty()) throw ValidationError("embed_question: empty text");
  std::vector<double> v(dim, 0.0);
  for (const auto& w : words) {
    const std::uint64_t h = fnv1a64(w, seed);
    const std::size_t bucket = static_cast<std::size_t>(h % dim);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[bucket] += sign;
  }
  double norm2 = 0.0;
  for (double& x : v) {
    x /= static_cast<double>(words.size());
    norm2 += x * x;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }
  return v;
}

}  // namespace cotsched
