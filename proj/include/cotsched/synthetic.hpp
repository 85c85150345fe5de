#pragma once

#include <cstdint>
#include <vector>

#include "cotsched/corpus.hpp"

namespace cotsched {

// Small arithmetic word problems with step-structured rationales, seeded
// Beta(2,2) token logprobs and hashed question embeddings.
Corpus make_synthetic_corpus(std::size_t count, std::uint64_t seed);

struct KeypointCorpus {
  Corpus corpus;
  std::vector<std::vector<bool>> is_keypoint;  // aligned to rationale tokens
};

// Every rationale hides two keypoint tokens (one "x" symbol, one "y" symbol)
// among random filler words; the answer is the pair, so it is recoverable
// from the keypoints alone.
KeypointCorpus make_keypoint_corpus(std::size_t count, std::size_t filler_per_question,
                                    std::uint64_t seed);

}  // namespace cotsched
