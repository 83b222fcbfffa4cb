#pragma once

#include <span>
#include <vector>

#include "hibrids/model.hpp"

namespace hibrids {

struct DecodeOptions {
    int beam = 4;             // 1 = greedy
    int max_len = 64;         // generated tokens, EOS excluded
    int no_repeat_ngram = 0;  // 0 disables blocking
};

struct Hypothesis {
    std::vector<int> tokens;  // without BOS/EOS
    double log_prob = 0.0;    // includes the EOS step when finished
    double score = 0.0;       // log_prob / length, EOS counted
    bool finished = false;
};

/// Beam search over length-normalized log-probability. Each step keeps the
/// best candidates by total log-probability; a hypothesis that emits EOS
/// leaves the beam and permanently takes one of its slots, so beam 1 is
/// greedy decoding. Tokens that would complete an n-gram already present in
/// the hypothesis are never proposed.
Hypothesis decode(const Model& model, const StructureTree& tree, std::span<const int> source,
                  const DecodeOptions& options);

/// Tokens that must not follow `prefix` so that no n-gram repeats.
std::vector<int> banned_next_tokens(std::span<const int> prefix, int n);

bool has_repeated_ngram(std::span<const int> tokens, int n);

/// Total log-probability of `target` followed by EOS.
double sequence_log_prob(const Model& model, const StructureTree& tree, std::span<const int> source,
                         std::span<const int> target);

}  // namespace hibrids
