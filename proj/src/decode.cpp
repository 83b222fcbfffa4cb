#include "hibrids/decode.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace hibrids {

std::vector<int> banned_next_tokens(std::span<const int> prefix, int n) {
    std::vector<int> banned;
    if (n <= 0 || prefix.size() + 1 < static_cast<std::size_t>(n)) return banned;
    const std::size_t k = static_cast<std::size_t>(n) - 1;
    const auto tail = prefix.subspan(prefix.size() - k);
    for (std::size_t start = 0; start + k < prefix.size(); ++start) {
        if (std::equal(tail.begin(), tail.end(), prefix.begin() + static_cast<std::ptrdiff_t>(start))) {
            banned.push_back(prefix[start + k]);
        }
    }
    std::sort(banned.begin(), banned.end());
    banned.erase(std::unique(banned.begin(), banned.end()), banned.end());
    return banned;
}

bool has_repeated_ngram(std::span<const int> tokens, int n) {
    if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return false;
    std::set<std::vector<int>> seen;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::vector<int> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                              tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
        if (!seen.insert(std::move(gram)).second) return true;
    }
    return false;
}

namespace {

struct Candidate {
    double log_prob;
    std::size_t beam;
    int token;
};

double normalized(const Hypothesis& h) {
    const std::size_t len = h.tokens.size() + (h.finished ? 1 : 0);
    return len == 0 ? h.log_prob : h.log_prob / static_cast<double>(len);
}

}  // namespace

Hypothesis decode(const Model& model, const StructureTree& tree, std::span<const int> source,
                  const DecodeOptions& options) {
    const int beam = std::max(options.beam, 1);
    const EncoderState enc = model.encode(tree, source);

    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> done;

    for (int step = 0; step < options.max_len && !live.empty(); ++step) {
        std::vector<Candidate> candidates;
        for (std::size_t b = 0; b < live.size(); ++b) {
            std::vector<int> input{Vocabulary::kBos};
            input.insert(input.end(), live[b].tokens.begin(), live[b].tokens.end());
            const Eigen::MatrixXd logits = model.decode_logits(enc, input);
            const Eigen::MatrixXd logp = log_softmax_rows(logits.bottomRows(1));
            const auto banned = banned_next_tokens(live[b].tokens, options.no_repeat_ngram);
            for (int tok = 0; tok < logp.cols(); ++tok) {
                if (tok == Vocabulary::kPad || tok == Vocabulary::kBos || tok == Vocabulary::kUnk) continue;
                if (std::binary_search(banned.begin(), banned.end(), tok)) continue;
                candidates.push_back({live[b].log_prob + logp(0, tok), b, tok});
            }
        }
        std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            return std::tie(b.log_prob, a.beam, a.token) < std::tie(a.log_prob, b.beam, b.token);
        });

        // every finished hypothesis permanently takes one beam slot
        const std::size_t width = static_cast<std::size_t>(beam) - done.size();
        std::vector<Hypothesis> next;
        for (std::size_t k = 0; k < candidates.size() && k < width; ++k) {
            const auto& c = candidates[k];
            Hypothesis h;
            h.tokens = live[c.beam].tokens;
            h.log_prob = c.log_prob;
            if (c.token == Vocabulary::kEos) {
                h.finished = true;
                h.score = normalized(h);
                done.push_back(std::move(h));
            } else {
                h.tokens.push_back(c.token);
                h.score = normalized(h);
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }

    // length cap reached: unfinished hypotheses compete as they are
    for (auto& h : live) {
        h.score = normalized(h);
        done.push_back(std::move(h));
    }
    if (done.empty()) return Hypothesis{};
    auto best = std::max_element(done.begin(), done.end(),
                                 [](const Hypothesis& a, const Hypothesis& b) { return a.score < b.score; });
    return *best;
}

double sequence_log_prob(const Model& model, const StructureTree& tree, std::span<const int> source,
                         std::span<const int> target) {
    std::vector<int> input{Vocabulary::kBos};
    input.insert(input.end(), target.begin(), target.end());
    std::vector<int> gold(target.begin(), target.end());
    gold.push_back(Vocabulary::kEos);
    const Eigen::MatrixXd logp = log_softmax_rows(model.forward(tree, source, input));
    double sum = 0.0;
    for (std::size_t t = 0; t < gold.size(); ++t) sum += logp(static_cast<Eigen::Index>(t), gold[t]);
    return sum;
}

}  // namespace hibrids
