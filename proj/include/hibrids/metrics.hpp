#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hibrids/qshier.hpp"

namespace hibrids {

enum class RougeVariant { R1, R2, RL };

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Texts go through the shared tokenizer; no stemming or stopword removal.
RougeScore rouge(const std::string& candidate, const std::string& reference, RougeVariant variant);
RougeScore rouge_tokens(std::span<const std::string> candidate, std::span<const std::string> reference,
                        RougeVariant variant);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);
/// Single-reference BLEU with uniform 1..4-gram weights. A zero n-gram
/// precision is replaced by 1e-9 so the geometric mean stays defined.
double bleu4(const std::string& candidate, const std::string& reference);
double bleu4_tokens(std::span<const std::string> candidate, std::span<const std::string> reference);
inline constexpr double kBleuEpsilon = 1e-9;

struct HierScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct HierMatch {
    std::vector<int> mapping;  // generated pre-order id -> reference pre-order id
    struct Edge {
        int parent;  // generated ids
        int child;
        bool matched;
        double weight;
    };
    std::vector<Edge> edges;
};

/// Attachment-style score between QS hierarchies.
///
/// Each generated pair maps to the reference pair whose summary maximizes
/// ROUGE-1 F1 + ROUGE-2 F1 (ties: smallest reference pre-order id). A
/// generated parent->child edge matches when the mapped parent is an ancestor
/// (parent included) of the mapped child in the reference; its weight is the
/// mean of the four ROUGE-1/2 F1 scores of parent and child summaries against
/// their mapped counterparts. Precision sums weights over generated edges.
/// Recall credits each reference edge (p, c) with the best weight among
/// matches whose mapped child is c, over the number of reference edges.
/// Both sides edge-free scores 1; exactly one side edge-free scores 0.
HierScore hierarchy_f1(const QSHierarchy& generated, const QSHierarchy& reference, HierMatch* match = nullptr);

struct EditCountResult {
    int steps = 0;
    bool capped = false;
};

/// Minimum number of moves turning `generated` into `corrected`, where a move
/// re-attaches one pair (with its subtree) to its grandparent or to a sibling.
/// Pairs are identified by (question, summary) text; a dummy root joins the
/// top-level pairs. Child order is ignored. Bidirectional breadth-first search;
/// `capped` is set when `max_states` is exhausted.
EditCountResult edit_count(const QSHierarchy& generated, const QSHierarchy& corrected,
                           std::size_t max_states = 4'000'000);

struct SampleReport {
    std::string id;
    HierScore hier;
    RougeScore rouge1, rouge2, rougeL;  // summaries, concatenated in pre-order
    double bleu4 = 0.0;                 // questions, concatenated in pre-order
    std::optional<EditCountResult> edits;
};

struct RunReport {
    std::vector<SampleReport> samples;
    SampleReport aggregate;  // macro means over samples
    std::optional<double> mean_edit_count;
};

SampleReport evaluate_sample(const std::string& id, const QSHierarchy& generated, const QSHierarchy& reference,
                             const QSHierarchy* corrected = nullptr);

/// Samples are matched by id; any id present on one side only is an InputError
/// that lists every offending id.
RunReport evaluate_run(const std::map<std::string, QSHierarchy>& generated,
                       const std::map<std::string, QSHierarchy>& reference,
                       const std::map<std::string, QSHierarchy>* corrected = nullptr);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);
std::string report_table(const RunReport& report);
std::string report_csv(const RunReport& report);

/// `{"samples": [{"id": str, "hierarchy": {...}}]}` or a bare hierarchy (id "0").
std::map<std::string, QSHierarchy> load_hierarchy_set(const std::string& path);

}  // namespace hibrids
