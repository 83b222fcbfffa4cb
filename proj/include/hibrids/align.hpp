#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hibrids/docmodel.hpp"

namespace hibrids {

/// Sentence/paragraph similarity in [0, 1]. Outputs are clamped on use.
using SimilarityProvider = std::function<double(const std::string& sentence, const std::string& paragraph)>;

/// Default embedding stand-in: cosine between term-frequency vectors of the
/// shared tokenizer output.
double tf_cosine(const std::string& a, const std::string& b);

struct AlignmentConfig {
    double w_embed = 0.4;
    double w_bigram = 1.0;
    double w_entity = 0.2;
    SimilarityProvider embed = tf_cosine;

    void validate() const;
};

struct SelectionConfig {
    std::size_t min_sentences = 3;
    std::size_t min_words = 70;
    double max_normalized_density = 0.15;  // exclusive
    std::size_t min_doc_sections = 3;
    double min_avg_paragraphs_per_section = 5.0;
    std::size_t min_summary_paragraphs = 3;

    void validate() const;
};

/// Share of the sentence's unique bigrams that also occur in the paragraph.
double bigram_overlap(const std::string& sentence, const std::string& paragraph);

/// Entity surrogate: maximal runs of capitalized words and numbers in the raw
/// text (surrounding punctuation stripped). A sentence-initial capitalized
/// word counts too.
std::vector<std::string> surrogate_entities(const std::string& text);
/// Share of the sentence's unique surrogate entities found in the paragraph
/// (as a token subsequence, case-folded).
double entity_overlap(const std::string& sentence, const std::string& paragraph);

struct AlignmentScore {
    double embed = 0.0;
    double bigram = 0.0;
    double entity = 0.0;
    double combined = 0.0;
};

double combine_scores(const AlignmentConfig& cfg, double embed, double bigram, double entity);
AlignmentScore score_pair(const std::string& sentence, const std::string& paragraph, const AlignmentConfig& cfg);

struct SentenceAlignment {
    std::size_t paragraph = 0;
    AlignmentScore score;
};

/// Highest combined score wins; ties go to the smallest index.
SentenceAlignment align_sentence(const std::string& sentence, std::span<const std::string> paragraphs,
                                 const AlignmentConfig& cfg);

struct DensityStats {
    double coverage = 0.0;
    double density = 0.0;
    double normalized_density = 0.0;
    std::vector<std::size_t> fragments;  // lengths, left to right
};

/// Greedy extractive fragments: at each summary position take the longest
/// run that also occurs in the document, else advance one token.
std::vector<std::size_t> extractive_fragments(std::span<const std::string> summary,
                                              std::span<const std::string> document);
DensityStats extractive_density(std::span<const std::string> summary, std::span<const std::string> document);
DensityStats extractive_density(const std::string& summary, const std::string& document);

// ---------------------------------------------------------------------------
// Corpus-level procedures.

struct CorpusRecord {
    std::string id;
    Document document;
    std::vector<std::vector<std::string>> summary_paragraphs;  // sentences per paragraph
};

/// Accepts a single record, a list of records, or `{"documents": [...]}`.
std::vector<CorpusRecord> corpus_from_json(const nlohmann::json& j);
std::vector<CorpusRecord> load_corpus(const std::string& path);

enum class FilterStage : std::size_t {
    DocSections,
    AvgParagraphs,
    SummaryParagraphs,
    Sentences,
    Words,
    Density,
};
inline constexpr std::size_t kFilterStageCount = 6;
std::string to_string(FilterStage stage);

struct ParagraphVerdict {
    std::string record_id;
    std::size_t paragraph = 0;
    bool accepted = false;
    FilterStage rejected_by = FilterStage::DocSections;  // meaningful when !accepted
    std::size_t sentences = 0;
    std::size_t words = 0;
    double normalized_density = 0.0;
};

struct SelectionResult {
    std::vector<ParagraphVerdict> verdicts;  // every paragraph, corpus order
    std::array<std::size_t, kFilterStageCount> rejected{};
    std::size_t accepted_count() const;
};

/// Filters, in order: document has enough sections; enough paragraphs per
/// section on average; summary has enough paragraphs; paragraph has enough
/// sentences; enough words; normalized density below the threshold. A
/// paragraph is charged to the first filter it fails.
SelectionResult select_paragraphs(std::span<const CorpusRecord> corpus, const SelectionConfig& cfg);

/// Paragraphs of the tree in document order: front matter first, then each
/// section's paragraphs in pre-order. Returns the owning section per index.
std::vector<int> paragraph_owners(const StructureTree& tree);

/// Matched sections keep their text; every ancestor is kept as a title-only
/// stub; everything else is dropped. Front matter survives only when a front
/// paragraph is matched. Levels and document order are preserved.
/// `kept_ids`, when given, receives the original id of every reduced node.
StructureTree build_task_input(const StructureTree& tree, std::span<const std::size_t> paragraph_ids,
                               std::vector<int>* kept_ids = nullptr);

}  // namespace hibrids
