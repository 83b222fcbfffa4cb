#include "hibrids/align.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <map>
#include <set>
#include <unordered_map>

#include "hibrids/errors.hpp"
#include "hibrids/text.hpp"

namespace hibrids {

double tf_cosine(const std::string& a, const std::string& b) {
    std::map<std::string, double> ta, tb;
    for (const auto& t : tokenize(a)) ta[t] += 1.0;
    for (const auto& t : tokenize(b)) tb[t] += 1.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, c] : ta) {
        na += c * c;
        if (auto it = tb.find(t); it != tb.end()) dot += c * it->second;
    }
    for (const auto& [t, c] : tb) nb += c * c;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

void AlignmentConfig::validate() const {
    if (w_embed < 0 || w_bigram < 0 || w_entity < 0) throw ConfigError("alignment weights must be nonnegative");
    if (!embed) throw ConfigError("alignment needs a similarity provider");
}

void SelectionConfig::validate() const {
    if (min_sentences == 0 || min_words == 0 || min_doc_sections == 0 || min_summary_paragraphs == 0 ||
        !(max_normalized_density > 0) || !(min_avg_paragraphs_per_section > 0)) {
        throw ConfigError("selection thresholds must be positive");
    }
}

double bigram_overlap(const std::string& sentence, const std::string& paragraph) {
    const auto s = tokenize(sentence);
    if (s.size() < 2) return 0.0;
    const auto sb = ngram_counts(s, 2);
    const auto pb = ngram_counts(tokenize(paragraph), 2);
    std::size_t hit = 0;
    for (const auto& [gram, c] : sb) hit += pb.count(gram);
    return static_cast<double>(hit) / static_cast<double>(sb.size());
}

namespace {

std::string strip_punct(const std::string& w) {
    std::size_t lo = 0, hi = w.size();
    while (lo < hi && std::ispunct(static_cast<unsigned char>(w[lo]))) ++lo;
    while (hi > lo && std::ispunct(static_cast<unsigned char>(w[hi - 1]))) --hi;
    return w.substr(lo, hi - lo);
}

bool entity_word(const std::string& w) {
    if (w.empty()) return false;
    if (std::isupper(static_cast<unsigned char>(w[0]))) return true;
    return std::any_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

std::vector<std::string> surrogate_entities(const std::string& text) {
    std::vector<std::string> out;
    std::vector<std::string> run;
    auto flush = [&] {
        if (!run.empty()) out.push_back(join(run));
        run.clear();
    };
    for (const auto& raw : split_whitespace(text)) {
        const auto w = strip_punct(raw);
        if (entity_word(w)) {
            run.push_back(w);
            // trailing punctuation closes the run ("Smith, Jones" are two entities)
            if (w.size() < raw.size() && std::ispunct(static_cast<unsigned char>(raw.back()))) flush();
        } else {
            flush();
        }
    }
    flush();
    return out;
}

double entity_overlap(const std::string& sentence, const std::string& paragraph) {
    const auto ents = surrogate_entities(sentence);
    const std::set<std::string> unique(ents.begin(), ents.end());
    if (unique.empty()) return 0.0;
    const auto para = tokenize(paragraph);
    std::size_t hit = 0;
    for (const auto& e : unique) hit += contains_run(para, tokenize(e)) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(unique.size());
}

double combine_scores(const AlignmentConfig& cfg, double embed, double bigram, double entity) {
    return cfg.w_embed * embed + cfg.w_bigram * bigram + cfg.w_entity * entity;
}

AlignmentScore score_pair(const std::string& sentence, const std::string& paragraph, const AlignmentConfig& cfg) {
    AlignmentScore s;
    s.embed = std::clamp(cfg.embed(sentence, paragraph), 0.0, 1.0);
    s.bigram = bigram_overlap(sentence, paragraph);
    s.entity = entity_overlap(sentence, paragraph);
    s.combined = combine_scores(cfg, s.embed, s.bigram, s.entity);
    return s;
}

SentenceAlignment align_sentence(const std::string& sentence, std::span<const std::string> paragraphs,
                                 const AlignmentConfig& cfg) {
    cfg.validate();
    if (paragraphs.empty()) throw InputError("alignment needs at least one paragraph");
    SentenceAlignment best{0, score_pair(sentence, paragraphs[0], cfg)};
    for (std::size_t i = 1; i < paragraphs.size(); ++i) {
        auto s = score_pair(sentence, paragraphs[i], cfg);
        if (s.combined > best.score.combined) best = {i, s};
    }
    return best;
}

std::vector<std::size_t> extractive_fragments(std::span<const std::string> summary,
                                              std::span<const std::string> document) {
    std::unordered_map<std::string, std::vector<std::size_t>> where;
    for (std::size_t j = 0; j < document.size(); ++j) where[document[j]].push_back(j);

    std::vector<std::size_t> fragments;
    std::size_t i = 0;
    while (i < summary.size()) {
        std::size_t best = 0;
        if (auto it = where.find(summary[i]); it != where.end()) {
            for (std::size_t j : it->second) {
                std::size_t k = 0;
                while (i + k < summary.size() && j + k < document.size() && summary[i + k] == document[j + k]) ++k;
                best = std::max(best, k);
            }
        }
        if (best > 0) {
            fragments.push_back(best);
            i += best;
        } else {
            ++i;
        }
    }
    return fragments;
}

DensityStats extractive_density(std::span<const std::string> summary, std::span<const std::string> document) {
    DensityStats s;
    s.fragments = extractive_fragments(summary, document);
    if (summary.empty()) return s;
    const auto n = static_cast<double>(summary.size());
    double lin = 0.0, sq = 0.0;
    for (auto f : s.fragments) {
        lin += static_cast<double>(f);
        sq += static_cast<double>(f) * static_cast<double>(f);
    }
    s.coverage = lin / n;
    s.density = sq / n;
    s.normalized_density = s.density / n;
    return s;
}

DensityStats extractive_density(const std::string& summary, const std::string& document) {
    const auto s = tokenize(summary);
    const auto d = tokenize(document);
    return extractive_density(s, d);
}

// ---------------------------------------------------------------------------

namespace {

CorpusRecord record_from_json(const nlohmann::json& j, const std::string& where, std::size_t ordinal) {
    CorpusRecord r;
    try {
        r.document = document_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(where.empty() ? e.where() : where + "." + e.where(), e.message());
    }
    r.id = j.contains("id") && j.at("id").is_string() ? j.at("id").get<std::string>() : std::to_string(ordinal);
    if (j.contains("summary_paragraphs")) {
        const auto& sp = j.at("summary_paragraphs");
        if (!sp.is_array()) throw ParseError((where.empty() ? "" : where + ".") + "summary_paragraphs", "expected a list of paragraphs");
        for (std::size_t p = 0; p < sp.size(); ++p) {
            const std::string pw = (where.empty() ? "" : where + ".") + "summary_paragraphs[" + std::to_string(p) + "]";
            if (!sp[p].is_array()) throw ParseError(pw, "expected a list of sentences");
            std::vector<std::string> sentences;
            for (std::size_t s = 0; s < sp[p].size(); ++s) {
                if (!sp[p][s].is_string()) throw ParseError(pw + "[" + std::to_string(s) + "]", "expected a string");
                sentences.push_back(sp[p][s].get<std::string>());
            }
            r.summary_paragraphs.push_back(std::move(sentences));
        }
    }
    return r;
}

}  // namespace

std::vector<CorpusRecord> corpus_from_json(const nlohmann::json& j) {
    std::vector<CorpusRecord> out;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(record_from_json(j[i], "[" + std::to_string(i) + "]", i));
    } else if (j.is_object() && j.contains("documents")) {
        const auto& docs = j.at("documents");
        if (!docs.is_array()) throw ParseError("documents", "expected a list");
        for (std::size_t i = 0; i < docs.size(); ++i) {
            out.push_back(record_from_json(docs[i], "documents[" + std::to_string(i) + "]", i));
        }
    } else if (j.is_object()) {
        out.push_back(record_from_json(j, "", 0));
    } else {
        throw ParseError("", "corpus must be an object or a list");
    }
    return out;
}

std::vector<CorpusRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, e.what());
    }
    try {
        return corpus_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path + ":" + e.where(), e.message());
    }
}

std::string to_string(FilterStage stage) {
    switch (stage) {
        case FilterStage::DocSections: return "doc_sections";
        case FilterStage::AvgParagraphs: return "avg_paragraphs_per_section";
        case FilterStage::SummaryParagraphs: return "summary_paragraphs";
        case FilterStage::Sentences: return "sentences";
        case FilterStage::Words: return "words";
        case FilterStage::Density: return "normalized_density";
    }
    return "unknown";
}

std::size_t SelectionResult::accepted_count() const {
    return static_cast<std::size_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [](const ParagraphVerdict& v) { return v.accepted; }));
}

SelectionResult select_paragraphs(std::span<const CorpusRecord> corpus, const SelectionConfig& cfg) {
    cfg.validate();
    SelectionResult result;
    for (const auto& rec : corpus) {
        const auto tree = parse_document(rec.document);
        const std::size_t sections = tree.size() - 1;
        std::size_t section_paragraphs = 0;
        for (const auto& n : tree.nodes()) {
            if (n.id != 0) section_paragraphs += n.paragraphs.size();
        }
        const double avg = sections == 0 ? 0.0 : static_cast<double>(section_paragraphs) / static_cast<double>(sections);

        std::optional<FilterStage> doc_stage;
        if (sections < cfg.min_doc_sections) {
            doc_stage = FilterStage::DocSections;
        } else if (avg < cfg.min_avg_paragraphs_per_section) {
            doc_stage = FilterStage::AvgParagraphs;
        } else if (rec.summary_paragraphs.size() < cfg.min_summary_paragraphs) {
            doc_stage = FilterStage::SummaryParagraphs;
        }

        for (std::size_t p = 0; p < rec.summary_paragraphs.size(); ++p) {
            const auto& sentences = rec.summary_paragraphs[p];
            ParagraphVerdict v;
            v.record_id = rec.id;
            v.paragraph = p;
            v.sentences = sentences.size();
            const auto tokens = tokenize(join(sentences));
            v.words = count_words(tokens);
            v.normalized_density = extractive_density(tokens, tree.tokens()).normalized_density;

            if (doc_stage) {
                v.rejected_by = *doc_stage;
            } else if (v.sentences < cfg.min_sentences) {
                v.rejected_by = FilterStage::Sentences;
            } else if (v.words < cfg.min_words) {
                v.rejected_by = FilterStage::Words;
            } else if (!(v.normalized_density < cfg.max_normalized_density)) {
                v.rejected_by = FilterStage::Density;
            } else {
                v.accepted = true;
            }
            if (!v.accepted) ++result.rejected[static_cast<std::size_t>(v.rejected_by)];
            result.verdicts.push_back(std::move(v));
        }
    }
    return result;
}

std::vector<int> paragraph_owners(const StructureTree& tree) {
    std::vector<int> owners;
    for (const auto& n : tree.nodes()) owners.insert(owners.end(), n.paragraphs.size(), n.id);
    return owners;
}

StructureTree build_task_input(const StructureTree& tree, std::span<const std::size_t> paragraph_ids,
                               std::vector<int>* kept_ids) {
    const auto owners = paragraph_owners(tree);
    std::vector<bool> matched(tree.size(), false);
    std::vector<bool> keep(tree.size(), false);
    for (auto p : paragraph_ids) {
        if (p >= owners.size()) throw LookupError("paragraph id " + std::to_string(p) + " out of range");
        const int s = owners[p];
        matched[static_cast<std::size_t>(s)] = true;
        for (int cur = s;; cur = *tree.node(cur).parent) {
            keep[static_cast<std::size_t>(cur)] = true;
            if (!tree.node(cur).parent) break;
        }
    }

    std::function<SectionRecord(int)> build = [&](int id) {
        const auto& n = tree.node(id);
        SectionRecord rec;
        rec.title = n.title;
        if (matched[static_cast<std::size_t>(id)]) rec.paragraphs = n.paragraphs;
        for (int c : n.children) {
            if (keep[static_cast<std::size_t>(c)]) rec.subsections.push_back(build(c));
        }
        return rec;
    };

    Document doc;
    doc.title = tree.root().title;
    if (matched[0]) doc.front = tree.root().paragraphs;
    for (int c : tree.root().children) {
        if (keep[static_cast<std::size_t>(c)]) doc.sections.push_back(build(c));
    }
    if (kept_ids) {
        kept_ids->clear();
        for (std::size_t id = 0; id < tree.size(); ++id) {
            if (id == 0 || keep[id]) kept_ids->push_back(static_cast<int>(id));
        }
    }
    return parse_document(doc);
}

}  // namespace hibrids
