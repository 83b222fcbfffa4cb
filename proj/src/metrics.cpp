#include "hibrids/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "hibrids/errors.hpp"
#include "hibrids/text.hpp"

namespace hibrids {

namespace {

RougeScore make_score(double overlap, double cand_total, double ref_total) {
    RougeScore s;
    s.precision = cand_total > 0 ? overlap / cand_total : 0.0;
    s.recall = ref_total > 0 ? overlap / ref_total : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

std::vector<std::string> to_vector(std::span<const std::string> s) { return {s.begin(), s.end()}; }

}  // namespace

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScore rouge_tokens(std::span<const std::string> candidate, std::span<const std::string> reference,
                        RougeVariant variant) {
    if (variant == RougeVariant::RL) {
        const auto lcs = static_cast<double>(lcs_length(candidate, reference));
        return make_score(lcs, static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
    }
    const std::size_t n = variant == RougeVariant::R1 ? 1 : 2;
    const auto cand = ngram_counts(to_vector(candidate), n);
    const auto ref = ngram_counts(to_vector(reference), n);
    double overlap = 0.0, cand_total = 0.0, ref_total = 0.0;
    for (const auto& [gram, c] : cand) {
        cand_total += c;
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    for (const auto& [gram, c] : ref) ref_total += c;
    // Two single-token texts have no bigrams; identical ones still score 1.
    if (cand_total == 0.0 && ref_total == 0.0 && !candidate.empty() && !reference.empty()) {
        const bool same = std::equal(candidate.begin(), candidate.end(), reference.begin(), reference.end());
        return make_score(same ? 1.0 : 0.0, 1.0, 1.0);
    }
    return make_score(overlap, cand_total, ref_total);
}

RougeScore rouge(const std::string& candidate, const std::string& reference, RougeVariant variant) {
    const auto c = tokenize(candidate);
    const auto r = tokenize(reference);
    return rouge_tokens(c, r, variant);
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
    if (candidate_len == 0) return 0.0;
    if (candidate_len > reference_len) return 1.0;
    return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

double bleu4_tokens(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = ngram_counts(to_vector(candidate), n);
        const auto ref = ngram_counts(to_vector(reference), n);
        double matches = 0.0, total = 0.0;
        for (const auto& [gram, c] : cand) {
            total += c;
            auto it = ref.find(gram);
            if (it != ref.end()) matches += std::min(c, it->second);
        }
        const double p = (matches > 0 && total > 0) ? matches / total : kBleuEpsilon;
        log_sum += 0.25 * std::log(p);
    }
    return brevity_penalty(candidate.size(), reference.size()) * std::exp(log_sum);
}

double bleu4(const std::string& candidate, const std::string& reference) {
    const auto c = tokenize(candidate);
    const auto r = tokenize(reference);
    return bleu4_tokens(c, r);
}

// ---------------------------------------------------------------------------

HierScore hierarchy_f1(const QSHierarchy& generated, const QSHierarchy& reference, HierMatch* match) {
    const auto gen = flatten(generated);
    const auto ref = flatten(reference);
    std::vector<std::vector<std::string>> gen_sum, ref_sum;
    for (const auto& p : gen) gen_sum.push_back(tokenize(p.node->summary));
    for (const auto& p : ref) ref_sum.push_back(tokenize(p.node->summary));

    auto ref_is_ancestor = [&](int anc, int desc) {
        for (int cur = ref[static_cast<std::size_t>(desc)].parent; cur >= 0; cur = ref[static_cast<std::size_t>(cur)].parent) {
            if (cur == anc) return true;
        }
        return false;
    };

    // pairwise R1 + R2 between every generated and reference summary
    std::vector<std::vector<double>> pair_score(gen.size(), std::vector<double>(ref.size(), 0.0));
    std::vector<int> mapping(gen.size(), -1);
    for (std::size_t g = 0; g < gen.size(); ++g) {
        double best = -1.0;
        for (std::size_t r = 0; r < ref.size(); ++r) {
            pair_score[g][r] = rouge_tokens(gen_sum[g], ref_sum[r], RougeVariant::R1).f1 +
                               rouge_tokens(gen_sum[g], ref_sum[r], RougeVariant::R2).f1;
            if (pair_score[g][r] > best + 1e-12) {
                best = pair_score[g][r];
                mapping[g] = static_cast<int>(r);
            }
        }
    }

    std::size_t gen_edges = 0, ref_edges = 0;
    for (const auto& p : gen) gen_edges += p.parent >= 0 ? 1 : 0;
    for (const auto& p : ref) ref_edges += p.parent >= 0 ? 1 : 0;

    HierMatch local;
    local.mapping = mapping;
    double weight_sum = 0.0;
    std::vector<double> best_for_ref(ref.size(), 0.0);
    std::vector<bool> covered(ref.size(), false);
    for (std::size_t c = 0; c < gen.size(); ++c) {
        const int p = gen[c].parent;
        if (p < 0) continue;
        HierMatch::Edge e{p, static_cast<int>(c), false, 0.0};
        if (!ref.empty()) {
            const int mp = mapping[static_cast<std::size_t>(p)];
            const int mc = mapping[c];
            if (ref_is_ancestor(mp, mc)) {
                e.matched = true;
                e.weight = (pair_score[static_cast<std::size_t>(p)][static_cast<std::size_t>(mp)] +
                            pair_score[c][static_cast<std::size_t>(mc)]) /
                           4.0;
                weight_sum += e.weight;
                const auto rc = static_cast<std::size_t>(mc);
                best_for_ref[rc] = covered[rc] ? std::max(best_for_ref[rc], e.weight) : e.weight;
                covered[rc] = true;
            }
        }
        local.edges.push_back(e);
    }
    if (match) *match = std::move(local);

    if (gen_edges == 0 && ref_edges == 0) return {1.0, 1.0, 1.0};
    if (gen_edges == 0 || ref_edges == 0) return {0.0, 0.0, 0.0};

    double recall_sum = 0.0;
    for (std::size_t r = 0; r < ref.size(); ++r) {
        if (ref[r].parent >= 0 && covered[r]) recall_sum += best_for_ref[r];
    }
    HierScore s;
    s.precision = weight_sum / static_cast<double>(gen_edges);
    s.recall = recall_sum / static_cast<double>(ref_edges);
    s.f1 = (s.precision + s.recall) > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kMaxEditPairs = 15;
constexpr std::uint64_t kRootSlot = 15;

std::uint64_t encode_parents(const std::vector<std::uint64_t>& parent) {
    std::uint64_t s = 0;
    for (std::size_t v = 0; v < parent.size(); ++v) s |= parent[v] << (4 * v);
    return s;
}

std::uint64_t parent_of(std::uint64_t state, std::size_t v) { return (state >> (4 * v)) & 0xF; }

std::uint64_t with_parent(std::uint64_t state, std::size_t v, std::uint64_t p) {
    return (state & ~(std::uint64_t{0xF} << (4 * v))) | (p << (4 * v));
}

template <typename Fn>
void for_each_move(std::uint64_t state, std::size_t n, Fn&& fn) {
    for (std::size_t v = 0; v < n; ++v) {
        const std::uint64_t p = parent_of(state, v);
        if (p != kRootSlot) fn(with_parent(state, v, parent_of(state, static_cast<std::size_t>(p))));
        for (std::size_t s = 0; s < n; ++s) {
            if (s != v && parent_of(state, s) == p) fn(with_parent(state, v, s));
        }
    }
}

std::string pair_key(const QSNode& n) { return n.question + '\x1f' + n.summary; }

}  // namespace

EditCountResult edit_count(const QSHierarchy& generated, const QSHierarchy& corrected, std::size_t max_states) {
    const auto gen = flatten(generated);
    const auto cor = flatten(corrected);
    if (gen.size() != cor.size()) throw InputError("hierarchies hold different numbers of pairs");
    if (gen.size() > kMaxEditPairs) throw InputError("edit count supports at most 15 pairs");

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < gen.size(); ++i) {
        if (!index.emplace(pair_key(*gen[i].node), i).second) {
            throw InputError("duplicate pair in generated hierarchy: " + gen[i].node->question);
        }
    }
    std::vector<std::size_t> cor_to_gen(cor.size());
    std::vector<bool> used(gen.size(), false);
    for (std::size_t i = 0; i < cor.size(); ++i) {
        auto it = index.find(pair_key(*cor[i].node));
        if (it == index.end() || used[it->second]) {
            throw InputError("pair sets differ at \"" + cor[i].node->question + "\"");
        }
        used[it->second] = true;
        cor_to_gen[i] = it->second;
    }

    const std::size_t n = gen.size();
    std::vector<std::uint64_t> start(n), goal(n);
    for (std::size_t i = 0; i < n; ++i) {
        start[i] = gen[i].parent < 0 ? kRootSlot : static_cast<std::uint64_t>(gen[i].parent);
        goal[cor_to_gen[i]] = cor[i].parent < 0 ? kRootSlot : cor_to_gen[static_cast<std::size_t>(cor[i].parent)];
    }
    const std::uint64_t a = encode_parents(start);
    const std::uint64_t b = encode_parents(goal);
    if (a == b) return {0, false};

    std::unordered_map<std::uint64_t, int> dist_a{{a, 0}}, dist_b{{b, 0}};
    std::vector<std::uint64_t> front_a{a}, front_b{b};
    int depth_a = 0, depth_b = 0;

    while (!front_a.empty() && !front_b.empty()) {
        if (dist_a.size() + dist_b.size() > max_states) return {depth_a + depth_b, true};
        const bool expand_a = front_a.size() <= front_b.size();
        auto& front = expand_a ? front_a : front_b;
        auto& mine = expand_a ? dist_a : dist_b;
        auto& other = expand_a ? dist_b : dist_a;
        int& depth = expand_a ? depth_a : depth_b;

        std::vector<std::uint64_t> next;
        int best = -1;
        for (auto s : front) {
            for_each_move(s, n, [&](std::uint64_t t) {
                if (auto it = other.find(t); it != other.end()) {
                    const int total = depth + 1 + it->second;
                    if (best < 0 || total < best) best = total;
                }
                if (mine.emplace(t, depth + 1).second) next.push_back(t);
            });
        }
        ++depth;
        if (best >= 0) return {best, false};
        front = std::move(next);
    }
    throw InputError("corrected hierarchy is unreachable from the generated one");
}

// ---------------------------------------------------------------------------

namespace {

std::string joined_summaries(const QSHierarchy& h) {
    std::vector<std::string> parts;
    for (const auto& p : flatten(h)) parts.push_back(p.node->summary);
    return join(parts);
}

std::string joined_questions(const QSHierarchy& h) {
    std::vector<std::string> parts;
    for (const auto& p : flatten(h)) {
        if (!p.node->question.empty()) parts.push_back(p.node->question);
    }
    return join(parts);
}

nlohmann::json rouge_json(const RougeScore& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

RougeScore rouge_from(const nlohmann::json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

nlohmann::json sample_json(const SampleReport& s) {
    nlohmann::json j{{"id", s.id},
                     {"hier", {{"precision", s.hier.precision}, {"recall", s.hier.recall}, {"f1", s.hier.f1}}},
                     {"rouge1", rouge_json(s.rouge1)},
                     {"rouge2", rouge_json(s.rouge2)},
                     {"rougeL", rouge_json(s.rougeL)},
                     {"bleu4", s.bleu4}};
    if (s.edits) j["edit_count"] = {{"steps", s.edits->steps}, {"capped", s.edits->capped}};
    return j;
}

SampleReport sample_from(const nlohmann::json& j) {
    SampleReport s;
    s.id = j.at("id").get<std::string>();
    const auto& h = j.at("hier");
    s.hier = {h.at("precision").get<double>(), h.at("recall").get<double>(), h.at("f1").get<double>()};
    s.rouge1 = rouge_from(j.at("rouge1"));
    s.rouge2 = rouge_from(j.at("rouge2"));
    s.rougeL = rouge_from(j.at("rougeL"));
    s.bleu4 = j.at("bleu4").get<double>();
    if (j.contains("edit_count")) {
        s.edits = EditCountResult{j.at("edit_count").at("steps").get<int>(), j.at("edit_count").at("capped").get<bool>()};
    }
    return s;
}

}  // namespace

SampleReport evaluate_sample(const std::string& id, const QSHierarchy& generated, const QSHierarchy& reference,
                             const QSHierarchy* corrected) {
    SampleReport s;
    s.id = id;
    s.hier = hierarchy_f1(generated, reference);
    const auto gs = tokenize(joined_summaries(generated));
    const auto rs = tokenize(joined_summaries(reference));
    s.rouge1 = rouge_tokens(gs, rs, RougeVariant::R1);
    s.rouge2 = rouge_tokens(gs, rs, RougeVariant::R2);
    s.rougeL = rouge_tokens(gs, rs, RougeVariant::RL);
    s.bleu4 = bleu4(joined_questions(generated), joined_questions(reference));
    if (corrected) s.edits = edit_count(generated, *corrected);
    return s;
}

RunReport evaluate_run(const std::map<std::string, QSHierarchy>& generated,
                       const std::map<std::string, QSHierarchy>& reference,
                       const std::map<std::string, QSHierarchy>* corrected) {
    std::vector<std::string> missing;
    for (const auto& [id, h] : generated) {
        if (!reference.count(id)) missing.push_back("generated-only:" + id);
    }
    for (const auto& [id, h] : reference) {
        if (!generated.count(id)) missing.push_back("reference-only:" + id);
    }
    if (corrected) {
        for (const auto& [id, h] : generated) {
            if (!corrected->count(id)) missing.push_back("no-correction:" + id);
        }
    }
    if (!missing.empty()) throw InputError("sample ids do not line up: " + join(missing, ", "));

    RunReport report;
    for (const auto& [id, g] : generated) {
        const QSHierarchy* c = corrected ? &corrected->at(id) : nullptr;
        report.samples.push_back(evaluate_sample(id, g, reference.at(id), c));
    }

    auto& agg = report.aggregate;
    agg.id = "mean";
    const auto n = static_cast<double>(report.samples.size());
    if (report.samples.empty()) return report;
    double edits = 0.0;
    auto add = [](RougeScore& into, const RougeScore& s) {
        into.precision += s.precision;
        into.recall += s.recall;
        into.f1 += s.f1;
    };
    auto scale = [n](RougeScore& s) {
        s.precision /= n;
        s.recall /= n;
        s.f1 /= n;
    };
    for (const auto& s : report.samples) {
        agg.hier.precision += s.hier.precision;
        agg.hier.recall += s.hier.recall;
        agg.hier.f1 += s.hier.f1;
        add(agg.rouge1, s.rouge1);
        add(agg.rouge2, s.rouge2);
        add(agg.rougeL, s.rougeL);
        agg.bleu4 += s.bleu4;
        if (s.edits) edits += s.edits->steps;
    }
    agg.hier.precision /= n;
    agg.hier.recall /= n;
    agg.hier.f1 /= n;
    scale(agg.rouge1);
    scale(agg.rouge2);
    scale(agg.rougeL);
    agg.bleu4 /= n;
    if (corrected) report.mean_edit_count = edits / n;
    return report;
}

nlohmann::json report_to_json(const RunReport& report) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : report.samples) samples.push_back(sample_json(s));
    nlohmann::json agg = sample_json(report.aggregate);
    if (report.mean_edit_count) agg["mean_edit_count"] = *report.mean_edit_count;
    return {{"samples", std::move(samples)}, {"aggregate", std::move(agg)}};
}

RunReport report_from_json(const nlohmann::json& j) {
    RunReport r;
    for (const auto& s : j.at("samples")) r.samples.push_back(sample_from(s));
    r.aggregate = sample_from(j.at("aggregate"));
    if (j.at("aggregate").contains("mean_edit_count")) {
        r.mean_edit_count = j.at("aggregate").at("mean_edit_count").get<double>();
    }
    return r;
}

namespace {

std::vector<std::string> row_cells(const SampleReport& s, bool with_edits, std::optional<double> edit_value) {
    auto pct = [](double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(2) << 100.0 * v;
        return os.str();
    };
    std::vector<std::string> cells{s.id,           pct(s.hier.precision), pct(s.hier.recall), pct(s.hier.f1),
                                   pct(s.rouge1.f1), pct(s.rouge2.f1),    pct(s.rougeL.f1),  pct(s.bleu4)};
    if (with_edits) {
        std::ostringstream os;
        if (edit_value) os << std::fixed << std::setprecision(2) << *edit_value;
        cells.push_back(os.str());
    }
    return cells;
}

std::vector<std::vector<std::string>> report_rows(const RunReport& report) {
    const bool with_edits = report.mean_edit_count.has_value();
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"id", "Hier P", "Hier R", "Hier F1", "R1", "R2", "RL", "Ques B4"};
    if (with_edits) header.push_back("Edits");
    rows.push_back(header);
    for (const auto& s : report.samples) {
        rows.push_back(row_cells(s, with_edits, s.edits ? std::optional<double>(s.edits->steps) : std::nullopt));
    }
    rows.push_back(row_cells(report.aggregate, with_edits, report.mean_edit_count));
    return rows;
}

}  // namespace

std::string report_table(const RunReport& report) {
    const auto rows = report_rows(report);
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream os;
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) os << "  ";
            if (c == 0) {
                os << std::left << std::setw(static_cast<int>(width[c])) << r[c];
            } else {
                os << std::right << std::setw(static_cast<int>(width[c])) << r[c];
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string report_csv(const RunReport& report) {
    std::ostringstream os;
    for (const auto& r : report_rows(report)) os << join(r, ",") << '\n';
    return os.str();
}

std::map<std::string, QSHierarchy> load_hierarchy_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, e.what());
    }
    std::map<std::string, QSHierarchy> out;
    try {
        if (j.is_object() && j.contains("samples")) {
            const auto& samples = j.at("samples");
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const auto& s = samples[i];
                if (!s.contains("id") || !s.at("id").is_string()) {
                    throw ParseError("samples[" + std::to_string(i) + "].id", "missing string id");
                }
                const auto id = s.at("id").get<std::string>();
                if (out.count(id)) throw ParseError("samples[" + std::to_string(i) + "].id", "duplicate id " + id);
                out.emplace(id, hierarchy_from_json(s.at("hierarchy")));
            }
        } else {
            out.emplace("0", hierarchy_from_json(j));
        }
    } catch (const ParseError& e) {
        throw ParseError(path + ":" + e.where(), e.message());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, e.what());
    }
    return out;
}

}  // namespace hibrids
