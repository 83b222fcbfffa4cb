#include "hibrids/docmodel.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "hibrids/errors.hpp"
#include "hibrids/text.hpp"

namespace hibrids {

namespace {

std::string field_path(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

std::string require_string(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(field_path(where, key), "missing field");
    const auto& v = j.at(key);
    if (!v.is_string()) throw ParseError(field_path(where, key), "expected a string");
    return v.get<std::string>();
}

std::vector<std::string> optional_strings(const nlohmann::json& j, const std::string& key,
                                          const std::string& where) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    const auto& v = j.at(key);
    if (!v.is_array()) throw ParseError(field_path(where, key), "expected a list of strings");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) {
            throw ParseError(field_path(where, key) + "[" + std::to_string(i) + "]", "expected a string");
        }
        out.push_back(v[i].get<std::string>());
    }
    return out;
}

std::vector<SectionRecord> parse_sections(const nlohmann::json& j, const std::string& key,
                                          const std::string& where);

SectionRecord parse_section(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "expected an object");
    SectionRecord s;
    s.title = require_string(j, "title", where);
    s.paragraphs = optional_strings(j, "paragraphs", where);
    s.subsections = parse_sections(j, "subsections", where);
    return s;
}

std::vector<SectionRecord> parse_sections(const nlohmann::json& j, const std::string& key,
                                          const std::string& where) {
    std::vector<SectionRecord> out;
    if (!j.contains(key)) return out;
    const auto& v = j.at(key);
    std::string path = field_path(where, key);
    if (!v.is_array()) throw ParseError(path, "expected a list of sections");
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(parse_section(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

nlohmann::json section_to_json(const SectionRecord& s) {
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& c : s.subsections) subs.push_back(section_to_json(c));
    return {{"title", s.title}, {"paragraphs", s.paragraphs}, {"subsections", subs}};
}

}  // namespace

Document document_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("", "document must be a JSON object");
    Document doc;
    if (j.contains("title")) {
        if (!j.at("title").is_string()) throw ParseError("title", "expected a string");
        doc.title = j.at("title").get<std::string>();
    }
    doc.front = optional_strings(j, "front", "");
    doc.sections = parse_sections(j, "sections", "");
    return doc;
}

nlohmann::json document_to_json(const Document& doc) {
    nlohmann::json secs = nlohmann::json::array();
    for (const auto& s : doc.sections) secs.push_back(section_to_json(s));
    return {{"title", doc.title}, {"front", doc.front}, {"sections", secs}};
}

Document load_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ":byte " + std::to_string(e.byte), e.what());
    }
    try {
        return document_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path + ":" + e.where(), e.message());
    }
}

// ---------------------------------------------------------------------------

std::string_view to_string(RelationKind kind) {
    switch (kind) {
        case RelationKind::Self: return "Self";
        case RelationKind::ParentOf: return "ParentOf";
        case RelationKind::ChildOf: return "ChildOf";
        case RelationKind::AncestorOf: return "AncestorOf";
        case RelationKind::DescendantOf: return "DescendantOf";
        case RelationKind::SiblingBefore: return "SiblingBefore";
        case RelationKind::SiblingAfter: return "SiblingAfter";
        case RelationKind::NeighborBefore: return "NeighborBefore";
        case RelationKind::NeighborAfter: return "NeighborAfter";
        case RelationKind::SameTopLevel: return "SameTopLevel";
        case RelationKind::Other: return "Other";
    }
    return "Other";
}

RelationKind mirror(RelationKind kind) {
    switch (kind) {
        case RelationKind::ParentOf: return RelationKind::ChildOf;
        case RelationKind::ChildOf: return RelationKind::ParentOf;
        case RelationKind::AncestorOf: return RelationKind::DescendantOf;
        case RelationKind::DescendantOf: return RelationKind::AncestorOf;
        case RelationKind::SiblingBefore: return RelationKind::SiblingAfter;
        case RelationKind::SiblingAfter: return RelationKind::SiblingBefore;
        case RelationKind::NeighborBefore: return RelationKind::NeighborAfter;
        case RelationKind::NeighborAfter: return RelationKind::NeighborBefore;
        default: return kind;
    }
}

StructureTree StructureTree::from_document(const Document& doc) {
    StructureTree tree;
    SectionNode root;
    root.id = 0;
    root.title = doc.title;
    root.label = "root";
    root.level = 0;
    root.paragraphs = doc.front;

    auto append_tokens = [&tree](int owner, const std::string& text) {
        for (auto& t : tokenize(text)) {
            tree.tokens_.push_back(std::move(t));
            tree.token_section_.push_back(owner);
        }
    };

    tree.nodes_.push_back(std::move(root));
    append_tokens(0, doc.title);
    for (const auto& p : doc.front) append_tokens(0, p);
    tree.nodes_[0].span = {0, tree.tokens_.size()};

    std::function<void(const SectionRecord&, int, const std::string&)> visit =
        [&](const SectionRecord& rec, int parent, const std::string& label) {
            SectionNode n;
            n.id = static_cast<int>(tree.nodes_.size());
            n.title = rec.title;
            n.label = label;
            n.level = tree.nodes_[static_cast<std::size_t>(parent)].level + 1;
            n.parent = parent;
            n.paragraphs = rec.paragraphs;
            const int id = n.id;
            tree.nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
            tree.nodes_.push_back(std::move(n));

            const std::size_t begin = tree.tokens_.size();
            append_tokens(id, rec.title);
            for (const auto& p : rec.paragraphs) append_tokens(id, p);
            tree.nodes_[static_cast<std::size_t>(id)].span = {begin, tree.tokens_.size()};

            for (std::size_t k = 0; k < rec.subsections.size(); ++k) {
                visit(rec.subsections[k], id, label + "." + std::to_string(k + 1));
            }
        };
    for (std::size_t k = 0; k < doc.sections.size(); ++k) visit(doc.sections[k], 0, std::to_string(k + 1));
    return tree;
}

const SectionNode& StructureTree::node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw LookupError("unknown section id " + std::to_string(id));
    }
    return nodes_[static_cast<std::size_t>(id)];
}

int StructureTree::section_of(std::size_t token) const {
    if (token >= token_section_.size()) {
        throw LookupError("token index " + std::to_string(token) + " out of range (" +
                          std::to_string(token_section_.size()) + " tokens)");
    }
    return token_section_[token];
}

bool StructureTree::is_ancestor(int anc, int desc) const {
    const auto* n = &node(desc);
    node(anc);
    while (n->parent) {
        if (*n->parent == anc) return true;
        n = &nodes_[static_cast<std::size_t>(*n->parent)];
    }
    return false;
}

int StructureTree::lowest_common_ancestor(int a, int b) const {
    const auto* x = &node(a);
    const auto* y = &node(b);
    while (x->level > y->level) x = &nodes_[static_cast<std::size_t>(*x->parent)];
    while (y->level > x->level) y = &nodes_[static_cast<std::size_t>(*y->parent)];
    while (x->id != y->id) {
        x = &nodes_[static_cast<std::size_t>(*x->parent)];
        y = &nodes_[static_cast<std::size_t>(*y->parent)];
    }
    return x->id;
}

std::optional<int> StructureTree::top_level_section(int id) const {
    const auto* n = &node(id);
    if (n->level == 0) return std::nullopt;
    while (n->level > 1) n = &nodes_[static_cast<std::size_t>(*n->parent)];
    return n->id;
}

Document StructureTree::to_document() const {
    Document doc;
    doc.title = root().title;
    doc.front = root().paragraphs;
    std::function<SectionRecord(int)> build = [&](int id) {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        SectionRecord rec{n.title, n.paragraphs, {}};
        for (int c : n.children) rec.subsections.push_back(build(c));
        return rec;
    };
    for (int c : root().children) doc.sections.push_back(build(c));
    return doc;
}

StructureTree StructureTree::with_tokens(std::vector<std::string> tokens, const std::vector<int>& section_of) const {
    if (tokens.size() != section_of.size()) throw InputError("token/section length mismatch");
    StructureTree out;
    out.nodes_ = nodes_;
    for (auto& n : out.nodes_) n.span = {0, 0};
    std::vector<bool> seen(nodes_.size(), false);
    for (std::size_t i = 0; i < section_of.size(); ++i) {
        const int s = section_of[i];
        if (s < 0 || static_cast<std::size_t>(s) >= nodes_.size()) throw LookupError("unknown section id");
        if (i > 0 && s < section_of[i - 1]) throw InputError("section ids must be non-decreasing");
        auto& span = out.nodes_[static_cast<std::size_t>(s)].span;
        if (!seen[static_cast<std::size_t>(s)]) {
            span.begin = i;
            seen[static_cast<std::size_t>(s)] = true;
        }
        span.end = i + 1;
    }
    // empty sections get an empty span located where they would start
    std::size_t cursor = 0;
    for (auto& n : out.nodes_) {
        if (!seen[static_cast<std::size_t>(n.id)]) n.span = {cursor, cursor};
        cursor = n.span.end;
    }
    out.tokens_ = std::move(tokens);
    out.token_section_ = section_of;
    return out;
}

StructureTree parse_document(const Document& doc) { return StructureTree::from_document(doc); }

StructureTree parse_document(const nlohmann::json& j) { return parse_document(document_from_json(j)); }

TreePosition tree_position(const StructureTree& tree, int src, int dst) {
    const auto& a = tree.node(src);
    const auto& b = tree.node(dst);
    if (src == dst) return {};
    const int lca = tree.lowest_common_ancestor(src, dst);
    const int dist = a.level + b.level - 2 * tree.node(lca).level;
    return {src < dst ? dist : -dist, a.level - b.level};
}

TreePosition token_position(const StructureTree& tree, std::size_t i, std::size_t j) {
    return tree_position(tree, tree.section_of(i), tree.section_of(j));
}

RelationKind classify_relation(const StructureTree& tree, int src, int dst) {
    const auto& a = tree.node(src);
    const auto& b = tree.node(dst);
    if (src == dst) return RelationKind::Self;
    if (b.parent && *b.parent == src) return RelationKind::ParentOf;
    if (a.parent && *a.parent == dst) return RelationKind::ChildOf;
    if (tree.is_ancestor(src, dst)) return RelationKind::AncestorOf;
    if (tree.is_ancestor(dst, src)) return RelationKind::DescendantOf;
    if (a.parent && b.parent && *a.parent == *b.parent) {
        return src < dst ? RelationKind::SiblingBefore : RelationKind::SiblingAfter;
    }
    if (src + 1 == dst) return RelationKind::NeighborBefore;
    if (dst + 1 == src) return RelationKind::NeighborAfter;
    auto ta = tree.top_level_section(src);
    auto tb = tree.top_level_section(dst);
    if (ta && tb && *ta == *tb) return RelationKind::SameTopLevel;
    return RelationKind::Other;
}

std::uint64_t RelationStats::total_section_pairs() const {
    std::uint64_t s = 0;
    for (auto c : section_pairs) s += c;
    return s;
}

std::uint64_t RelationStats::total_token_pairs() const {
    std::uint64_t s = 0;
    for (auto c : token_pairs) s += c;
    return s;
}

namespace {

std::array<double, kRelationKindCount> normalize(const std::array<std::uint64_t, kRelationKindCount>& counts) {
    std::array<double, kRelationKindCount> out{};
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) return out;
    for (std::size_t k = 0; k < kRelationKindCount; ++k) {
        out[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    }
    return out;
}

}  // namespace

std::array<double, kRelationKindCount> RelationStats::section_fractions() const { return normalize(section_pairs); }
std::array<double, kRelationKindCount> RelationStats::token_fractions() const { return normalize(token_pairs); }

double RelationStats::selected_section_fraction() const {
    return 1.0 - section_fractions()[static_cast<std::size_t>(RelationKind::Other)];
}

double RelationStats::selected_token_fraction() const {
    auto t = total_token_pairs();
    if (t == 0) return 0.0;
    return 1.0 - token_fractions()[static_cast<std::size_t>(RelationKind::Other)];
}

RelationStats relation_stats(const StructureTree& tree, bool include_root) {
    RelationStats stats;
    const int first = include_root ? 0 : 1;
    const int n = static_cast<int>(tree.size());
    for (int a = first; a < n; ++a) {
        for (int b = first; b < n; ++b) {
            const auto k = static_cast<std::size_t>(classify_relation(tree, a, b));
            ++stats.section_pairs[k];
            stats.token_pairs[k] += static_cast<std::uint64_t>(tree.node(a).span.size()) * tree.node(b).span.size();
        }
    }
    return stats;
}

StructureTree insert_section_tokens(const StructureTree& tree, SectionTokenMode mode) {
    std::vector<std::string> tokens;
    std::vector<int> owner;
    tokens.reserve(tree.token_count() + tree.size());
    owner.reserve(tree.token_count() + tree.size());
    for (const auto& n : tree.nodes()) {
        if (n.id != 0) {
            tokens.push_back(mode == SectionTokenMode::Uniform ? std::string(kSecMarker)
                                                               : "[SEC-L" + std::to_string(n.level) + "]");
            owner.push_back(n.id);
        }
        for (std::size_t i = n.span.begin; i < n.span.end; ++i) {
            tokens.push_back(tree.tokens()[i]);
            owner.push_back(n.id);
        }
    }
    return tree.with_tokens(std::move(tokens), owner);
}

}  // namespace hibrids
