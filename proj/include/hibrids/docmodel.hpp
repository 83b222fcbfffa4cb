#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hibrids {

// ---------------------------------------------------------------------------
// Raw document records (the JSON document file format).

struct SectionRecord {
    std::string title;
    std::vector<std::string> paragraphs;
    std::vector<SectionRecord> subsections;
};

struct Document {
    std::string title;
    std::vector<std::string> front;
    std::vector<SectionRecord> sections;
};

/// Throws ParseError naming the offending element (`sections[0].title`).
Document document_from_json(const nlohmann::json& j);
nlohmann::json document_to_json(const Document& doc);
Document load_document(const std::string& path);

// ---------------------------------------------------------------------------
// Structure tree.

struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct SectionNode {
    int id = 0;  // pre-order index; 0 is the virtual root
    std::string title;
    std::string label;  // outline number such as "1.2"; "root" for the virtual root
    int level = 0;
    std::optional<int> parent;
    std::vector<int> children;
    std::vector<std::string> paragraphs;
    TokenSpan span;  // title tokens first, then paragraph tokens
};

struct TreePosition {
    int path_len = 0;
    int lvl_diff = 0;
    friend bool operator==(const TreePosition&, const TreePosition&) = default;
};

enum class RelationKind : std::uint8_t {
    Self,
    ParentOf,
    ChildOf,
    AncestorOf,
    DescendantOf,
    SiblingBefore,
    SiblingAfter,
    NeighborBefore,
    NeighborAfter,
    SameTopLevel,
    Other,
};
inline constexpr std::size_t kRelationKindCount = 11;

std::string_view to_string(RelationKind kind);
RelationKind mirror(RelationKind kind);

/// Immutable section hierarchy with a level-0 virtual root (id 0) that owns
/// the document title, front matter and every top-level section.
///
/// Tokens are laid out in pre-order: each section contributes its title and
/// paragraphs, followed by its subsections. Every section therefore owns one
/// contiguous span.
class StructureTree {
public:
    static StructureTree from_document(const Document& doc);

    std::size_t size() const { return nodes_.size(); }
    const SectionNode& root() const { return nodes_.front(); }
    const SectionNode& node(int id) const;
    const std::vector<SectionNode>& nodes() const { return nodes_; }

    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t token_count() const { return tokens_.size(); }
    int section_of(std::size_t token) const;
    const std::vector<int>& token_to_section() const { return token_section_; }

    bool is_ancestor(int anc, int desc) const;  // strict
    int lowest_common_ancestor(int a, int b) const;
    /// Level-1 ancestor (or self); nullopt for the root.
    std::optional<int> top_level_section(int id) const;

    /// Rebuilds a document record carrying the same sections.
    Document to_document() const;

    /// Tree with the same nodes but a different token layout. `section_of`
    /// must be non-decreasing and agree with section span order.
    StructureTree with_tokens(std::vector<std::string> tokens, const std::vector<int>& section_of) const;

private:
    std::vector<SectionNode> nodes_;
    std::vector<std::string> tokens_;
    std::vector<int> token_section_;
};

StructureTree parse_document(const Document& doc);
StructureTree parse_document(const nlohmann::json& j);

TreePosition tree_position(const StructureTree& tree, int src, int dst);
TreePosition token_position(const StructureTree& tree, std::size_t i, std::size_t j);
RelationKind classify_relation(const StructureTree& tree, int src, int dst);

struct RelationStats {
    std::array<std::uint64_t, kRelationKindCount> section_pairs{};
    std::array<std::uint64_t, kRelationKindCount> token_pairs{};
    std::uint64_t total_section_pairs() const;
    std::uint64_t total_token_pairs() const;
    std::array<double, kRelationKindCount> section_fractions() const;
    std::array<double, kRelationKindCount> token_fractions() const;
    /// Share of pairs whose kind is anything but Other.
    double selected_section_fraction() const;
    double selected_token_fraction() const;
};

/// Histogram over all ordered section pairs, and over token pairs weighted by
/// span sizes. The root takes part only when `include_root` is set.
RelationStats relation_stats(const StructureTree& tree, bool include_root = false);

enum class SectionTokenMode { Uniform, Leveled };

/// Prepends `[SEC]` (uniform) or `[SEC-Lk]` (leveled) to every non-root
/// section's span. The markers belong to their section.
StructureTree insert_section_tokens(const StructureTree& tree, SectionTokenMode mode);

}  // namespace hibrids
