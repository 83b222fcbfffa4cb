#include "hibrids/bias_table.hpp"

#include <algorithm>

#include "hibrids/errors.hpp"

namespace hibrids {

std::string_view to_string(BiasKind kind) {
    switch (kind) {
        case BiasKind::Full: return "full";
        case BiasKind::Selected: return "selected";
        case BiasKind::TokenLinear: return "token_linear";
        case BiasKind::SectionLinear: return "section_linear";
    }
    return "full";
}

BiasKind bias_kind_from_string(std::string_view name) {
    if (name == "full") return BiasKind::Full;
    if (name == "selected") return BiasKind::Selected;
    if (name == "token_linear") return BiasKind::TokenLinear;
    if (name == "section_linear") return BiasKind::SectionLinear;
    throw ConfigError("unknown bias table kind: " + std::string(name));
}

int clip(int value, int bound) { return std::clamp(value, -bound, bound); }

namespace {

int entry_count(BiasKind kind, const ClipBounds& b) {
    switch (kind) {
        case BiasKind::Full: return (2 * b.path + 1) * (2 * b.level + 1);
        case BiasKind::Selected: return static_cast<int>(kRelationKindCount) - 1;
        case BiasKind::TokenLinear:
        case BiasKind::SectionLinear: return 2 * b.distance + 1;
    }
    return 0;
}

}  // namespace

BiasTable::BiasTable(BiasKind kind, int heads, ClipBounds bounds)
    : kind_(kind), heads_(heads), bounds_(bounds), entries_(entry_count(kind, bounds)) {
    if (heads <= 0) throw ConfigError("bias table needs at least one head");
    if (bounds.path < 0 || bounds.level < 0 || bounds.distance < 0) throw ConfigError("negative clip bound");
    values_.assign(static_cast<std::size_t>(heads_) * static_cast<std::size_t>(entries_), 0.0);
    grads_.assign(values_.size(), 0.0);
}

int BiasTable::full_index(TreePosition pos) const {
    const int p = clip(pos.path_len, bounds_.path) + bounds_.path;
    const int l = clip(pos.lvl_diff, bounds_.level) + bounds_.level;
    return p * (2 * bounds_.level + 1) + l;
}

int BiasTable::relation_index(RelationKind kind) const {
    if (kind == RelationKind::Other) return kZeroEntry;
    return static_cast<int>(kind);
}

int BiasTable::linear_index(int offset) const { return clip(offset, bounds_.distance) + bounds_.distance; }

TreePosition BiasTable::full_key(int entry) const {
    const int width = 2 * bounds_.level + 1;
    return {entry / width - bounds_.path, entry % width - bounds_.level};
}

RelationKind BiasTable::relation_key(int entry) const { return static_cast<RelationKind>(entry); }

int BiasTable::linear_key(int entry) const { return entry - bounds_.distance; }

std::size_t BiasTable::offset(int head, int entry) const {
    if (head < 0 || head >= heads_ || entry < 0 || entry >= entries_) {
        throw LookupError("bias table index out of range");
    }
    return static_cast<std::size_t>(head) * static_cast<std::size_t>(entries_) + static_cast<std::size_t>(entry);
}

double BiasTable::value(int head, int entry) const {
    if (entry == kZeroEntry) return 0.0;
    return values_[offset(head, entry)];
}

double& BiasTable::value(int head, int entry) { return values_[offset(head, entry)]; }

double BiasTable::grad(int head, int entry) const {
    if (entry == kZeroEntry) return 0.0;
    return grads_[offset(head, entry)];
}

double& BiasTable::grad(int head, int entry) { return grads_[offset(head, entry)]; }

void BiasTable::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

BiasIndex encoder_bias_index(const StructureTree& tree, const BiasTable& table, std::size_t n) {
    if (n > tree.token_count()) {
        throw InputError("sequence of " + std::to_string(n) + " tokens exceeds the tree's " +
                         std::to_string(tree.token_count()) + " covered tokens");
    }
    BiasIndex index{n, n, std::vector<int>(n * n, kZeroEntry)};
    const auto& owner = tree.token_to_section();

    if (table.kind() == BiasKind::TokenLinear) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                index.entry[i * n + j] = table.linear_index(static_cast<int>(i) - static_cast<int>(j));
            }
        }
        return index;
    }

    // Section-pair lookups first; tokens only read the resulting grid.
    const std::size_t s = tree.size();
    std::vector<int> grid(s * s, kZeroEntry);
    for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = 0; b < s; ++b) {
            const int x = static_cast<int>(a);
            const int y = static_cast<int>(b);
            int e = kZeroEntry;
            switch (table.kind()) {
                case BiasKind::Full: e = table.full_index(tree_position(tree, x, y)); break;
                case BiasKind::Selected: e = table.relation_index(classify_relation(tree, x, y)); break;
                case BiasKind::SectionLinear: e = table.linear_index(x - y); break;
                case BiasKind::TokenLinear: break;
            }
            grid[a * s + b] = e;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(owner[i]);
        for (std::size_t j = 0; j < n; ++j) {
            index.entry[i * n + j] = grid[a * s + static_cast<std::size_t>(owner[j])];
        }
    }
    return index;
}

std::vector<Eigen::MatrixXd> gather_bias(const BiasTable& table, const BiasIndex& index) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(table.heads()));
    const auto rows = static_cast<Eigen::Index>(index.rows);
    const auto cols = static_cast<Eigen::Index>(index.cols);
    for (int h = 0; h < table.heads(); ++h) {
        Eigen::MatrixXd b(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                b(i, j) = table.value(h, index.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Eigen::MatrixXd> bias_matrix_enc(const StructureTree& tree, const BiasTable& table, std::size_t n) {
    return gather_bias(table, encoder_bias_index(tree, table, n));
}

void scatter_bias_grad(BiasTable& table, const BiasIndex& index, int head, const Eigen::MatrixXd& d_bias) {
    for (std::size_t i = 0; i < index.rows; ++i) {
        for (std::size_t j = 0; j < index.cols; ++j) {
            const int e = index.at(i, j);
            if (e == kZeroEntry) continue;
            table.grad(head, e) += d_bias(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
}

double bias_vector_dec(const StructureTree& tree, const BiasTable& table, int head,
                       std::span<const double> alignment, std::size_t j) {
    if (table.kind() != BiasKind::Full && table.kind() != BiasKind::Selected) {
        throw ConfigError("decoder bias needs a full or selected table");
    }
    if (alignment.size() > tree.token_count()) {
        throw InputError("alignment longer than the tree's token coverage");
    }
    if (j >= alignment.size()) throw InputError("input token index outside the alignment length");
    double b = 0.0;
    const int sj = tree.section_of(j);
    for (std::size_t l = 0; l < alignment.size(); ++l) {
        const int sl = tree.section_of(l);
        const int e = table.kind() == BiasKind::Full ? table.full_index(tree_position(tree, sl, sj))
                                                     : table.relation_index(classify_relation(tree, sl, sj));
        b += alignment[l] * table.value(head, e);
    }
    return b;
}

Eigen::MatrixXd dump_bias_table(const BiasTable& table, const StructureTree& tree) {
    if (table.kind() == BiasKind::TokenLinear) {
        throw ConfigError("token-linear tables are not indexed by section pairs");
    }
    const auto s = static_cast<Eigen::Index>(tree.size());
    Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(s, s);
    for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index b = 0; b < s; ++b) {
            const int x = static_cast<int>(a);
            const int y = static_cast<int>(b);
            int e = kZeroEntry;
            switch (table.kind()) {
                case BiasKind::Full: e = table.full_index(tree_position(tree, x, y)); break;
                case BiasKind::Selected: e = table.relation_index(classify_relation(tree, x, y)); break;
                case BiasKind::SectionLinear: e = table.linear_index(x - y); break;
                case BiasKind::TokenLinear: break;
            }
            double sum = 0.0;
            for (int h = 0; h < table.heads(); ++h) sum += table.value(h, e);
            grid(a, b) = 100.0 * sum / table.heads();
        }
    }
    return grid;
}

}  // namespace hibrids
