#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hibrids/docmodel.hpp"

namespace hibrids {

enum class BiasKind { Full, Selected, TokenLinear, SectionLinear };

std::string_view to_string(BiasKind kind);
BiasKind bias_kind_from_string(std::string_view name);

/// Symmetric clip ranges: path length to [-path, path], level difference to
/// [-level, level], linear distances to [-distance, distance].
struct ClipBounds {
    int path = 16;
    int level = 8;
    int distance = 128;
    friend bool operator==(const ClipBounds&, const ClipBounds&) = default;
};

int clip(int value, int bound);

/// Index into a table row that always reads as zero and never receives
/// gradient (the Other relation of the selected-relation variant).
inline constexpr int kZeroEntry = -1;

/// Per-head learnable lookup of hierarchical attention biases.
///
/// - Full: entries indexed by (clipped path length, clipped level difference);
/// - Selected: one entry per RelationKind except Other, which reads as 0;
/// - TokenLinear: indexed by clipped token offset i - j;
/// - SectionLinear: indexed by clipped pre-order section offset.
///
/// Values start at zero. Gradients live next to the values.
class BiasTable {
public:
    BiasTable(BiasKind kind, int heads, ClipBounds bounds = {});

    BiasKind kind() const { return kind_; }
    int heads() const { return heads_; }
    const ClipBounds& bounds() const { return bounds_; }
    int entries_per_head() const { return entries_; }

    int full_index(TreePosition pos) const;
    int relation_index(RelationKind kind) const;
    int linear_index(int offset) const;

    /// Inverse of the index functions, used for (de)serialization.
    TreePosition full_key(int entry) const;
    RelationKind relation_key(int entry) const;
    int linear_key(int entry) const;

    double value(int head, int entry) const;
    double& value(int head, int entry);
    double grad(int head, int entry) const;
    double& grad(int head, int entry);

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::span<double> grads() { return grads_; }
    std::span<const double> grads() const { return grads_; }
    void zero_grad();

private:
    std::size_t offset(int head, int entry) const;

    BiasKind kind_;
    int heads_;
    ClipBounds bounds_;
    int entries_;
    std::vector<double> values_;
    std::vector<double> grads_;
};

/// Table entry used for every (query token, key token) pair of a source
/// sequence. Shared by all heads; row-major (query, key).
struct BiasIndex {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> entry;
    int at(std::size_t i, std::size_t j) const { return entry[i * cols + j]; }
};

/// Throws InputError when `n` exceeds the tree's token coverage.
BiasIndex encoder_bias_index(const StructureTree& tree, const BiasTable& table, std::size_t n);

/// Materializes one (n x n) matrix per head: b[i][j] = B_h[index(i, j)].
std::vector<Eigen::MatrixXd> gather_bias(const BiasTable& table, const BiasIndex& index);
std::vector<Eigen::MatrixXd> bias_matrix_enc(const StructureTree& tree, const BiasTable& table, std::size_t n);

/// Adds dL/db[i][j] of head h into the table gradient of its entry.
void scatter_bias_grad(BiasTable& table, const BiasIndex& index, int head, const Eigen::MatrixXd& d_bias);

/// Alignment-weighted bias for one decoder step and one input token:
/// b_tj = sum_l alignment[l] * B_h[pos(l, j)]. Only Full and Selected tables
/// are valid here.
double bias_vector_dec(const StructureTree& tree, const BiasTable& table, int head,
                       std::span<const double> alignment, std::size_t j);

/// Section-by-section grid of head-averaged biases, scaled by 100.
/// Rows are sources, columns targets, both in pre-order.
Eigen::MatrixXd dump_bias_table(const BiasTable& table, const StructureTree& tree);

}  // namespace hibrids
