#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hibrids/docmodel.hpp"
#include "hibrids/model.hpp"
#include "hibrids/qshier.hpp"

namespace hibrids::fixtures {

/// 1 { 1.1 { 1.1.1 { 1.1.1.1 } }, 1.2 }, with two front-matter words.
Document outline_document();

/// Q1/A1 { Q1.1/A1.1, Q1.2/A1.2 { Q1.2.1/A1.2.1 } } with symbolic texts.
QSHierarchy sample_hierarchy();

/// Random document with `sections` sections in random nesting.
Document random_document(std::mt19937_64& rng, int sections, int max_paragraph_words = 3);

/// Random hierarchy with 1..max_pairs pairs and depth <= max_depth; texts are
/// unique words so identities never collide.
QSHierarchy random_hierarchy(std::mt19937_64& rng, int max_pairs, int max_depth);

/// Independent structure oracle computed straight from the document record:
/// pre-order ids, parent links, BFS distances and depth-walk levels.
struct TreeOracle {
    explicit TreeOracle(const Document& doc);
    int size() const { return static_cast<int>(parent.size()); }
    int bfs_distance(int a, int b) const;
    int depth(int a) const;  // walks parent links

    std::vector<int> parent;  // -1 for root
    std::vector<std::vector<int>> adjacency;
};

/// Small synthetic structured-copy dataset: target copies each section title.
struct ToyData {
    Vocabulary vocab;
    std::vector<EncodedSample> samples;
};
ToyData structured_copy_data(int count, std::uint64_t seed);

ModelConfig small_config(int vocab_size, Placement placement, std::uint64_t seed = 7);

/// Fills every bias table of the model with N(0, scale^2) values.
void randomize_bias(Model& model, std::mt19937_64& rng, double scale = 0.5);

/// Central finite differences against analytic gradients.
struct GradCheck {
    int checked = 0;
    double max_rel_error = 0.0;
};
double relative_error(double analytic, double numeric);
/// Checks `count` random entries that the batch actually indexes.
GradCheck check_bias_gradients(Model& model, std::span<const EncodedSample> batch, BiasTable& table, int count,
                               std::mt19937_64& rng, double step = 1e-4);
GradCheck check_parameter_gradients(Model& model, std::span<const EncodedSample> batch, const std::string& name,
                                    int count, std::mt19937_64& rng, double step = 1e-4);

}  // namespace hibrids::fixtures
