#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <stdexcept>
#include <functional>

#include "hibrids/text.hpp"

namespace hibrids::fixtures {

Document outline_document() {
    Document d;
    d.title = "Report";
    d.front = {"front matter"};
    SectionRecord s1111{"Section 1.1.1.1", {"deepest text"}, {}};
    SectionRecord s111{"Section 1.1.1", {"third level text"}, {s1111}};
    SectionRecord s11{"Section 1.1", {"second level text"}, {s111}};
    SectionRecord s12{"Section 1.2", {"sibling text"}, {}};
    SectionRecord s1{"Section 1", {"top text"}, {s11, s12}};
    d.sections = {s1};
    return d;
}

QSHierarchy sample_hierarchy() {
    QSNode q121{"Q1.2.1", "A1.2.1", {}};
    QSNode q11{"Q1.1", "A1.1", {}};
    QSNode q12{"Q1.2", "A1.2", {q121}};
    QSNode q1{"Q1", "A1", {q11, q12}};
    return QSHierarchy{{q1}};
}

Document random_document(std::mt19937_64& rng, int sections, int max_paragraph_words) {
    static const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
    std::uniform_int_distribution<int> word(0, static_cast<int>(words.size()) - 1);
    std::uniform_int_distribution<int> count(0, max_paragraph_words);
    auto text = [&] {
        std::vector<std::string> w;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) w.push_back(words[static_cast<std::size_t>(word(rng))]);
        return join(w);
    };

    Document d;
    d.title = "doc";
    d.front = {text()};
    // rightmost path of the tree being built: nullptr stands for the root
    std::vector<SectionRecord*> path;
    for (int i = 0; i < sections; ++i) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(path.size()));
        const auto depth = static_cast<std::size_t>(pick(rng));  // attach under path[depth-1] (root when 0)
        path.resize(depth);
        auto& siblings = depth == 0 ? d.sections : path.back()->subsections;
        siblings.push_back(SectionRecord{"title " + std::to_string(i), {text()}, {}});
        path.push_back(&siblings.back());
    }
    return d;
}

QSHierarchy random_hierarchy(std::mt19937_64& rng, int max_pairs, int max_depth) {
    std::uniform_int_distribution<int> pairs(1, max_pairs);
    const int n = pairs(rng);
    QSHierarchy h;
    std::vector<QSNode*> path;
    std::uniform_int_distribution<int> len(1, 3);
    for (int i = 0; i < n; ++i) {
        const int limit = std::min(static_cast<int>(path.size()), max_depth - 1);
        std::uniform_int_distribution<int> pick(0, limit);
        const auto depth = static_cast<std::size_t>(i == 0 ? 0 : pick(rng));
        path.resize(depth);
        auto& siblings = depth == 0 ? h.roots : path.back()->children;
        std::vector<std::string> q, s;
        const int lq = len(rng), ls = len(rng);
        for (int k = 0; k < lq; ++k) q.push_back("q" + std::to_string(i) + "w" + std::to_string(k));
        for (int k = 0; k < ls; ++k) s.push_back("s" + std::to_string(i) + "w" + std::to_string(k));
        siblings.push_back(QSNode{join(q) + "?", join(s) + ".", {}});
        path.push_back(&siblings.back());
    }
    return h;
}

TreeOracle::TreeOracle(const Document& doc) {
    parent.push_back(-1);
    std::function<void(const SectionRecord&, int)> visit = [&](const SectionRecord& s, int p) {
        const int id = static_cast<int>(parent.size());
        parent.push_back(p);
        for (const auto& c : s.subsections) visit(c, id);
    };
    for (const auto& s : doc.sections) visit(s, 0);
    adjacency.resize(parent.size());
    for (std::size_t v = 1; v < parent.size(); ++v) {
        adjacency[v].push_back(parent[v]);
        adjacency[static_cast<std::size_t>(parent[v])].push_back(static_cast<int>(v));
    }
}

int TreeOracle::bfs_distance(int a, int b) const {
    std::vector<int> dist(parent.size(), -1);
    std::deque<int> queue{a};
    dist[static_cast<std::size_t>(a)] = 0;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        if (v == b) return dist[static_cast<std::size_t>(v)];
        for (int w : adjacency[static_cast<std::size_t>(v)]) {
            if (dist[static_cast<std::size_t>(w)] < 0) {
                dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
                queue.push_back(w);
            }
        }
    }
    return -1;
}

int TreeOracle::depth(int a) const {
    int d = 0;
    for (int v = a; parent[static_cast<std::size_t>(v)] >= 0; v = parent[static_cast<std::size_t>(v)]) ++d;
    return d;
}

ToyData structured_copy_data(int count, std::uint64_t seed) {
    static const std::vector<std::string> words{"red",  "green", "blue", "cyan",  "pink", "gray",
                                                "gold", "teal",  "navy", "lime", "rose", "sand"};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> word(0, static_cast<int>(words.size()) - 1);
    std::uniform_int_distribution<int> nsec(2, 3);
    std::vector<Document> docs;
    std::vector<std::string> targets;
    for (int i = 0; i < count; ++i) {
        Document d;
        d.title = "doc";
        std::vector<std::string> titles;
        const int k = nsec(rng);
        for (int s = 0; s < k; ++s) {
            std::string title = words[static_cast<std::size_t>(word(rng))];
            std::string body = words[static_cast<std::size_t>(word(rng))] + " " + words[static_cast<std::size_t>(word(rng))];
            SectionRecord rec{title, {body}, {}};
            if (s == 1) rec.subsections.push_back(SectionRecord{words[static_cast<std::size_t>(word(rng))], {}, {}});
            d.sections.push_back(rec);
            titles.push_back(title);
        }
        docs.push_back(d);
        targets.push_back(join(titles));
    }
    std::vector<std::vector<std::string>> corpus;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        corpus.push_back(parse_document(docs[i]).tokens());
        corpus.push_back(tokenize(targets[i]));
    }
    ToyData data{Vocabulary::build(corpus), {}};
    for (std::size_t i = 0; i < docs.size(); ++i) data.samples.push_back(encode_sample(data.vocab, docs[i], targets[i]));
    return data;
}

ModelConfig small_config(int vocab_size, Placement placement, std::uint64_t seed) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.width = 8;
    c.heads = 2;
    c.encoder_layers = 2;
    c.decoder_layers = 2;
    c.ff_width = 16;
    c.placement = placement;
    c.seed = seed;
    return c;
}

void randomize_bias(Model& model, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    for (BiasTable* t : {model.encoder_bias(), model.decoder_bias()}) {
        if (!t) continue;
        for (auto& v : t->values()) v = g(rng);
    }
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / scale;
}

namespace {

GradCheck check_entries(Model& model, std::span<const EncodedSample> batch, const std::vector<double*>& values,
                        const std::vector<double>& analytic, double step) {
    GradCheck out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        double* v = values[k];
        const double saved = *v;
        *v = saved + step;
        const double up = model.loss(batch);
        *v = saved - step;
        const double down = model.loss(batch);
        *v = saved;
        const double numeric = (up - down) / (2.0 * step);
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[k], numeric));
        ++out.checked;
    }
    return out;
}

}  // namespace

GradCheck check_bias_gradients(Model& model, std::span<const EncodedSample> batch, BiasTable& table, int count,
                               std::mt19937_64& rng, double step) {
    model.loss_and_gradients(batch);
    // entries reached by at least one token pair of the batch
    std::set<int> used;
    for (const auto& s : batch) {
        const auto n = s.source.size();
        if (table.kind() == BiasKind::TokenLinear) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) used.insert(table.linear_index(static_cast<int>(i) - static_cast<int>(j)));
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const int a = s.tree.section_of(i), b = s.tree.section_of(j);
                int e = kZeroEntry;
                switch (table.kind()) {
                    case BiasKind::Full: e = table.full_index(tree_position(s.tree, a, b)); break;
                    case BiasKind::Selected: e = table.relation_index(classify_relation(s.tree, a, b)); break;
                    case BiasKind::SectionLinear: e = table.linear_index(a - b); break;
                    case BiasKind::TokenLinear: break;
                }
                if (e != kZeroEntry) used.insert(e);
            }
        }
    }
    if (used.empty()) throw std::runtime_error("batch reaches no table entry");
    const std::vector<int> entries(used.begin(), used.end());
    std::vector<double*> values;
    std::vector<double> analytic;
    for (int k = 0; k < count; ++k) {
        const int h = static_cast<int>(rng() % static_cast<std::uint64_t>(table.heads()));
        const int e = entries[rng() % entries.size()];
        values.push_back(&table.value(h, e));
        analytic.push_back(table.grad(h, e));
    }
    return check_entries(model, batch, values, analytic, step);
}

GradCheck check_parameter_gradients(Model& model, std::span<const EncodedSample> batch, const std::string& name,
                                    int count, std::mt19937_64& rng, double step) {
    model.loss_and_gradients(batch);
    Tensor* target = nullptr;
    model.for_each_parameter([&](const std::string& n, Tensor& t) {
        if (n == name) target = &t;
    });
    if (!target) throw std::runtime_error("no parameter named " + name);
    std::vector<double*> values;
    std::vector<double> analytic;
    const auto size = static_cast<std::uint64_t>(target->value.size());
    for (int k = 0; k < count; ++k) {
        const auto i = static_cast<Eigen::Index>(rng() % size);
        values.push_back(target->value.data() + i);
        analytic.push_back(target->grad.data()[i]);
    }
    return check_entries(model, batch, values, analytic, step);
}

}  // namespace hibrids::fixtures
