// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "hibrids/align.hpp"
#include "hibrids/decode.hpp"
#include "hibrids/docmodel.hpp"
#include "hibrids/errors.hpp"
#include "hibrids/metrics.hpp"
#include "hibrids/model.hpp"
#include "hibrids/qshier.hpp"
#include "hibrids/text.hpp"
#include "hibrids/train.hpp"
#include "oracles.hpp"

using namespace hibrids;
using namespace hibrids::oracles;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects failures; the first few are kept for the report.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (ok) return;
        ++failures_;
        if (messages_.size() < 3) messages_.push_back(what);
    }
    bool ok() const { return failures_ == 0; }
    long checks() const { return checks_; }
    std::string failures() const {
        std::string out = std::to_string(failures_) + " failed";
        for (const auto& m : messages_) out += "; " + m;
        return out;
    }

private:
    long checks_ = 0;
    long failures_ = 0;
    std::vector<std::string> messages_;
};

std::string fmt(double v, int digits = 3) {
    std::ostringstream ss;
    ss << std::setprecision(digits) << v;
    return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> decoder_input(const EncodedSample& s) {
    std::vector<int> in{Vocabulary::kBos};
    in.insert(in.end(), s.target.begin(), s.target.end());
    return in;
}

const std::vector<Placement> kBiased{Placement::Enc,          Placement::Dec,       Placement::EncSelected,
                                     Placement::DecSelected,  Placement::TokLinear, Placement::SecLinear,
                                     Placement::EncDec};

// 1 -------------------------------------------------------------------------

Outcome tree_positions() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    Checker c;
    long pairs = 0;
    for (int t = 0; t < 100; ++t) {
        const int sections = 1 + static_cast<int>(rng() % 50);
        const auto doc = fixtures::random_document(rng, sections);
        const auto tree = parse_document(doc);
        const fixtures::TreeOracle oracle(doc);
        c.expect(oracle.size() == static_cast<int>(tree.size()), "node count");
        for (int a = 0; a < oracle.size(); ++a) {
            for (int b = 0; b < oracle.size(); ++b) {
                const auto pos = tree_position(tree, a, b);
                const int sign = a < b ? 1 : a > b ? -1 : 0;
                const int want_path = sign * oracle.bfs_distance(a, b);
                const int want_lvl = oracle.depth(a) - oracle.depth(b);
                const auto back = tree_position(tree, b, a);
                c.expect(pos.path_len == want_path && pos.lvl_diff == want_lvl,
                         "tree " + std::to_string(t) + " pair " + std::to_string(a) + "," + std::to_string(b));
                c.expect(back.path_len == -pos.path_len && back.lvl_diff == -pos.lvl_diff, "antisymmetry");
                ++pairs;
            }
        }
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 10.0, "runtime " + fmt(secs) + " s");
    return {c.ok(), c.ok() ? std::to_string(pairs) + " ordered pairs on 100 trees match the BFS oracle"
                           : c.failures()};
}

// 2 -------------------------------------------------------------------------

Outcome outline_positions() {
    const auto tree = parse_document(fixtures::outline_document());
    // ids: 1 = section 1, 5 = section 1.2
    const bool labels = tree.node(1).label == "1" && tree.node(5).label == "1.2";
    const auto down = tree_position(tree, 1, 5);
    const auto up = tree_position(tree, 5, 1);
    const bool ok = labels && down.path_len == 1 && down.lvl_diff == -1 && up.path_len == -1 && up.lvl_diff == 1;
    return {ok, "(1 -> 1.2) = (" + std::to_string(down.path_len) + ", " + std::to_string(down.lvl_diff) +
                    "), (1.2 -> 1) = (" + std::to_string(up.path_len) + ", " + std::to_string(up.lvl_diff) + ")"};
}

// 3 -------------------------------------------------------------------------

Outcome zero_bias_reduction() {
    const auto data = fixtures::structured_copy_data(10, 303);
    auto cfg = fixtures::small_config(data.vocab.size(), Placement::None, 17);
    const Model plain(cfg);
    double worst = 0.0;
    for (auto p : kBiased) {
        cfg.placement = p;
        const Model biased(cfg);
        for (const auto& s : data.samples) {
            const auto in = decoder_input(s);
            worst = std::max(worst, (plain.forward(s.tree, s.source, in) - biased.forward(s.tree, s.source, in))
                                        .cwiseAbs()
                                        .maxCoeff());
        }
    }
    return {worst < 1e-12,
            std::to_string(kBiased.size()) + " placements x 10 inputs, max |delta logit| = " + fmt(worst)};
}

// 4 -------------------------------------------------------------------------

Outcome gradient_fidelity() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = fixtures::structured_copy_data(3, 404);
    std::mt19937_64 rng(44);
    int checked = 0;
    double worst = 0.0;
    for (auto p : kBiased) {
        Model model(fixtures::small_config(data.vocab.size(), p, 23));
        fixtures::randomize_bias(model, rng);
        for (BiasTable* table : {model.encoder_bias(), model.decoder_bias()}) {
            if (!table) continue;
            const auto g = fixtures::check_bias_gradients(model, data.samples, *table, 8, rng, 1e-4);
            checked += g.checked;
            worst = std::max(worst, g.max_rel_error);
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = checked >= 50 && worst < 1e-4 && secs < 120.0;
    return {ok, std::to_string(checked) + " table entries, max relative error " + fmt(worst) + ", " + fmt(secs) +
                    " s"};
}

// 5 -------------------------------------------------------------------------

Outcome linearization() {
    Checker c;
    const auto h = fixtures::sample_hierarchy();
    const std::string got = linearize_text(h, QSLayout::Rooted);
    c.expect(got == "A1 [L_DOWN] Q1.1 [QS_SEP] A1.1 [L_SAME] Q1.2 [QS_SEP] A1.2 [L_DOWN] Q1.2.1 [QS_SEP] A1.2.1",
             "sample hierarchy string: " + got);
    // Arrow spelling of the level markers, without separator tokens.
    const std::map<std::string, std::string> spelling{
        {"[L↓]", std::string(kLevelDown)}, {"[L↑]", std::string(kLevelUp)}, {"[L-]", std::string(kLevelSame)}};
    std::vector<std::string> arrows;
    for (const auto& t : split_whitespace("A1 [L↓] Q1.1 A1.1 [L-] Q1.2 A1.2 [L↓] Q1.2.1 A1.2.1")) {
        auto it = spelling.find(t);
        arrows.push_back(it == spelling.end() ? t : it->second);
    }
    std::vector<std::string> ours;
    for (const auto& t : split_whitespace(got)) {
        if (t != kQsSep) ours.push_back(t);
    }
    c.expect(ours == arrows, "sample hierarchy modulo spellings");

    std::mt19937_64 rng(505);
    int roundtrips = 0;
    for (int t = 0; t < 500; ++t) {
        const auto r = fixtures::random_hierarchy(rng, 10, 4);
        c.expect(parse_linearized(linearize(r), Strictness::Strict) == r, "full roundtrip " + std::to_string(t));
        ++roundtrips;
        if (r.roots.size() == 1) {
            const auto back = parse_linearized(linearize(r, QSLayout::Rooted), Strictness::Strict, QSLayout::Rooted,
                                               r.roots[0].question);
            c.expect(back == r, "rooted roundtrip " + std::to_string(t));
        }
    }

    const Tokens pool{"w", "x", "y", std::string(kQsSep), std::string(kLevelDown), std::string(kLevelUp),
                      std::string(kLevelSame)};
    int fuzz = 0;
    for (int t = 0; t < 10000; ++t) {
        Tokens seq;
        if (t % 2 == 0) {
            const int len = static_cast<int>(rng() % 24);
            for (int i = 0; i < len; ++i) seq.push_back(pool[rng() % pool.size()]);
        } else {
            seq = linearize(fixtures::random_hierarchy(rng, 10, 4), t % 4 == 1 ? QSLayout::Full : QSLayout::Rooted);
            seq.resize(rng() % (seq.size() + 1));
            for (int k = static_cast<int>(rng() % 3); k > 0 && !seq.empty(); --k) {
                seq[rng() % seq.size()] = pool[rng() % pool.size()];
            }
        }
        const auto layout = t % 3 == 0 ? QSLayout::Rooted : QSLayout::Full;
        try {
            const auto rows = rows_of(parse_linearized(seq, Strictness::Lenient, layout, "root?"));
            c.expect(rows == reference_repair(seq, layout, "root?"), "lenient repair: " + join(seq));
            if (layout == QSLayout::Full) c.expect(valid_rows(rows), "lenient validity: " + join(seq));
        } catch (const std::exception& e) {
            c.expect(false, "lenient parse threw on: " + join(seq));
        }
        ++fuzz;
    }
    return {c.ok(), c.ok() ? "sample hierarchy exact; " + std::to_string(roundtrips) + " strict roundtrips; " +
                                 std::to_string(fuzz) + " lenient fuzz sequences repaired"
                           : c.failures()};
}

// 6 -------------------------------------------------------------------------

Outcome hierarchy_f1_oracle() {
    Checker c;
    const auto shapes = all_forests(5);
    c.expect(shapes.size() == 64, "forest count " + std::to_string(shapes.size()));
    std::mt19937_64 rng(606);
    double worst = 0.0;
    long compared = 0;
    auto compare = [&](const QSHierarchy& g, const QSHierarchy& r) {
        const auto got = hierarchy_f1(g, r);
        const auto want = oracle_hier_f1(g, r);
        const double d = std::max({std::abs(got.precision - want.precision), std::abs(got.recall - want.recall),
                                   std::abs(got.f1 - want.f1)});
        worst = std::max(worst, d);
        c.expect(d <= 1e-9, "hier f1 mismatch");
        ++compared;
    };
    auto texts = [&](std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(kTextPool[rng() % kTextPool.size()]);
        return out;
    };
    // every pair of shapes up to 5 pairs, texts drawn from the pool
    for (const auto& gs : shapes) {
        for (const auto& rs : shapes) {
            for (int k = 0; k < 2; ++k) compare(from_parents(gs, texts(gs.size())), from_parents(rs, texts(rs.size())));
        }
    }
    // every text assignment for small trees
    std::vector<std::vector<int>> small_gen, small_ref;
    for (const auto& s : shapes) {
        if (s.size() <= 3) small_gen.push_back(s);
        if (s.size() <= 2) small_ref.push_back(s);
    }
    auto assignments = [](std::size_t n) {
        std::vector<std::vector<std::string>> out;
        std::size_t total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= kTextPool.size();
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<std::string> a;
            for (std::size_t i = 0, x = code; i < n; ++i, x /= kTextPool.size()) a.push_back(kTextPool[x % kTextPool.size()]);
            out.push_back(a);
        }
        return out;
    };
    for (const auto& gs : small_gen) {
        for (const auto& gt : assignments(gs.size())) {
            const auto g = from_parents(gs, gt);
            for (const auto& rs : small_ref) {
                for (const auto& rt : assignments(rs.size())) compare(g, from_parents(rs, rt));
            }
        }
    }
    // self-evaluation with distinct summaries
    int self = 0;
    for (int t = 0; t < 200; ++t) {
        const auto h = fixtures::random_hierarchy(rng, 10, 4);
        const auto s = hierarchy_f1(h, h);
        c.expect(s.precision == 1.0 && s.recall == 1.0 && s.f1 == 1.0, "self score");
        ++self;
    }
    const auto f = hierarchy_f1(fixtures::sample_hierarchy(), fixtures::sample_hierarchy());
    c.expect(f.precision == 1.0 && f.recall == 1.0 && f.f1 == 1.0, "sample hierarchy self score");
    return {c.ok(), c.ok() ? std::to_string(compared) + " pairs match the oracle (max diff " + fmt(worst) + "); " +
                                 std::to_string(self + 1) + " self-evaluations give (1, 1, 1)"
                           : c.failures()};
}

// 7 -------------------------------------------------------------------------

Outcome rouge_bleu_fixtures() {
    Checker c;
    c.expect(std::abs(rouge("the cat", "the cat sat", RougeVariant::R1).f1 - 0.8) < 1e-12, "cat fixture");
    for (const auto& t : kTextPool) {
        for (auto v : {RougeVariant::R1, RougeVariant::R2, RougeVariant::RL}) {
            const auto s = rouge(t, t, v);
            c.expect(s.precision == 1.0 && s.recall == 1.0 && s.f1 == 1.0, "identical rouge: " + t);
        }
        // BLEU-4 needs at least one 4-gram
        if (tokenize(t).size() >= 4) c.expect(std::abs(bleu4(t, t) - 1.0) < 1e-12, "identical bleu: " + t);
    }
    struct Fixture {
        std::string name;
        double got, want;
    };
    const double eps = kBleuEpsilon;
    // Hand counts: clipped n-gram matches over candidate and reference totals.
    const std::vector<Fixture> fixtures{
        {"R1 'the cat sat' / 'the cat'", rouge("the cat sat", "the cat", RougeVariant::R1).f1, 0.8},
        {"R2 'the cat sat' / 'the cat'", rouge("the cat sat", "the cat", RougeVariant::R2).f1, 2.0 / 3.0},
        {"RL 'the cat sat' / 'the cat'", rouge("the cat sat", "the cat", RougeVariant::RL).f1, 0.8},
        {"R1 clipped 'the the the' / 'the cat'", rouge("the the the", "the cat", RougeVariant::R1).f1, 0.4},
        {"R1 reversed", rouge("a b c d", "d c b a", RougeVariant::R1).f1, 1.0},
        {"R2 reversed", rouge("a b c d", "d c b a", RougeVariant::R2).f1, 0.0},
        {"RL reversed", rouge("a b c d", "d c b a", RougeVariant::RL).f1, 0.25},
        {"R1 case and punctuation", rouge("The Cat.", "the cat", RougeVariant::R1).f1, 0.8},
        {"R1 empty candidate", rouge("", "x", RougeVariant::R1).f1, 0.0},
        {"RL 'a b c b a' / 'b a c b'", rouge("a b c b a", "b a c b", RougeVariant::RL).f1, 2.0 / 3.0},
        {"R2 'a b a b' / 'a b'", rouge("a b a b", "a b", RougeVariant::R2).f1, 0.5},
        {"R1 disjoint", rouge("x y z", "a b c", RougeVariant::R1).f1, 0.0},
        {"R2 sat/lay", rouge("the cat sat on the mat", "the cat lay on the mat", RougeVariant::R2).f1, 0.6},
        {"R1 sat/lay", rouge("the cat sat on the mat", "the cat lay on the mat", RougeVariant::R1).f1, 5.0 / 6.0},
        {"RL sat/lay", rouge("the cat sat on the mat", "the cat lay on the mat", RougeVariant::RL).f1, 5.0 / 6.0},
        {"BLEU identical five words", bleu4("the quick brown fox jumps", "the quick brown fox jumps"), 1.0},
        {"BLEU short candidate", bleu4("a b c", "a b c d e f"), std::exp(-1.0) * std::pow(eps, 0.25)},
        {"BLEU one substitution at the end", bleu4("a b c d e", "a b c d f"),
         std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25)},
        {"BLEU repeated word", bleu4("the the the the", "the cat"), std::pow(0.25 * std::pow(eps, 3), 0.25)},
        {"BLEU sat/lay", bleu4("the cat sat on the mat", "the cat lay on the mat"),
         std::pow((5.0 / 6.0) * 0.6 * 0.25 * eps, 0.25)},
    };
    double worst = 0.0;
    for (const auto& f : fixtures) {
        const double d = std::abs(f.got - f.want);
        worst = std::max(worst, d);
        c.expect(d <= 1e-9, f.name + " = " + fmt(f.got, 12) + ", want " + fmt(f.want, 12));
    }
    return {c.ok(), c.ok() ? "cat R1 = 0.8; identical texts score 1; " + std::to_string(fixtures.size()) +
                                 " hand fixtures within " + fmt(worst)
                           : c.failures()};
}

// 8 -------------------------------------------------------------------------

Outcome edit_counts() {
    const auto t0 = std::chrono::steady_clock::now();
    Checker c;
    // Q1.1 is moved up beside Q1, then Q1.1.1 is moved under Q2.
    const auto generated = tree_of({{"", {"Q1", "Q2"}}, {"Q1", {"Q1.1"}}, {"Q1.1", {"Q1.1.1"}}});
    const auto step1 = tree_of({{"", {"Q1", "Q1.1", "Q2"}}, {"Q1.1", {"Q1.1.1"}}});
    const auto step2 = tree_of({{"", {"Q1", "Q1.1", "Q2"}}, {"Q2", {"Q1.1.1"}}});
    const int first = edit_count(generated, step1).steps;
    const int second = edit_count(step1, step2).steps;
    c.expect(first == 1, "Q1.1 reattachment took " + std::to_string(first));
    c.expect(second == 2, "Q1.1.1 reattachment took " + std::to_string(second));
    c.expect(edit_count(generated, generated).steps == 0, "identical trees");

    std::mt19937_64 rng(808);
    auto random_tree = [&](int n) {
        std::vector<std::pair<std::string, std::vector<std::string>>> edges{{"", {}}};
        std::vector<std::string> placed;
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (int i : order) {
            const std::string name = "Q" + std::to_string(i);
            const auto k = rng() % (placed.size() + 1);
            const std::string parent = k == placed.size() ? "" : placed[k];
            auto it = std::find_if(edges.begin(), edges.end(), [&](const auto& e) { return e.first == parent; });
            if (it == edges.end()) edges.push_back({parent, {name}});
            else it->second.push_back(name);
            placed.push_back(name);
        }
        return tree_of(edges);
    };
    int max_steps = 0;
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + static_cast<int>(rng() % 7);
        const auto a = random_tree(n), b = random_tree(n);
        const auto ab = edit_count(a, b), ba = edit_count(b, a);
        c.expect(!ab.capped && !ba.capped, "search capped");
        c.expect(ab.steps == ba.steps, "asymmetric pair " + std::to_string(t));
        max_steps = std::max(max_steps, ab.steps);
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 30.0, "runtime " + fmt(secs) + " s");
    return {c.ok(), c.ok() ? "worked example 1 and 2 steps; identical 0; 50 random pairs symmetric (max " +
                                 std::to_string(max_steps) + " steps), " + fmt(secs) + " s"
                           : c.failures()};
}

// 9 -------------------------------------------------------------------------

bool repeats_ngram(const std::vector<int>& tokens, std::size_t n) {
    std::set<std::vector<int>> seen;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        if (!seen.insert(std::vector<int>(tokens.begin() + static_cast<long>(i),
                                          tokens.begin() + static_cast<long>(i + n)))
                 .second) {
            return true;
        }
    }
    return false;
}

Outcome decoding_constraints() {
    Checker c;
    // An untrained model rambles, so the constraint has something to block.
    const auto data = fixtures::structured_copy_data(100, 909);
    auto cfg = fixtures::small_config(data.vocab.size(), Placement::Enc, 29);
    cfg.width = 16;
    cfg.ff_width = 32;
    const Model raw(cfg);
    int repeated = 0, unconstrained_repeated = 0;
    DecodeOptions blocked{4, 40, 5};
    DecodeOptions free_run{4, 40, 0};
    for (const auto& s : data.samples) {
        const auto h = decode(raw, s.tree, s.source, blocked);
        repeated += repeats_ngram(h.tokens, 5);
        unconstrained_repeated += repeats_ngram(decode(raw, s.tree, s.source, free_run).tokens, 5);
    }
    c.expect(repeated == 0, std::to_string(repeated) + " sequences repeat a 5-gram");

    Model trained(cfg);
    TrainOptions opts;
    opts.steps = 30;
    opts.learning_rate = 0.1;
    opts.max_grad_norm = 1.0;
    const std::vector<EncodedSample> train_set(data.samples.begin(), data.samples.begin() + 20);
    train_toy(trained, train_set, opts);
    int score_ok = 0, raw_ok = 0;
    for (const auto& s : train_set) {
        const auto greedy = decode(trained, s.tree, s.source, DecodeOptions{1, 20, 0});
        const auto beam = decode(trained, s.tree, s.source, DecodeOptions{4, 20, 0});
        score_ok += beam.score >= greedy.score - 1e-12;
        raw_ok += beam.log_prob >= greedy.log_prob - 1e-12;
    }
    c.expect(score_ok == 20, "beam below greedy on " + std::to_string(20 - score_ok) + " inputs");
    return {c.ok(), c.ok() ? "0/100 blocked outputs repeat a 5-gram (" + std::to_string(unconstrained_repeated) +
                                 "/100 without blocking); beam-4 length-normalized score >= greedy on 20/20 "
                                 "(raw log-prob on " + std::to_string(raw_ok) + "/20)"
                           : c.failures()};
}

// 10 ------------------------------------------------------------------------

struct OverfitRun {
    std::vector<double> losses;
    double accuracy = 0.0;
    int steps = 0;
};

OverfitRun overfit_once(const fixtures::ToyData& data) {
    ModelConfig cfg;
    cfg.vocab_size = data.vocab.size();
    cfg.width = 64;
    cfg.heads = 4;
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 2;
    cfg.ff_width = 128;
    cfg.placement = Placement::Enc;
    cfg.seed = 1010;
    Model model(cfg);
    TrainOptions opts;
    opts.steps = 50;
    opts.learning_rate = 0.1;
    opts.max_grad_norm = 1.0;
    OverfitRun run;
    while (run.steps < 2000) {
        const auto chunk = train_toy(model, data.samples, opts);
        run.losses.insert(run.losses.end(), chunk.begin(), chunk.end());
        run.steps += opts.steps;
        run.accuracy = token_accuracy(model, data.samples);
        if (run.accuracy >= 0.99) break;
    }
    return run;
}

Outcome overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = fixtures::structured_copy_data(8, 1010);
    const auto a = overfit_once(data);
    const auto b = overfit_once(data);
    const double secs = seconds_since(t0);
    const bool same = a.losses == b.losses && a.accuracy == b.accuracy;
    const bool ok = a.accuracy >= 0.99 && a.steps <= 2000 && same && secs < 300.0;
    return {ok, "token accuracy " + fmt(a.accuracy, 4) + " after " + std::to_string(a.steps) +
                    " steps (loss " + fmt(a.losses.front(), 4) + " -> " + fmt(a.losses.back(), 4) + "); rerun " +
                    (same ? "identical" : "DIFFERS") + "; " + fmt(secs) + " s for both runs"};
}

// 11 ------------------------------------------------------------------------

// Each document hides one marker token in a paragraph; the target is the
// title of the section that holds it.
constexpr int kProbeTrain = 1024;
constexpr int kProbeTest = 128;
struct ProbeData {
    Vocabulary vocab;
    std::vector<EncodedSample> train, test;
    std::vector<std::vector<int>> test_targets;
};

ProbeData probe_data(std::uint64_t seed) {
    static const std::vector<std::string> titles{"red",  "green", "blue", "cyan", "pink", "gray", "gold", "teal",
                                                 "navy", "lime",  "rose", "sand", "plum", "jade", "ruby", "opal"};
    static const std::vector<std::string> filler{"alpha", "beta", "gamma", "delta", "omega", "sigma"};
    std::mt19937_64 rng(seed);
    auto words = [&](int n) {
        std::vector<std::string> w;
        for (int i = 0; i < n; ++i) w.push_back(filler[rng() % filler.size()]);
        return w;
    };
    std::vector<Document> docs;
    std::vector<std::string> targets;
    for (int i = 0; i < kProbeTrain + kProbeTest; ++i) {
        auto pool = titles;
        std::shuffle(pool.begin(), pool.end(), rng);
        std::size_t next = 0;
        Document d;
        d.title = "doc";
        std::vector<SectionRecord*> all;
        for (int s = 0; s < 3; ++s) {
            d.sections.push_back(SectionRecord{pool[next++], {join(words(3))}, {}});
            const int subs = 1 + static_cast<int>(rng() % 2);
            for (int k = 0; k < subs; ++k) d.sections.back().subsections.push_back(SectionRecord{pool[next++], {join(words(3))}, {}});
        }
        for (auto& s : d.sections) {
            all.push_back(&s);
            for (auto& sub : s.subsections) all.push_back(&sub);
        }
        SectionRecord* chosen = all[rng() % all.size()];
        auto w = split_whitespace(chosen->paragraphs[0]);
        w.insert(w.begin() + static_cast<long>(rng() % (w.size() + 1)), "mark");
        chosen->paragraphs[0] = join(w);
        docs.push_back(d);
        targets.push_back(chosen->title);
    }
    std::vector<std::vector<std::string>> corpus;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        corpus.push_back(parse_document(docs[i]).tokens());
        corpus.push_back(tokenize(targets[i]));
    }
    ProbeData p{Vocabulary::build(corpus), {}, {}, {}};
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto s = encode_sample(p.vocab, docs[i], targets[i]);
        if (i < static_cast<std::size_t>(kProbeTrain)) {
            p.train.push_back(std::move(s));
        } else {
            p.test_targets.push_back(s.target);
            p.test.push_back(std::move(s));
        }
    }
    return p;
}

struct ProbeResult {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_exact = 0.0;
};

ProbeResult probe_once(const ProbeData& data, Placement placement) {
    ModelConfig cfg;
    cfg.vocab_size = data.vocab.size();
    cfg.width = 32;
    cfg.heads = 4;
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 1;
    cfg.ff_width = 64;
    cfg.placement = placement;
    cfg.seed = 1111;
    Model model(cfg);
    TrainOptions opts;
    opts.steps = 1000;
    opts.learning_rate = 0.5;
    opts.max_grad_norm = 1.0;
    opts.batch_size = 16;
    opts.seed = 11;
    train_toy(model, data.train, opts);
    ProbeResult r;
    r.train_loss = model.loss(data.train);
    r.train_accuracy = token_accuracy(model, data.train);
    int exact = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        const auto h = decode(model, data.test[i].tree, data.test[i].source, DecodeOptions{1, 3, 0});
        exact += h.tokens == data.test_targets[i];
    }
    r.test_exact = static_cast<double>(exact) / static_cast<double>(data.test.size());
    return r;
}

Outcome structure_probe() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = probe_data(1111);
    const std::vector<Placement> placements{Placement::None, Placement::Enc, Placement::TokLinear};
    std::ostringstream table;
    table << "    placement    train_loss  train_acc  test_exact\n";
    bool same = true;
    for (auto p : placements) {
        const auto a = probe_once(data, p);
        const auto b = probe_once(data, p);
        same = same && a.train_loss == b.train_loss && a.test_exact == b.test_exact &&
               a.train_accuracy == b.train_accuracy;
        table << "    " << std::left << std::setw(12) << to_string(p) << std::right << std::fixed
              << std::setprecision(4) << std::setw(11) << a.train_loss << std::setw(11) << a.train_accuracy
              << std::setw(12) << a.test_exact << "\n";
    }
    std::cout << table.str();
    const double secs = seconds_since(t0);
    return {same, std::to_string(kProbeTrain) + " train / " + std::to_string(kProbeTest) +
                      " test documents; accuracy table emitted; reruns " + (same ? "identical" : "DIFFER") + "; " +
                      fmt(secs) + " s (no ordering between placements is gated)"};
}

// 12 ------------------------------------------------------------------------

Outcome selection_filters() {
    Checker c;
    const auto corpus = load_corpus(std::string(HIBRIDS_TEST_DATA) + "/selection_fixture.json");
    const auto result = select_paragraphs(corpus, SelectionConfig{});
    // Hand labels: accept; too few sentences; too few words; verbatim copy;
    // accept at exactly 70 words; partial copy above the density bound.
    const std::vector<std::pair<bool, FilterStage>> labels{
        {true, FilterStage::Density},      {false, FilterStage::Sentences}, {false, FilterStage::Words},
        {false, FilterStage::Density},     {true, FilterStage::Density},    {false, FilterStage::Density}};
    c.expect(result.verdicts.size() == labels.size(), "verdict count");
    for (std::size_t i = 0; i < std::min(labels.size(), result.verdicts.size()); ++i) {
        const auto& v = result.verdicts[i];
        const bool match = v.accepted == labels[i].first && (v.accepted || v.rejected_by == labels[i].second);
        c.expect(match, "paragraph " + std::to_string(i) + " got " + (v.accepted ? "accept" : to_string(v.rejected_by)));
    }
    // The verbatim paragraph copies one document paragraph word for word.
    const auto tree = parse_document(corpus[0].document);
    const std::string copied = join(corpus[0].summary_paragraphs[3], " ");
    std::string doc_text;
    for (const auto& node : tree.nodes()) {
        for (const auto& p : node.paragraphs) doc_text += p + " ";
    }
    const auto d = extractive_density(copied, doc_text);
    c.expect(d.normalized_density == 1.0, "verbatim density " + fmt(d.normalized_density, 12));
    c.expect(result.verdicts.size() > 3 && result.verdicts[3].normalized_density == 1.0, "verdict density");
    return {c.ok(), c.ok() ? "6 fixture paragraphs labeled as expected (" + std::to_string(result.accepted_count()) +
                                 " accepted); verbatim copy density = 1.0"
                           : c.failures()};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        std::string name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "tree-position oracle", tree_positions},
        {2, "outline positions", outline_positions},
        {3, "zero-bias reduction", zero_bias_reduction},
        {4, "bias gradient fidelity", gradient_fidelity},
        {5, "linearization", linearization},
        {6, "hierarchy F1 oracle", hierarchy_f1_oracle},
        {7, "ROUGE/BLEU fixtures", rouge_bleu_fixtures},
        {8, "edit count", edit_counts},
        {9, "decoding constraints", decoding_constraints},
        {10, "overfit sanity", overfit},
        {11, "structure probe", structure_probe},
        {12, "selection filters", selection_filters},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << std::setw(2) << cr.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << cr.name
                  << ": " << o.detail << " [" << fmt(seconds_since(t0)) << " s]" << std::endl;
    }
    std::cout << (failed == 0 ? "all 12 criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
