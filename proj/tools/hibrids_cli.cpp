#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hibrids/align.hpp"
#include "hibrids/bias_table.hpp"
#include "hibrids/checkpoint.hpp"
#include "hibrids/decode.hpp"
#include "hibrids/docmodel.hpp"
#include "hibrids/errors.hpp"
#include "hibrids/metrics.hpp"
#include "hibrids/model.hpp"
#include "hibrids/qshier.hpp"
#include "hibrids/text.hpp"
#include "hibrids/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hibrids;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 bad input or runtime failure; usage errors use CLI11's codes.
constexpr int kExitFailure = 1;

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    const auto text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path, e.what());
    }
}

// FNV-1a over the file bytes; recorded so a run can be checked against its inputs.
std::string fingerprint(const std::string& path) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : read_text(path)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

// Prefixes a parse error location with the file (or record) it came from.
[[noreturn]] void rethrow_in(const std::string& context, const ParseError& e) {
    throw ParseError(e.where().empty() ? context : context + ":" + e.where(), e.message());
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("failed writing " + path);
}

std::string fixed(double v, int digits = 6) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Resolved settings shared by every subcommand. Config file values are read
// first; explicit flags override them.
struct Settings {
    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<std::string> placement_flag;
    std::optional<int> beam_flag;
    std::optional<int> no_repeat_flag;
    bool strict_flag = false;
    bool lenient_flag = false;
    std::string output;
    std::string manifest;

    json config = json::object();

    std::uint64_t seed() const {
        if (seed_flag) return *seed_flag;
        return config.value("seed", std::uint64_t{1});
    }
    Strictness strictness(Strictness fallback) const {
        if (strict_flag) return Strictness::Strict;
        if (lenient_flag) return Strictness::Lenient;
        if (config.contains("strictness")) {
            const auto s = config.at("strictness").get<std::string>();
            if (s == "strict") return Strictness::Strict;
            if (s == "lenient") return Strictness::Lenient;
            throw ConfigError("strictness must be strict or lenient, got " + s);
        }
        return fallback;
    }
    json section(const std::string& name) const {
        if (!config.contains(name)) return json::object();
        const auto& s = config.at(name);
        if (!s.is_object()) throw ConfigError("config." + name + " must be an object");
        return s;
    }
    ModelConfig model_config() const {
        auto c = ModelConfig::from_json(section("model"));
        if (placement_flag) c.placement = placement_from_string(*placement_flag);
        c.seed = seed();
        return c;
    }
    TrainOptions train_options() const {
        TrainOptions o;
        const auto t = section("train");
        try {
            o.steps = t.value("steps", o.steps);
            o.learning_rate = t.value("learning_rate", o.learning_rate);
            o.batch_size = t.value("batch_size", o.batch_size);
            o.max_grad_norm = t.value("max_grad_norm", o.max_grad_norm);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad train config: ") + e.what());
        }
        o.seed = seed();
        return o;
    }
    DecodeOptions decode_options() const {
        DecodeOptions o;
        const auto d = section("decode");
        try {
            o.beam = d.value("beam", o.beam);
            o.max_len = d.value("max_len", o.max_len);
            o.no_repeat_ngram = d.value("no_repeat_ngram", o.no_repeat_ngram);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad decode config: ") + e.what());
        }
        if (beam_flag) o.beam = *beam_flag;
        if (no_repeat_flag) o.no_repeat_ngram = *no_repeat_flag;
        if (o.beam < 1) throw ConfigError("beam must be at least 1");
        if (o.max_len < 1) throw ConfigError("max_len must be at least 1");
        if (o.no_repeat_ngram < 0) throw ConfigError("no_repeat_ngram must be non-negative");
        return o;
    }
    AlignmentConfig alignment_config() const {
        AlignmentConfig c;
        const auto a = section("alignment");
        try {
            c.w_embed = a.value("w_embed", c.w_embed);
            c.w_bigram = a.value("w_bigram", c.w_bigram);
            c.w_entity = a.value("w_entity", c.w_entity);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad alignment config: ") + e.what());
        }
        return c;
    }
    SelectionConfig selection_config() const {
        SelectionConfig c;
        const auto s = section("selection");
        try {
            c.min_sentences = s.value("min_sentences", c.min_sentences);
            c.min_words = s.value("min_words", c.min_words);
            c.max_normalized_density = s.value("max_normalized_density", c.max_normalized_density);
            c.min_doc_sections = s.value("min_doc_sections", c.min_doc_sections);
            c.min_avg_paragraphs_per_section =
                s.value("min_avg_paragraphs_per_section", c.min_avg_paragraphs_per_section);
            c.min_summary_paragraphs = s.value("min_summary_paragraphs", c.min_summary_paragraphs);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad selection config: ") + e.what());
        }
        return c;
    }
};

json model_config_json(const ModelConfig& c) { return c.to_json(); }

json train_options_json(const TrainOptions& o) {
    return {{"steps", o.steps},
            {"learning_rate", o.learning_rate},
            {"batch_size", o.batch_size},
            {"max_grad_norm", o.max_grad_norm},
            {"seed", o.seed}};
}

json decode_options_json(const DecodeOptions& o) {
    return {{"beam", o.beam}, {"max_len", o.max_len}, {"no_repeat_ngram", o.no_repeat_ngram}};
}

json alignment_json(const AlignmentConfig& c) {
    return {{"w_embed", c.w_embed}, {"w_bigram", c.w_bigram}, {"w_entity", c.w_entity}, {"embedder", "tf_cosine"}};
}

json selection_json(const SelectionConfig& c) {
    return {{"min_sentences", c.min_sentences},
            {"min_words", c.min_words},
            {"max_normalized_density", c.max_normalized_density},
            {"min_doc_sections", c.min_doc_sections},
            {"min_avg_paragraphs_per_section", c.min_avg_paragraphs_per_section},
            {"min_summary_paragraphs", c.min_summary_paragraphs}};
}

std::string strictness_name(Strictness s) { return s == Strictness::Strict ? "strict" : "lenient"; }

// The manifest goes next to the main output, or to the working directory
// when the output is standard output.
std::string manifest_path(const Settings& s) {
    if (!s.manifest.empty()) return s.manifest;
    if (s.output.empty() || s.output == "-") return "manifest.json";
    const auto parent = fs::path(s.output).parent_path();
    return (parent / "manifest.json").string();
}

void write_manifest(const Settings& s, const std::string& command, const std::vector<std::string>& argv,
                    const std::vector<std::string>& inputs, const json& resolved) {
    json in = json::array();
    for (const auto& p : inputs) in.push_back({{"path", p}, {"fnv1a64", fingerprint(p)}});
    json m = {{"tool", "hibrids"},
              {"version", kVersion},
              {"command", command},
              {"argv", argv},
              {"seed", s.seed()},
              {"inputs", in},
              {"output", s.output.empty() ? "-" : s.output},
              {"resolved", resolved}};
    if (!s.config_path.empty()) m["config_file"] = s.config_path;
    write_text(manifest_path(s), m.dump(2) + "\n");
}

// Task corpora used by train and decode.
struct Sample {
    std::string id;
    Document document;
    std::string target;
};

std::vector<Sample> load_samples(const std::string& path) {
    const auto j = read_json(path);
    if (!j.is_object() || !j.contains("samples") || !j.at("samples").is_array()) {
        throw ParseError(path, "expected {\"samples\": [...]}");
    }
    std::vector<Sample> out;
    const auto& arr = j.at("samples");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = path + ":samples[" + std::to_string(i) + "]";
        const auto& s = arr[i];
        if (!s.is_object() || !s.contains("document")) throw ParseError(where, "missing document");
        Sample smp;
        smp.id = s.value("id", std::to_string(i));
        try {
            smp.document = document_from_json(s.at("document"));
        } catch (const ParseError& e) {
            rethrow_in(where + ".document", e);
        }
        if (s.contains("target")) {
            if (!s.at("target").is_string()) throw ParseError(where + ".target", "expected a string");
            smp.target = s.at("target").get<std::string>();
        }
        out.push_back(std::move(smp));
    }
    return out;
}

json samples_to_json(const std::vector<TaskSample>& samples) {
    json arr = json::array();
    for (const auto& s : samples) {
        arr.push_back({{"id", s.id}, {"document", document_to_json(s.source)}, {"target", s.target}});
    }
    return {{"samples", arr}};
}

StructureTree load_tree(const std::string& path) { return parse_document(load_document(path)); }

// ---------------------------------------------------------------------------
// Subcommands. Each returns the main output text.

std::string run_positions(const StructureTree& tree, bool include_root) {
    std::ostringstream out;
    out << "src_id,src_label,dst_id,dst_label,path_len,lvl_diff,relation\n";
    const int first = include_root ? 0 : 1;
    const int n = static_cast<int>(tree.size());
    for (int a = first; a < n; ++a) {
        for (int b = first; b < n; ++b) {
            const auto pos = tree_position(tree, a, b);
            out << a << ',' << csv_field(tree.node(a).label) << ',' << b << ',' << csv_field(tree.node(b).label)
                << ',' << pos.path_len << ',' << pos.lvl_diff << ',' << to_string(classify_relation(tree, a, b))
                << '\n';
        }
    }
    return out.str();
}

std::string run_relations(const std::vector<std::string>& docs, bool include_root) {
    RelationStats total;
    for (const auto& p : docs) {
        const auto stats = relation_stats(load_tree(p), include_root);
        for (std::size_t k = 0; k < kRelationKindCount; ++k) {
            total.section_pairs[k] += stats.section_pairs[k];
            total.token_pairs[k] += stats.token_pairs[k];
        }
    }
    const auto sf = total.section_fractions();
    const auto tf = total.token_fractions();
    std::ostringstream out;
    out << "relation,section_pairs,section_fraction,token_pairs,token_fraction\n";
    for (std::size_t k = 0; k < kRelationKindCount; ++k) {
        out << to_string(static_cast<RelationKind>(k)) << ',' << total.section_pairs[k] << ',' << fixed(sf[k]) << ','
            << total.token_pairs[k] << ',' << fixed(tf[k]) << '\n';
    }
    out << "selected," << (total.total_section_pairs() - total.section_pairs[kRelationKindCount - 1]) << ','
        << fixed(total.selected_section_fraction()) << ','
        << (total.total_token_pairs() - total.token_pairs[kRelationKindCount - 1]) << ','
        << fixed(total.selected_token_fraction()) << '\n';
    return out.str();
}

std::string run_sectok(const StructureTree& tree, SectionTokenMode mode) {
    const auto marked = insert_section_tokens(tree, mode);
    json sections = json::array();
    for (const auto& node : marked.nodes()) {
        sections.push_back({{"id", node.id},
                            {"label", node.label},
                            {"level", node.level},
                            {"span", {node.span.begin, node.span.end}}});
    }
    json j = {{"tokens", marked.tokens()}, {"section_of", marked.token_to_section()}, {"sections", sections}};
    return j.dump(2) + "\n";
}

Vocabulary build_vocab(const std::vector<Sample>& samples) {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& s : samples) {
        corpus.push_back(parse_document(s.document).tokens());
        corpus.push_back(tokenize(s.target));
    }
    return Vocabulary::build(corpus);
}

std::string run_align(const std::vector<CorpusRecord>& corpus, const AlignmentConfig& cfg) {
    json records = json::array();
    for (const auto& rec : corpus) {
        const auto tree = parse_document(rec.document);
        const auto owners = paragraph_owners(tree);
        std::vector<std::string> paragraphs;
        paragraphs.insert(paragraphs.end(), tree.root().paragraphs.begin(), tree.root().paragraphs.end());
        for (std::size_t id = 1; id < tree.size(); ++id) {
            const auto& ps = tree.node(static_cast<int>(id)).paragraphs;
            paragraphs.insert(paragraphs.end(), ps.begin(), ps.end());
        }
        json summary = json::array();
        for (std::size_t p = 0; p < rec.summary_paragraphs.size(); ++p) {
            json sentences = json::array();
            std::vector<std::size_t> selected;
            for (std::size_t s = 0; s < rec.summary_paragraphs[p].size(); ++s) {
                const auto& sentence = rec.summary_paragraphs[p][s];
                if (paragraphs.empty()) throw InputError(rec.id + ": document has no paragraphs");
                const auto a = align_sentence(sentence, paragraphs, cfg);
                sentences.push_back({{"sentence", s},
                                     {"text", sentence},
                                     {"paragraph", a.paragraph},
                                     {"section", owners[a.paragraph]},
                                     {"section_label", tree.node(owners[a.paragraph]).label},
                                     {"embed", a.score.embed},
                                     {"bigram", a.score.bigram},
                                     {"entity", a.score.entity},
                                     {"combined", a.score.combined}});
                if (std::find(selected.begin(), selected.end(), a.paragraph) == selected.end()) {
                    selected.push_back(a.paragraph);
                }
            }
            std::sort(selected.begin(), selected.end());
            summary.push_back({{"summary_paragraph", p}, {"sentences", sentences}, {"paragraphs", selected}});
        }
        records.push_back({{"id", rec.id}, {"summary_paragraphs", summary}});
    }
    return json{{"records", records}}.dump(2) + "\n";
}

std::string run_filter(const std::vector<CorpusRecord>& corpus, const SelectionConfig& cfg,
                       const std::string& histogram_path) {
    const auto result = select_paragraphs(corpus, cfg);
    std::ostringstream hist;
    hist << "stage,rejected\n";
    for (std::size_t k = 0; k < kFilterStageCount; ++k) {
        hist << to_string(static_cast<FilterStage>(k)) << ',' << result.rejected[k] << '\n';
    }
    hist << "accepted," << result.accepted_count() << '\n';
    if (!histogram_path.empty()) write_text(histogram_path, hist.str());
    else std::cerr << hist.str();

    std::ostringstream out;
    out << "record_id,paragraph,verdict,rejected_by,sentences,words,normalized_density\n";
    for (const auto& v : result.verdicts) {
        out << csv_field(v.record_id) << ',' << v.paragraph << ',' << (v.accepted ? "accept" : "reject") << ','
            << (v.accepted ? "" : to_string(v.rejected_by)) << ',' << v.sentences << ',' << v.words << ','
            << fixed(v.normalized_density) << '\n';
    }
    return out.str();
}

std::string run_dump_bias(const LoadedModel& lm, const StructureTree& tree, const std::string& which) {
    const BiasTable* table = which == "decoder" ? lm.model.decoder_bias() : lm.model.encoder_bias();
    if (!table) {
        throw ConfigError("checkpoint placement " + std::string(to_string(lm.model.config().placement)) +
                          " has no " + which + " bias table");
    }
    const auto grid = dump_bias_table(*table, tree);
    std::ostringstream out;
    out << "src\\dst";
    for (std::size_t b = 0; b < tree.size(); ++b) out << ',' << b;
    out << '\n';
    for (Eigen::Index a = 0; a < grid.rows(); ++a) {
        out << a;
        for (Eigen::Index b = 0; b < grid.cols(); ++b) out << ',' << fixed(grid(a, b));
        out << '\n';
    }
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structure-aware summarization toolkit: document trees, biased attention, question-summary "
                 "hierarchies, evaluation and corpus alignment."};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Settings s;
    const std::vector<std::string> raw_args(argv, argv + argc);

    // Options that every subcommand understands.
    auto common = [&s](CLI::App* sub) {
        sub->add_option("--config", s.config_path, "JSON config; explicit flags override it")->check(CLI::ExistingFile);
        sub->add_option("--seed", s.seed_flag, "Random seed");
        sub->add_option("-o,--output", s.output, "Main output file (default: standard output)");
        sub->add_option("--manifest", s.manifest, "Manifest path (default: manifest.json beside the output)");
    };
    auto strictness = [&s](CLI::App* sub) {
        auto* st = sub->add_flag("--strict", s.strict_flag, "Reject malformed input");
        auto* le = sub->add_flag("--lenient", s.lenient_flag, "Repair malformed input");
        st->excludes(le);
    };
    const std::string placement_help = "none, enc, dec, enc-selected, dec-selected, tok-linear, sec-linear, enc-dec";

    std::function<void()> action;

    // positions
    std::string doc_path;
    bool include_root = false;
    auto* positions = app.add_subcommand("positions", "Tree positions and relations for every section pair (CSV)");
    common(positions);
    positions->add_option("document", doc_path, "Document JSON")->required()->check(CLI::ExistingFile);
    positions->add_flag("--include-root", include_root, "Include the virtual root section");
    positions->callback([&] {
        action = [&] {
            write_manifest(s, "positions", raw_args, {doc_path}, {{"include_root", include_root}});
            write_text(s.output, run_positions(load_tree(doc_path), include_root));
        };
    });

    // relations
    std::vector<std::string> doc_paths;
    auto* relations = app.add_subcommand("relations", "Relation-class histogram over one or more documents (CSV)");
    common(relations);
    relations->add_option("documents", doc_paths, "Document JSON files")->required()->check(CLI::ExistingFile);
    relations->add_flag("--include-root", include_root, "Include the virtual root section");
    relations->callback([&] {
        action = [&] {
            write_manifest(s, "relations", raw_args, doc_paths, {{"include_root", include_root}});
            write_text(s.output, run_relations(doc_paths, include_root));
        };
    });

    // sectok
    std::string sectok_mode = "uniform";
    auto* sectok = app.add_subcommand("sectok", "Insert section marker tokens (JSON)");
    common(sectok);
    sectok->add_option("document", doc_path, "Document JSON")->required()->check(CLI::ExistingFile);
    sectok->add_option("--mode", sectok_mode, "uniform or leveled")
        ->check(CLI::IsMember({"uniform", "leveled"}))
        ->capture_default_str();
    sectok->callback([&] {
        action = [&] {
            write_manifest(s, "sectok", raw_args, {doc_path}, {{"mode", sectok_mode}});
            const auto mode = sectok_mode == "leveled" ? SectionTokenMode::Leveled : SectionTokenMode::Uniform;
            write_text(s.output, run_sectok(load_tree(doc_path), mode));
        };
    });

    // linearize
    std::string hier_path;
    bool rooted = false;
    auto* lin = app.add_subcommand("linearize", "Hierarchy JSON to marker-annotated text");
    common(lin);
    lin->add_option("hierarchy", hier_path, "Hierarchy JSON")->required()->check(CLI::ExistingFile);
    lin->add_flag("--rooted", rooted, "Omit the root question and separator");
    lin->callback([&] {
        action = [&] {
            write_manifest(s, "linearize", raw_args, {hier_path}, {{"layout", rooted ? "rooted" : "full"}});
            const auto h = load_hierarchy(hier_path);
            write_text(s.output, linearize_text(h, rooted ? QSLayout::Rooted : QSLayout::Full) + "\n");
        };
    });

    // parse
    std::string text_path;
    std::string root_question;
    auto* parse = app.add_subcommand("parse", "Marker-annotated text to hierarchy JSON");
    common(parse);
    strictness(parse);
    parse->add_option("text", text_path, "Linearized text file")->required()->check(CLI::ExistingFile);
    parse->add_flag("--rooted", rooted, "Input omits the root question");
    parse->add_option("--root-question", root_question, "Root question for rooted input");
    parse->callback([&] {
        action = [&] {
            const auto mode = s.strictness(Strictness::Strict);
            write_manifest(s, "parse", raw_args, {text_path},
                           {{"strictness", strictness_name(mode)},
                            {"layout", rooted ? "rooted" : "full"},
                            {"root_question", root_question}});
            QSHierarchy h;
            try {
                h = parse_linearized_text(read_text(text_path), mode, rooted ? QSLayout::Rooted : QSLayout::Full,
                                          root_question);
            } catch (const ParseError& e) {
                rethrow_in(text_path, e);
            }
            write_text(s.output, hierarchy_to_json(h).dump(2) + "\n");
        };
    });

    // encode-task
    std::vector<std::string> task_docs, task_hiers;
    std::string task_name = "hier";
    std::vector<std::size_t> keep_paragraphs;
    auto* enc = app.add_subcommand("encode-task", "Build a training corpus from documents and hierarchies (JSON)");
    common(enc);
    strictness(enc);
    enc->add_option("--doc", task_docs, "Document JSON (repeat, paired with --hier)")
        ->required()
        ->check(CLI::ExistingFile);
    enc->add_option("--hier", task_hiers, "Hierarchy JSON (repeat)")->required()->check(CLI::ExistingFile);
    enc->add_option("--task", task_name, "hier or childq")
        ->check(CLI::IsMember({"hier", "childq"}))
        ->capture_default_str();
    enc->add_option("--paragraphs", keep_paragraphs,
                    "Keep only these paragraph indices (document order) and their ancestor titles")
        ->delimiter(',');
    enc->callback([&] {
        action = [&] {
            if (task_docs.size() != task_hiers.size()) throw InputError("--doc and --hier must be given in pairs");
            const auto mode = s.strictness(Strictness::Strict);
            std::vector<std::string> inputs = task_docs;
            inputs.insert(inputs.end(), task_hiers.begin(), task_hiers.end());
            write_manifest(s, "encode-task", raw_args, inputs,
                           {{"task", task_name}, {"strictness", strictness_name(mode)}, {"paragraphs", keep_paragraphs}});
            std::vector<TaskSample> samples;
            for (std::size_t i = 0; i < task_docs.size(); ++i) {
                Document doc = load_document(task_docs[i]);
                if (!keep_paragraphs.empty()) doc = build_task_input(parse_document(doc), keep_paragraphs).to_document();
                const auto h = load_hierarchy(task_hiers[i]);
                const auto stem = fs::path(task_hiers[i]).stem().string();
                if (task_name == "hier") {
                    auto t = encode_hier_task(doc, h);
                    t.id = stem;
                    samples.push_back(std::move(t));
                } else {
                    auto ts = encode_childq_tasks(doc, h, mode);
                    for (auto& t : ts) {
                        t.id = stem + "#" + t.id;
                        samples.push_back(std::move(t));
                    }
                }
            }
            write_text(s.output, samples_to_json(samples).dump(2) + "\n");
        };
    });

    // train
    std::string corpus_path, checkpoint_path, trace_path;
    std::optional<int> steps_flag;
    std::optional<double> lr_flag;
    auto* train = app.add_subcommand("train", "Train a model on a task corpus; writes a checkpoint");
    common(train);
    train->add_option("corpus", corpus_path, "Task corpus JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--placement", s.placement_flag, placement_help);
    train->add_option("--steps", steps_flag, "SGD steps");
    train->add_option("--lr", lr_flag, "Learning rate");
    train->add_option("--trace", trace_path, "Per-step loss CSV");
    train->callback([&] {
        action = [&] {
            auto cfg = s.model_config();
            auto opts = s.train_options();
            if (steps_flag) opts.steps = *steps_flag;
            if (lr_flag) opts.learning_rate = *lr_flag;
            if (opts.steps < 0) throw ConfigError("steps must be non-negative");
            if (s.output.empty() || s.output == "-") throw InputError("train needs --output for the checkpoint");
            const auto samples = load_samples(corpus_path);
            if (samples.empty()) throw InputError(corpus_path + ": no samples");
            const auto vocab = build_vocab(samples);
            cfg.vocab_size = vocab.size();
            cfg.validate();
            write_manifest(s, "train", raw_args, {corpus_path},
                           {{"model", model_config_json(cfg)}, {"train", train_options_json(opts)}});
            std::vector<EncodedSample> data;
            for (const auto& smp : samples) data.push_back(encode_sample(vocab, smp.document, smp.target));
            Model model(cfg);
            const auto losses = train_toy(model, data, opts);
            save_checkpoint(s.output, model, vocab);
            std::ostringstream trace;
            trace << "step,loss\n";
            for (std::size_t i = 0; i < losses.size(); ++i) trace << i << ',' << std::setprecision(17) << losses[i] << '\n';
            if (!trace_path.empty()) write_text(trace_path, trace.str());
            std::cerr << "trained " << opts.steps << " steps";
            if (!losses.empty()) std::cerr << ", first loss " << fixed(losses.front());
            std::cerr << ", final loss " << fixed(model.loss(data)) << ", token accuracy "
                      << fixed(token_accuracy(model, data), 4) << "\n";
        };
    });

    // decode
    bool as_hierarchy = false;
    std::optional<int> max_len_flag;
    auto* dec = app.add_subcommand("decode", "Generate targets for a task corpus (JSON)");
    common(dec);
    strictness(dec);
    dec->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
    dec->add_option("corpus", corpus_path, "Task corpus JSON")->required()->check(CLI::ExistingFile);
    dec->add_option("--beam", s.beam_flag, "Beam size (1 = greedy)");
    dec->add_option("--no-repeat-ngram", s.no_repeat_flag, "Block repeated n-grams of this size (0 = off)");
    dec->add_option("--max-len", max_len_flag, "Maximum generated tokens");
    dec->add_flag("--hierarchy", as_hierarchy,
                  "Parse each output as a rooted hierarchy whose root question is the first front-matter line");
    dec->callback([&] {
        action = [&] {
            auto opts = s.decode_options();
            if (max_len_flag) opts.max_len = *max_len_flag;
            if (opts.max_len < 1) throw ConfigError("max_len must be at least 1");
            const auto mode = s.strictness(Strictness::Lenient);
            write_manifest(s, "decode", raw_args, {checkpoint_path, corpus_path},
                           {{"decode", decode_options_json(opts)},
                            {"hierarchy", as_hierarchy},
                            {"strictness", strictness_name(mode)}});
            const auto lm = load_checkpoint(checkpoint_path);
            const auto samples = load_samples(corpus_path);
            json out = json::array();
            for (const auto& smp : samples) {
                const auto enc_sample = encode_sample(lm.vocab, smp.document, smp.target);
                const auto hyp = decode(lm.model, enc_sample.tree, enc_sample.source, opts);
                const auto tokens = lm.vocab.decode(hyp.tokens);
                json rec = {{"id", smp.id},
                            {"text", join(tokens)},
                            {"log_prob", hyp.log_prob},
                            {"score", hyp.score},
                            {"finished", hyp.finished}};
                if (as_hierarchy) {
                    const std::string rq = smp.document.front.empty() ? std::string{} : smp.document.front.front();
                    try {
                        rec["hierarchy"] = hierarchy_to_json(parse_linearized(tokens, mode, QSLayout::Rooted, rq));
                    } catch (const ParseError& e) {
                        rethrow_in("sample " + smp.id, e);
                    }
                }
                out.push_back(rec);
            }
            write_text(s.output, json{{"samples", out}}.dump(2) + "\n");
        };
    });

    // eval
    std::string gen_path, ref_path, corrected_path, csv_path;
    auto* eval = app.add_subcommand("eval", "Score generated hierarchies against references (JSON report, table)");
    common(eval);
    eval->add_option("generated", gen_path, "Generated hierarchy set")->required()->check(CLI::ExistingFile);
    eval->add_option("reference", ref_path, "Reference hierarchy set")->required()->check(CLI::ExistingFile);
    eval->add_option("--corrected", corrected_path, "Corrected hierarchies for edit counts")
        ->check(CLI::ExistingFile);
    eval->add_option("--csv", csv_path, "Per-sample CSV");
    eval->callback([&] {
        action = [&] {
            std::vector<std::string> inputs = {gen_path, ref_path};
            if (!corrected_path.empty()) inputs.push_back(corrected_path);
            write_manifest(s, "eval", raw_args, inputs, {{"edit_counts", !corrected_path.empty()}});
            const auto gen = load_hierarchy_set(gen_path);
            const auto ref = load_hierarchy_set(ref_path);
            std::optional<std::map<std::string, QSHierarchy>> cor;
            if (!corrected_path.empty()) cor = load_hierarchy_set(corrected_path);
            const auto report = evaluate_run(gen, ref, cor ? &*cor : nullptr);
            if (s.output.empty() || s.output == "-") {
                std::cout << report_to_json(report).dump(2) << "\n";
                std::cerr << report_table(report);
            } else {
                write_text(s.output, report_to_json(report).dump(2) + "\n");
                std::cout << report_table(report);
            }
            if (!csv_path.empty()) write_text(csv_path, report_csv(report));
        };
    });

    // align
    std::vector<std::string> corpus_paths;
    auto* align = app.add_subcommand("align", "Align summary sentences to document paragraphs (JSON)");
    common(align);
    align->add_option("corpus", corpus_paths, "Corpus JSON files")->required()->check(CLI::ExistingFile);
    align->callback([&] {
        action = [&] {
            const auto cfg = s.alignment_config();
            write_manifest(s, "align", raw_args, corpus_paths, {{"alignment", alignment_json(cfg)}});
            std::vector<CorpusRecord> corpus;
            for (const auto& p : corpus_paths) {
                auto part = load_corpus(p);
                corpus.insert(corpus.end(), part.begin(), part.end());
            }
            write_text(s.output, run_align(corpus, cfg));
        };
    });

    // filter
    std::string histogram_path;
    auto* filter = app.add_subcommand("filter", "Apply the summary-paragraph selection filters (CSV verdicts)");
    common(filter);
    filter->add_option("corpus", corpus_paths, "Corpus JSON files")->required()->check(CLI::ExistingFile);
    filter->add_option("--histogram", histogram_path, "Rejections per filter stage (CSV)");
    filter->callback([&] {
        action = [&] {
            const auto cfg = s.selection_config();
            write_manifest(s, "filter", raw_args, corpus_paths, {{"selection", selection_json(cfg)}});
            std::vector<CorpusRecord> corpus;
            for (const auto& p : corpus_paths) {
                auto part = load_corpus(p);
                corpus.insert(corpus.end(), part.begin(), part.end());
            }
            write_text(s.output, run_filter(corpus, cfg, histogram_path));
        };
    });

    // dump-bias
    std::string which_table = "encoder";
    auto* dump = app.add_subcommand("dump-bias", "Head-averaged bias between sections, times 100 (CSV grid)");
    common(dump);
    dump->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
    dump->add_option("document", doc_path, "Document JSON")->required()->check(CLI::ExistingFile);
    dump->add_option("--table", which_table, "encoder or decoder")
        ->check(CLI::IsMember({"encoder", "decoder"}))
        ->capture_default_str();
    dump->callback([&] {
        action = [&] {
            write_manifest(s, "dump-bias", raw_args, {checkpoint_path, doc_path}, {{"table", which_table}});
            const auto lm = load_checkpoint(checkpoint_path);
            write_text(s.output, run_dump_bias(lm, load_tree(doc_path), which_table));
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (!s.config_path.empty()) {
            s.config = read_json(s.config_path);
            if (!s.config.is_object()) throw ConfigError(s.config_path + ": config must be a JSON object");
        }
        if (action) action();
    } catch (const ParseError& e) {
        std::cerr << "error: parse: " << e.what() << "\n";
        return kExitFailure;
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitFailure;
    } catch (const InputError& e) {
        std::cerr << "error: input: " << e.what() << "\n";
        return kExitFailure;
    } catch (const LookupError& e) {
        std::cerr << "error: lookup: " << e.what() << "\n";
        return kExitFailure;
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: training: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return 0;
}
