#include "hibrids/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "hibrids/errors.hpp"

namespace hibrids {

namespace {

constexpr const char* kFormat = "hibrids-checkpoint-v1";

nlohmann::json entry_key(const BiasTable& table, int entry) {
    switch (table.kind()) {
        case BiasKind::Full: {
            auto pos = table.full_key(entry);
            return {{"path_len", pos.path_len}, {"lvl_diff", pos.lvl_diff}};
        }
        case BiasKind::Selected: return {{"relation", std::string(to_string(table.relation_key(entry)))}};
        case BiasKind::TokenLinear:
        case BiasKind::SectionLinear: return {{"offset", table.linear_key(entry)}};
    }
    return {};
}

RelationKind relation_from_string(const std::string& name) {
    for (std::size_t k = 0; k < kRelationKindCount; ++k) {
        auto kind = static_cast<RelationKind>(k);
        if (to_string(kind) == name) return kind;
    }
    throw ConfigError("unknown relation kind: " + name);
}

int entry_from_key(const BiasTable& table, const nlohmann::json& e) {
    const auto& b = table.bounds();
    switch (table.kind()) {
        case BiasKind::Full: {
            const int p = e.at("path_len").get<int>();
            const int l = e.at("lvl_diff").get<int>();
            if (p < -b.path || p > b.path || l < -b.level || l > b.level) {
                throw ConfigError("bias entry (" + std::to_string(p) + ", " + std::to_string(l) +
                                  ") is outside the table's clip bounds");
            }
            return table.full_index({p, l});
        }
        case BiasKind::Selected: {
            const int idx = table.relation_index(relation_from_string(e.at("relation").get<std::string>()));
            if (idx == kZeroEntry) throw ConfigError("the Other relation has no stored entry");
            return idx;
        }
        case BiasKind::TokenLinear:
        case BiasKind::SectionLinear: {
            const int o = e.at("offset").get<int>();
            if (o < -b.distance || o > b.distance) {
                throw ConfigError("bias offset " + std::to_string(o) + " is outside the table's clip bounds");
            }
            return table.linear_index(o);
        }
    }
    return kZeroEntry;
}

}  // namespace

nlohmann::json bias_table_to_json(const BiasTable& table) {
    nlohmann::json entries = nlohmann::json::array();
    for (int h = 0; h < table.heads(); ++h) {
        for (int e = 0; e < table.entries_per_head(); ++e) {
            auto item = entry_key(table, e);
            item["head"] = h;
            item["value"] = table.value(h, e);
            entries.push_back(std::move(item));
        }
    }
    const auto& b = table.bounds();
    return {{"kind", std::string(to_string(table.kind()))},
            {"heads", table.heads()},
            {"clip", {{"path", b.path}, {"level", b.level}, {"distance", b.distance}}},
            {"entries", std::move(entries)}};
}

void bias_table_from_json(BiasTable& table, const nlohmann::json& j) {
    if (bias_kind_from_string(j.at("kind").get<std::string>()) != table.kind()) {
        throw ConfigError("bias table kind mismatch");
    }
    if (j.at("heads").get<int>() != table.heads()) throw ConfigError("bias table head count mismatch");
    std::fill(table.values().begin(), table.values().end(), 0.0);
    for (const auto& e : j.at("entries")) {
        const int h = e.at("head").get<int>();
        if (h < 0 || h >= table.heads()) throw ConfigError("bias entry head out of range");
        table.value(h, entry_from_key(table, e)) = e.at("value").get<double>();
    }
}

nlohmann::json checkpoint_to_json(const Model& model, const Vocabulary& vocab) {
    nlohmann::json tensors = nlohmann::json::object();
    model.for_each_parameter([&](const std::string& name, const Tensor& t) {
        std::vector<double> data(static_cast<std::size_t>(t.value.size()));
        for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
                data[static_cast<std::size_t>(r * t.value.cols() + c)] = t.value(r, c);
            }
        }
        tensors[name] = {{"shape", {t.value.rows(), t.value.cols()}}, {"data", std::move(data)}};
    });
    nlohmann::json tables = nlohmann::json::object();
    if (model.encoder_bias()) tables["encoder"] = bias_table_to_json(*model.encoder_bias());
    if (model.decoder_bias()) tables["decoder"] = bias_table_to_json(*model.decoder_bias());
    return {{"format", kFormat},
            {"config", model.config().to_json()},
            {"vocab", vocab.to_json()},
            {"tensors", std::move(tensors)},
            {"bias_tables", std::move(tables)}};
}

LoadedModel checkpoint_from_json(const nlohmann::json& j, std::optional<ClipBounds> clip_override) {
    if (j.value("format", std::string()) != kFormat) throw ConfigError("not a checkpoint file");
    ModelConfig config = ModelConfig::from_json(j.at("config"));
    if (clip_override) config.clip = *clip_override;
    LoadedModel loaded{Vocabulary::from_json(j.at("vocab")), Model(config)};
    if (loaded.vocab.size() != config.vocab_size) throw ConfigError("vocabulary size does not match the config");

    const auto& tensors = j.at("tensors");
    loaded.model.for_each_parameter([&](const std::string& name, Tensor& t) {
        if (!tensors.contains(name)) throw ConfigError("checkpoint is missing tensor " + name);
        const auto& item = tensors.at(name);
        const auto shape = item.at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2 || shape[0] != t.value.rows() || shape[1] != t.value.cols()) {
            throw ConfigError("shape mismatch for tensor " + name);
        }
        const auto data = item.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != t.value.size()) throw ConfigError("size mismatch for " + name);
        for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
                t.value(r, c) = data[static_cast<std::size_t>(r * t.value.cols() + c)];
            }
        }
    });

    const auto& tables = j.at("bias_tables");
    auto restore = [&](BiasTable* table, const char* key) {
        if (!table && tables.contains(key)) throw ConfigError(std::string("unexpected ") + key + " bias table");
        if (!table) return;
        if (!tables.contains(key)) throw ConfigError(std::string("checkpoint is missing the ") + key + " bias table");
        bias_table_from_json(*table, tables.at(key));
    };
    restore(loaded.model.encoder_bias(), "encoder");
    restore(loaded.model.decoder_bias(), "decoder");
    return loaded;
}

void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << checkpoint_to_json(model, vocab).dump() << '\n';
}

LoadedModel load_checkpoint(const std::string& path, std::optional<ClipBounds> clip_override) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, e.what());
    }
    return checkpoint_from_json(j, clip_override);
}

}  // namespace hibrids
