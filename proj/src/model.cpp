#include "hibrids/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hibrids/errors.hpp"
#include "hibrids/text.hpp"

namespace hibrids {

std::string_view to_string(Placement p) {
    switch (p) {
        case Placement::None: return "none";
        case Placement::Enc: return "enc";
        case Placement::Dec: return "dec";
        case Placement::EncSelected: return "enc_selected";
        case Placement::DecSelected: return "dec_selected";
        case Placement::TokLinear: return "tok_linear";
        case Placement::SecLinear: return "sec_linear";
        case Placement::EncDec: return "enc_dec";
    }
    return "none";
}

Placement placement_from_string(std::string_view name) {
    std::string s(name);
    std::replace(s.begin(), s.end(), '-', '_');
    for (auto p : {Placement::None, Placement::Enc, Placement::Dec, Placement::EncSelected, Placement::DecSelected,
                   Placement::TokLinear, Placement::SecLinear, Placement::EncDec}) {
        if (s == to_string(p)) return p;
    }
    throw ConfigError("unknown placement: " + std::string(name));
}

bool uses_encoder_bias(Placement p) {
    return p == Placement::Enc || p == Placement::EncSelected || p == Placement::TokLinear ||
           p == Placement::SecLinear || p == Placement::EncDec;
}

bool uses_decoder_bias(Placement p) {
    return p == Placement::Dec || p == Placement::DecSelected || p == Placement::EncDec;
}

void ModelConfig::validate() const {
    if (vocab_size < 4) throw ConfigError("vocab_size must cover the 4 special tokens");
    if (width <= 0 || heads <= 0 || ff_width <= 0) throw ConfigError("width, heads and ff_width must be positive");
    if (width % heads != 0) throw ConfigError("width must be divisible by heads");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("need at least one encoder and decoder layer");
    if (uses_decoder_bias(placement) && decoder_layers < 2) {
        throw ConfigError("decoder bias placement needs at least 2 decoder layers");
    }
    if (clip.path < 0 || clip.level < 0 || clip.distance < 0) throw ConfigError("clip bounds must be nonnegative");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab_size", vocab_size},
            {"width", width},
            {"heads", heads},
            {"encoder_layers", encoder_layers},
            {"decoder_layers", decoder_layers},
            {"ff_width", ff_width},
            {"clip", {{"path", clip.path}, {"level", clip.level}, {"distance", clip.distance}}},
            {"placement", std::string(to_string(placement))},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.width = j.value("width", c.width);
        c.heads = j.value("heads", c.heads);
        c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
        c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
        c.ff_width = j.value("ff_width", c.ff_width);
        if (j.contains("clip")) {
            const auto& cl = j.at("clip");
            c.clip.path = cl.value("path", c.clip.path);
            c.clip.level = cl.value("level", c.clip.level);
            c.clip.distance = cl.value("distance", c.clip.distance);
        }
        if (j.contains("placement")) c.placement = placement_from_string(j.at("placement").get<std::string>());
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) {
        index_.emplace(s, static_cast<int>(tokens_.size()));
        tokens_.emplace_back(s);
    }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus) {
    std::set<std::string> distinct;
    for (const auto& seq : corpus) distinct.insert(seq.begin(), seq.end());
    Vocabulary v;
    for (const auto& t : distinct) {
        if (v.index_.count(t)) continue;
        v.index_.emplace(t, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(t);
    }
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw LookupError("token id " + std::to_string(id) + " out of vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
    std::vector<std::string> out;
    for (int id : ids) out.push_back(token(id));
    return out;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    Vocabulary v;
    auto tokens = j.get<std::vector<std::string>>();
    if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[1] != "<bos>" || tokens[2] != "<eos>" ||
        tokens[3] != "<unk>") {
        throw ConfigError("vocabulary must start with <pad> <bos> <eos> <unk>");
    }
    v.tokens_ = std::move(tokens);
    v.index_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.index_.emplace(v.tokens_[i], static_cast<int>(i));
    return v;
}

EncodedSample encode_sample(const Vocabulary& vocab, const Document& source, const std::string& target_text) {
    EncodedSample s{parse_document(source), {}, {}};
    s.source = vocab.encode(s.tree.tokens());
    s.target = vocab.encode(tokenize(target_text));
    return s;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd sinusoidal_positions(std::size_t length, int width) {
    Eigen::MatrixXd pe(static_cast<Eigen::Index>(length), width);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (int i = 0; i < width; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
            const double angle = static_cast<double>(pos) * rate;
            pe(static_cast<Eigen::Index>(pos), i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
        out.row(r) = logits.row(r).array() - lse;
    }
    return out;
}

struct EncoderLayerCache {
    LayerNorm::Cache norm1, norm2;
    MultiHeadAttention::Cache attn;
    FeedForward::Cache ffn;
};

struct DecoderLayerCache {
    LayerNorm::Cache norm1, norm2, norm3;
    MultiHeadAttention::Cache self_attn, cross_attn;
    FeedForward::Cache ffn;
};

struct ForwardPass {
    std::vector<EncoderLayerCache> encoder;
    LayerNorm::Cache encoder_final;
    std::optional<BiasIndex> encoder_index;
    EncoderState state;

    std::vector<DecoderLayerCache> decoder;
    LayerNorm::Cache decoder_final;
    Eigen::MatrixXd decoder_out;
    Eigen::MatrixXd alignment;  // head-averaged cross-attention of the second-to-last layer
};

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const int d = config_.width;
    const int v = config_.vocab_size;

    std::normal_distribution<double> normal(0.0, 1.0);
    src_embed_ = Tensor(v, d);
    tgt_embed_ = Tensor(v, d);
    for (Eigen::Index i = 0; i < src_embed_.value.size(); ++i) src_embed_.value.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < tgt_embed_.value.size(); ++i) tgt_embed_.value.data()[i] = normal(rng);

    for (int l = 0; l < config_.encoder_layers; ++l) {
        EncoderLayer layer{LayerNorm(d), LayerNorm(d), MultiHeadAttention(d, config_.heads, rng),
                           FeedForward(d, config_.ff_width, rng)};
        encoder_.push_back(std::move(layer));
    }
    for (int l = 0; l < config_.decoder_layers; ++l) {
        DecoderLayer layer{LayerNorm(d),
                           LayerNorm(d),
                           LayerNorm(d),
                           MultiHeadAttention(d, config_.heads, rng),
                           MultiHeadAttention(d, config_.heads, rng),
                           FeedForward(d, config_.ff_width, rng)};
        decoder_.push_back(std::move(layer));
    }
    encoder_norm_ = LayerNorm(d);
    decoder_norm_ = LayerNorm(d);
    output_ = Linear(d, v, rng);

    switch (config_.placement) {
        case Placement::None: break;
        case Placement::Enc: encoder_bias_.emplace(BiasKind::Full, config_.heads, config_.clip); break;
        case Placement::EncSelected: encoder_bias_.emplace(BiasKind::Selected, config_.heads, config_.clip); break;
        case Placement::TokLinear: encoder_bias_.emplace(BiasKind::TokenLinear, config_.heads, config_.clip); break;
        case Placement::SecLinear: encoder_bias_.emplace(BiasKind::SectionLinear, config_.heads, config_.clip); break;
        case Placement::Dec: decoder_bias_.emplace(BiasKind::Full, config_.heads, config_.clip); break;
        case Placement::DecSelected: decoder_bias_.emplace(BiasKind::Selected, config_.heads, config_.clip); break;
        case Placement::EncDec:
            encoder_bias_.emplace(BiasKind::Full, config_.heads, config_.clip);
            decoder_bias_.emplace(BiasKind::Full, config_.heads, config_.clip);
            break;
    }
}

void Model::check_ids(std::span<const int> ids) const {
    for (int id : ids) {
        if (id < 0 || id >= config_.vocab_size) {
            throw LookupError("token id " + std::to_string(id) + " out of vocabulary of size " +
                              std::to_string(config_.vocab_size));
        }
    }
}

Eigen::MatrixXd Model::embed(const Tensor& table, std::span<const int> ids) const {
    check_ids(ids);
    Eigen::MatrixXd x = sinusoidal_positions(ids.size(), config_.width);
    for (std::size_t i = 0; i < ids.size(); ++i) x.row(static_cast<Eigen::Index>(i)) += table.value.row(ids[i]);
    return x;
}

EncoderState Model::run_encoder(const StructureTree& tree, std::span<const int> source, ForwardPass* pass) const {
    if (source.empty()) throw InputError("empty source sequence");
    if (source.size() > tree.token_count()) {
        throw InputError("source of " + std::to_string(source.size()) + " tokens exceeds the tree's " +
                         std::to_string(tree.token_count()) + " covered tokens");
    }
    Eigen::MatrixXd x = embed(src_embed_, source);

    std::vector<Eigen::MatrixXd> bias;
    if (encoder_bias_) {
        auto index = encoder_bias_index(tree, *encoder_bias_, source.size());
        bias = gather_bias(*encoder_bias_, index);
        if (pass) pass->encoder_index = std::move(index);
    }

    if (pass) pass->encoder.resize(encoder_.size());
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
        EncoderLayerCache local;
        auto& c = pass ? pass->encoder[l] : local;
        const auto& layer = encoder_[l];
        Eigen::MatrixXd a = layer.norm1.forward(x, &c.norm1);
        Eigen::MatrixXd h = x + layer.attn.forward(a, a, bias, false, &c.attn);
        Eigen::MatrixXd f = layer.norm2.forward(h, &c.norm2);
        x = h + layer.ffn.forward(f, &c.ffn);
    }

    EncoderState state;
    state.memory = encoder_norm_.forward(x, pass ? &pass->encoder_final : nullptr);
    if (decoder_bias_) {
        state.decoder_index = encoder_bias_index(tree, *decoder_bias_, source.size());
        state.decoder_table = gather_bias(*decoder_bias_, *state.decoder_index);
    }
    return state;
}

Eigen::MatrixXd Model::run_decoder(const EncoderState& enc, std::span<const int> decoder_input,
                                   ForwardPass* pass) const {
    if (decoder_input.empty()) throw InputError("empty decoder input");
    Eigen::MatrixXd y = embed(tgt_embed_, decoder_input);
    const std::size_t layers = decoder_.size();
    Eigen::MatrixXd alignment;

    if (pass) pass->decoder.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        DecoderLayerCache local;
        auto& c = pass ? pass->decoder[l] : local;
        const auto& layer = decoder_[l];

        Eigen::MatrixXd a = layer.norm1.forward(y, &c.norm1);
        Eigen::MatrixXd h1 = y + layer.self_attn.forward(a, a, {}, true, &c.self_attn);
        Eigen::MatrixXd q = layer.norm2.forward(h1, &c.norm2);

        std::vector<Eigen::MatrixXd> bias;
        if (decoder_bias_ && l + 1 == layers) {
            for (const auto& table : enc.decoder_table) bias.push_back(alignment * table);
        }
        Eigen::MatrixXd h2 = h1 + layer.cross_attn.forward(q, enc.memory, bias, false, &c.cross_attn);
        if (decoder_bias_ && l + 2 == layers) {
            alignment = Eigen::MatrixXd::Zero(h2.rows(), enc.memory.rows());
            for (const auto& p : c.cross_attn.probs) alignment += p;
            alignment /= static_cast<double>(config_.heads);
        }

        Eigen::MatrixXd e = layer.norm3.forward(h2, &c.norm3);
        y = h2 + layer.ffn.forward(e, &c.ffn);
    }

    Eigen::MatrixXd out = decoder_norm_.forward(y, pass ? &pass->decoder_final : nullptr);
    Eigen::MatrixXd logits = output_.forward(out);
    if (pass) {
        pass->decoder_out = std::move(out);
        pass->alignment = std::move(alignment);
    }
    return logits;
}

EncoderState Model::encode(const StructureTree& tree, std::span<const int> source) const {
    return run_encoder(tree, source, nullptr);
}

Eigen::MatrixXd Model::decode_logits(const EncoderState& enc, std::span<const int> decoder_input) const {
    return run_decoder(enc, decoder_input, nullptr);
}

Eigen::MatrixXd Model::forward(const StructureTree& tree, std::span<const int> source,
                               std::span<const int> decoder_input) const {
    return decode_logits(encode(tree, source), decoder_input);
}

namespace {

std::vector<int> decoder_input_of(const EncodedSample& s) {
    std::vector<int> in{Vocabulary::kBos};
    in.insert(in.end(), s.target.begin(), s.target.end());
    return in;
}

std::vector<int> decoder_output_of(const EncodedSample& s) {
    std::vector<int> out(s.target.begin(), s.target.end());
    out.push_back(Vocabulary::kEos);
    return out;
}

std::size_t total_target_tokens(std::span<const EncodedSample> batch) {
    std::size_t n = 0;
    for (const auto& s : batch) n += s.target.size() + 1;
    return n;
}

}  // namespace

double Model::loss(std::span<const EncodedSample> batch) const {
    const std::size_t total = total_target_tokens(batch);
    if (total == 0) return 0.0;
    double sum = 0.0;
    for (const auto& s : batch) {
        const auto logp = log_softmax_rows(forward(s.tree, s.source, decoder_input_of(s)));
        const auto gold = decoder_output_of(s);
        check_ids(gold);
        for (std::size_t t = 0; t < gold.size(); ++t) sum -= logp(static_cast<Eigen::Index>(t), gold[t]);
    }
    return sum / static_cast<double>(total);
}

double Model::loss_and_gradients(std::span<const EncodedSample> batch) {
    zero_grad();
    const std::size_t total = total_target_tokens(batch);
    if (total == 0) return 0.0;
    double sum = 0.0;
    for (const auto& s : batch) {
        ForwardPass pass;
        pass.state = run_encoder(s.tree, s.source, &pass);
        const auto input = decoder_input_of(s);
        const auto gold = decoder_output_of(s);
        check_ids(gold);
        const Eigen::MatrixXd logits = run_decoder(pass.state, input, &pass);
        const Eigen::MatrixXd logp = log_softmax_rows(logits);
        Eigen::MatrixXd d_logits = logp.array().exp();
        for (std::size_t t = 0; t < gold.size(); ++t) {
            sum -= logp(static_cast<Eigen::Index>(t), gold[t]);
            d_logits(static_cast<Eigen::Index>(t), gold[t]) -= 1.0;
        }
        d_logits /= static_cast<double>(total);
        backward(s, pass, d_logits);
    }
    return sum / static_cast<double>(total);
}

void Model::backward(const EncodedSample& sample, ForwardPass& pass, const Eigen::MatrixXd& d_logits) {
    const std::size_t layers = decoder_.size();
    const auto heads = static_cast<std::size_t>(config_.heads);
    const auto input = decoder_input_of(sample);

    Eigen::MatrixXd dy = decoder_norm_.backward(pass.decoder_final, output_.backward(pass.decoder_out, d_logits));
    Eigen::MatrixXd d_memory = Eigen::MatrixXd::Zero(pass.state.memory.rows(), pass.state.memory.cols());
    Eigen::MatrixXd d_alignment;

    for (std::size_t l = layers; l-- > 0;) {
        auto& layer = decoder_[l];
        auto& c = pass.decoder[l];

        Eigen::MatrixXd dh2 = dy + layer.norm3.backward(c.norm3, layer.ffn.backward(c.ffn, dy));

        std::vector<Eigen::MatrixXd> extra;
        if (decoder_bias_ && l + 2 == layers) {
            for (std::size_t h = 0; h < heads; ++h) extra.push_back(d_alignment / static_cast<double>(heads));
        }
        auto cross = layer.cross_attn.backward(c.cross_attn, dh2, extra);
        d_memory += cross.d_key_input;

        if (decoder_bias_ && l + 1 == layers) {
            d_alignment = Eigen::MatrixXd::Zero(pass.alignment.rows(), pass.alignment.cols());
            for (std::size_t h = 0; h < heads; ++h) {
                const auto& ds = cross.d_scores[h];
                scatter_bias_grad(*decoder_bias_, *pass.state.decoder_index, static_cast<int>(h),
                                  pass.alignment.transpose() * ds);
                d_alignment += ds * pass.state.decoder_table[h].transpose();
            }
        }

        Eigen::MatrixXd dh1 = dh2 + layer.norm2.backward(c.norm2, cross.d_query_input);
        auto self = layer.self_attn.backward(c.self_attn, dh1, {});
        dy = dh1 + layer.norm1.backward(c.norm1, self.d_query_input + self.d_key_input);
    }
    for (std::size_t t = 0; t < input.size(); ++t) tgt_embed_.grad.row(input[t]) += dy.row(static_cast<Eigen::Index>(t));

    Eigen::MatrixXd dx = encoder_norm_.backward(pass.encoder_final, d_memory);
    for (std::size_t l = encoder_.size(); l-- > 0;) {
        auto& layer = encoder_[l];
        auto& c = pass.encoder[l];
        Eigen::MatrixXd dh = dx + layer.norm2.backward(c.norm2, layer.ffn.backward(c.ffn, dx));
        auto g = layer.attn.backward(c.attn, dh, {});
        if (encoder_bias_) {
            for (std::size_t h = 0; h < heads; ++h) {
                scatter_bias_grad(*encoder_bias_, *pass.encoder_index, static_cast<int>(h), g.d_scores[h]);
            }
        }
        dx = dh + layer.norm1.backward(c.norm1, g.d_query_input + g.d_key_input);
    }
    for (std::size_t i = 0; i < sample.source.size(); ++i) {
        src_embed_.grad.row(sample.source[i]) += dx.row(static_cast<Eigen::Index>(i));
    }
}

void Model::zero_grad() {
    for_each_parameter([](const std::string&, Tensor& t) { t.zero_grad(); });
    if (encoder_bias_) encoder_bias_->zero_grad();
    if (decoder_bias_) decoder_bias_->zero_grad();
}

namespace {

template <typename Self, typename Fn>
void visit_parameters(Self& self_embed_src, Self& self_embed_tgt, auto& encoder, auto& decoder, auto& enc_norm,
                      auto& dec_norm, auto& output, Fn&& fn) {
    auto linear = [&](const std::string& name, auto& lin) {
        fn(name + ".weight", lin.weight);
        fn(name + ".bias", lin.bias);
    };
    auto norm = [&](const std::string& name, auto& ln) {
        fn(name + ".gain", ln.gain);
        fn(name + ".bias", ln.bias);
    };
    auto attention = [&](const std::string& name, auto& mha) {
        linear(name + ".query", mha.query);
        linear(name + ".key", mha.key);
        linear(name + ".value", mha.value);
        linear(name + ".proj", mha.proj);
    };
    fn(std::string("src_embed"), self_embed_src);
    fn(std::string("tgt_embed"), self_embed_tgt);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const std::string p = "encoder." + std::to_string(l);
        norm(p + ".norm1", encoder[l].norm1);
        attention(p + ".attn", encoder[l].attn);
        norm(p + ".norm2", encoder[l].norm2);
        linear(p + ".ffn.in", encoder[l].ffn.in);
        linear(p + ".ffn.out", encoder[l].ffn.out);
    }
    for (std::size_t l = 0; l < decoder.size(); ++l) {
        const std::string p = "decoder." + std::to_string(l);
        norm(p + ".norm1", decoder[l].norm1);
        attention(p + ".self_attn", decoder[l].self_attn);
        norm(p + ".norm2", decoder[l].norm2);
        attention(p + ".cross_attn", decoder[l].cross_attn);
        norm(p + ".norm3", decoder[l].norm3);
        linear(p + ".ffn.in", decoder[l].ffn.in);
        linear(p + ".ffn.out", decoder[l].ffn.out);
    }
    norm("encoder_norm", enc_norm);
    norm("decoder_norm", dec_norm);
    linear("output", output);
}

}  // namespace

void Model::for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_parameters(src_embed_, tgt_embed_, encoder_, decoder_, encoder_norm_, decoder_norm_, output_, fn);
}

void Model::for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    visit_parameters(src_embed_, tgt_embed_, encoder_, decoder_, encoder_norm_, decoder_norm_, output_, fn);
}

}  // namespace hibrids
