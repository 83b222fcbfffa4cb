#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hibrids/bias_table.hpp"
#include "hibrids/docmodel.hpp"
#include "hibrids/layers.hpp"

namespace hibrids {

/// `enc_dec` places full tables on both sides; no quality claim is attached.
enum class Placement { None, Enc, Dec, EncSelected, DecSelected, TokLinear, SecLinear, EncDec };

std::string_view to_string(Placement p);
/// Accepts both `enc_selected` and `enc-selected` spellings.
Placement placement_from_string(std::string_view name);
bool uses_encoder_bias(Placement p);
bool uses_decoder_bias(Placement p);

struct ModelConfig {
    int vocab_size = 0;
    int width = 64;
    int heads = 4;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int ff_width = 128;
    ClipBounds clip;
    Placement placement = Placement::None;
    std::uint64_t seed = 1;

    /// Throws ConfigError.
    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    Vocabulary();
    /// Specials first, then every distinct token in lexicographic order.
    static Vocabulary build(const std::vector<std::vector<std::string>>& corpus);

    int id(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(std::span<const int> ids) const;

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// One training/decoding instance: source tokens laid over a structure tree
/// plus target ids (without BOS/EOS).
struct EncodedSample {
    StructureTree tree;
    std::vector<int> source;
    std::vector<int> target;
};

EncodedSample encode_sample(const Vocabulary& vocab, const Document& source, const std::string& target_text);

/// Encoder output reused across decoder calls.
struct EncoderState {
    Eigen::MatrixXd memory;
    std::optional<BiasIndex> decoder_index;
    std::vector<Eigen::MatrixXd> decoder_table;  // per head, n x n
};

struct EncoderLayer {
    LayerNorm norm1, norm2;
    MultiHeadAttention attn;
    FeedForward ffn;
};

struct DecoderLayer {
    LayerNorm norm1, norm2, norm3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;
};

struct ForwardPass;

/// Small pre-LN Transformer encoder-decoder in double precision with
/// hierarchical attention biases.
///
/// Encoder placements (enc, enc_selected, tok_linear, sec_linear) add one
/// per-head table, shared by all encoder layers, to encoder self-attention
/// scores. Decoder placements (dec, dec_selected) add, in the last decoder
/// layer's cross-attention only, the alignment-weighted bias
///   b_tj = sum_l a_tl * B_h[pos(l, j)]
/// where a is the head-averaged cross-attention of the second-to-last layer.
/// Gradients flow through a as well.
class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    EncoderState encode(const StructureTree& tree, std::span<const int> source) const;
    /// Logits for every decoder position, shape (decoder_input.size(), vocab).
    Eigen::MatrixXd decode_logits(const EncoderState& enc, std::span<const int> decoder_input) const;
    Eigen::MatrixXd forward(const StructureTree& tree, std::span<const int> source,
                            std::span<const int> decoder_input) const;

    /// Mean token cross-entropy of target+EOS given BOS+target, over the batch.
    double loss(std::span<const EncodedSample> batch) const;
    /// Same loss; also overwrites all parameter gradients.
    double loss_and_gradients(std::span<const EncodedSample> batch);

    void zero_grad();
    void for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const;

    BiasTable* encoder_bias() { return encoder_bias_ ? &*encoder_bias_ : nullptr; }
    const BiasTable* encoder_bias() const { return encoder_bias_ ? &*encoder_bias_ : nullptr; }
    BiasTable* decoder_bias() { return decoder_bias_ ? &*decoder_bias_ : nullptr; }
    const BiasTable* decoder_bias() const { return decoder_bias_ ? &*decoder_bias_ : nullptr; }

private:
    void check_ids(std::span<const int> ids) const;
    Eigen::MatrixXd embed(const Tensor& table, std::span<const int> ids) const;
    EncoderState run_encoder(const StructureTree& tree, std::span<const int> source, ForwardPass* pass) const;
    Eigen::MatrixXd run_decoder(const EncoderState& enc, std::span<const int> decoder_input, ForwardPass* pass) const;
    void backward(const EncodedSample& sample, ForwardPass& pass, const Eigen::MatrixXd& d_logits);

    ModelConfig config_;
    Tensor src_embed_, tgt_embed_;
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
    LayerNorm encoder_norm_, decoder_norm_;
    Linear output_;
    std::optional<BiasTable> encoder_bias_;
    std::optional<BiasTable> decoder_bias_;
};

Eigen::MatrixXd sinusoidal_positions(std::size_t length, int width);
Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace hibrids
