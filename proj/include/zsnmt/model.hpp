#ifndef ZSNMT_MODEL_HPP
#define ZSNMT_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "zsnmt/graph.hpp"
#include "zsnmt/rng.hpp"
#include "zsnmt/tensor.hpp"
#include "zsnmt/vocab.hpp"

namespace zsnmt {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int max_pos = 64;

    void validate() const;
    std::int64_t param_count() const;  // closed form, checked against the live count
};

// Token batch with teacher-forcing targets. tgt_in = <s> + tgt, tgt_out =
// tgt + </s>; loss weights are zero on padding.
struct Batch {
    int size = 0;
    int src_len = 0;
    int tgt_len = 0;
    std::vector<int> src;             // [size, src_len]
    std::vector<int> tgt_in;          // [size, tgt_len]
    std::vector<int> tgt_out;         // [size, tgt_len]
    std::vector<float> loss_weight;   // [size * tgt_len]
    std::vector<uint8_t> is_denoise;  // [size], task flag per example

    int src_at(int b, int t) const { return src[static_cast<std::size_t>(b) * src_len + t]; }
};

// Named parameter tensors in a fixed construction order.
template <typename U>
struct ModelParams {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor<U>>> named;

    Tensor<U>& at(const std::string& name);
    const Tensor<U>& at(const std::string& name) const;
    std::int64_t count() const;
    void zero_grads();

    template <typename V>
    ModelParams<V> cast() const {
        ModelParams<V> out;
        out.config = config;
        for (const auto& [name, t] : named) out.named.emplace_back(name, t.template cast<V>());
        return out;
    }
};

template <typename U>
ModelParams<U> init_params(const ModelConfig& config, Rng& rng);

// Sinusoidal position table [max_pos, d_model].
template <typename U>
Tensor<U> position_table(const ModelConfig& config);

template <typename U>
struct ForwardResult {
    typename Graph<U>::Id logits;   // [batch, tgt_len, vocab]
    typename Graph<U>::Id enc_out;  // [batch, src_len, d_model]
};

// Build the encoder-decoder forward pass on `graph`. Pre-norm residual
// blocks, bidirectional encoder self-attention, causal decoder
// self-attention, decoder cross-attention over the encoder output, embedding
// table shared between both sides and tied with the output projection.
template <typename U>
ForwardResult<U> forward(Graph<U>& graph, ModelParams<U>& params, const Batch& batch,
                         U dropout_rate, bool train_mode, Rng& rng);

// Checkpoint = one line of JSON (hyperparameters, parameter names, shapes,
// byte offsets, format version), '\n', then the raw little-endian float32
// payloads back to back.
void save_checkpoint(const ModelParams<float>& params, const std::string& path);
ModelParams<float> load_checkpoint(const std::string& path);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;
extern template ModelParams<float> init_params<float>(const ModelConfig&, Rng&);
extern template ModelParams<double> init_params<double>(const ModelConfig&, Rng&);
extern template Tensor<float> position_table<float>(const ModelConfig&);
extern template Tensor<double> position_table<double>(const ModelConfig&);
extern template ForwardResult<float> forward<float>(Graph<float>&, ModelParams<float>&,
                                                    const Batch&, float, bool, Rng&);
extern template ForwardResult<double> forward<double>(Graph<double>&, ModelParams<double>&,
                                                      const Batch&, double, bool, Rng&);

}  // namespace zsnmt

#endif
