#include "zsnmt/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace zsnmt {

using nlohmann::json;

void ModelConfig::validate() const {
    if (vocab_size < Vocab::kNumSpecials) throw ConfigError("vocab_size too small");
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
        throw ConfigError("d_model must be a positive multiple of n_heads");
    if (d_ff <= 0 || n_enc_layers <= 0 || n_dec_layers <= 0 || max_pos <= 0)
        throw ConfigError("model dimensions must be positive");
}

std::int64_t ModelConfig::param_count() const {
    const std::int64_t d = d_model, f = d_ff, v = vocab_size;
    const std::int64_t attn = 4 * d * d + 4 * d;        // wq wk wv wo + biases
    const std::int64_t ffn = d * f + f + f * d + d;     // w1 b1 w2 b2
    const std::int64_t ln = 2 * d;                      // gain + bias
    const std::int64_t enc_layer = attn + ffn + 2 * ln;
    const std::int64_t dec_layer = 2 * attn + ffn + 3 * ln;
    return v * d + n_enc_layers * enc_layer + n_dec_layers * dec_layer + 2 * ln;
}

template <typename U>
Tensor<U>& ModelParams<U>::at(const std::string& name) {
    for (auto& [n, t] : named)
        if (n == name) return t;
    throw InternalError("unknown parameter: " + name);
}

template <typename U>
const Tensor<U>& ModelParams<U>::at(const std::string& name) const {
    for (const auto& [n, t] : named)
        if (n == name) return t;
    throw InternalError("unknown parameter: " + name);
}

template <typename U>
std::int64_t ModelParams<U>::count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named) n += t.numel();
    return n;
}

template <typename U>
void ModelParams<U>::zero_grads() {
    for (auto& [name, t] : named) {
        t.ensure_grad();
        t.zero_grad();
    }
}

namespace {

template <typename U>
void add_linear(ModelParams<U>& p, Rng& rng, const std::string& prefix, int in, int out) {
    Tensor<U> w({in, out});
    // Xavier uniform
    const double bound = std::sqrt(6.0 / (in + out));
    for (auto& x : w.data) x = static_cast<U>((rng.real01() * 2.0 - 1.0) * bound);
    p.named.emplace_back(prefix + ".w", std::move(w));
    p.named.emplace_back(prefix + ".b", Tensor<U>({out}));
}

template <typename U>
void add_layernorm(ModelParams<U>& p, const std::string& prefix, int d) {
    Tensor<U> g({d});
    std::fill(g.data.begin(), g.data.end(), U(1));
    p.named.emplace_back(prefix + ".g", std::move(g));
    p.named.emplace_back(prefix + ".b", Tensor<U>({d}));
}

template <typename U>
void add_attention(ModelParams<U>& p, Rng& rng, const std::string& prefix, int d) {
    for (const char* n : {"wq", "wk", "wv", "wo"}) add_linear(p, rng, prefix + "." + n, d, d);
}

}  // namespace

template <typename U>
ModelParams<U> init_params(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelParams<U> p;
    p.config = config;

    Tensor<U> embed({config.vocab_size, config.d_model});
    const double std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    for (auto& x : embed.data) x = static_cast<U>(rng.normal() * std);
    p.named.emplace_back("embed", std::move(embed));

    for (int l = 0; l < config.n_enc_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        add_layernorm(p, pre + ".ln1", config.d_model);
        add_attention(p, rng, pre + ".attn", config.d_model);
        add_layernorm(p, pre + ".ln2", config.d_model);
        add_linear(p, rng, pre + ".ffn.w1", config.d_model, config.d_ff);
        add_linear(p, rng, pre + ".ffn.w2", config.d_ff, config.d_model);
    }
    add_layernorm(p, "enc.final_ln", config.d_model);

    for (int l = 0; l < config.n_dec_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        add_layernorm(p, pre + ".ln1", config.d_model);
        add_attention(p, rng, pre + ".self", config.d_model);
        add_layernorm(p, pre + ".ln2", config.d_model);
        add_attention(p, rng, pre + ".cross", config.d_model);
        add_layernorm(p, pre + ".ln3", config.d_model);
        add_linear(p, rng, pre + ".ffn.w1", config.d_model, config.d_ff);
        add_linear(p, rng, pre + ".ffn.w2", config.d_ff, config.d_model);
    }
    add_layernorm(p, "dec.final_ln", config.d_model);

    if (p.count() != config.param_count())
        throw InternalError("parameter count does not match the closed form");
    return p;
}

template <typename U>
Tensor<U> position_table(const ModelConfig& config) {
    Tensor<U> pe({config.max_pos, config.d_model});
    for (int pos = 0; pos < config.max_pos; ++pos) {
        for (int i = 0; i < config.d_model / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / config.d_model);
            pe.data[std::size_t(pos) * config.d_model + 2 * i] = static_cast<U>(std::sin(pos * freq));
            pe.data[std::size_t(pos) * config.d_model + 2 * i + 1] =
                static_cast<U>(std::cos(pos * freq));
        }
    }
    return pe;
}

namespace {

// Attention masks as {0,1} float tensors [B, Tq, Tk] over key positions.
template <typename U>
Tensor<U> key_padding_mask(const std::vector<int>& keys, int b, int tq, int tk) {
    Tensor<U> m({b, tq, tk});
    for (int bi = 0; bi < b; ++bi)
        for (int q = 0; q < tq; ++q)
            for (int j = 0; j < tk; ++j)
                m.data[(std::size_t(bi) * tq + q) * tk + j] =
                    keys[std::size_t(bi) * tk + j] != Vocab::kPad ? U(1) : U(0);
    return m;
}

template <typename U>
Tensor<U> causal_padding_mask(const std::vector<int>& keys, int b, int t) {
    Tensor<U> m({b, t, t});
    for (int bi = 0; bi < b; ++bi)
        for (int q = 0; q < t; ++q)
            for (int j = 0; j < t; ++j)
                m.data[(std::size_t(bi) * t + q) * t + j] =
                    (j <= q && keys[std::size_t(bi) * t + j] != Vocab::kPad) ? U(1) : U(0);
    return m;
}

template <typename U>
struct Blocks {
    Graph<U>& g;
    ModelParams<U>& p;
    int b, heads, dh;
    U dropout_rate;
    bool train;
    Rng& rng;

    using Id = typename Graph<U>::Id;

    // Training tracks gradients through leaves; inference wraps the same
    // tensors as constants so no gradient buffers get built.
    Id param(const std::string& name) { return train ? g.leaf(p.at(name)) : g.constant(p.at(name)); }

    Id linear(Id x, const std::string& name) {
        return g.add_bias(g.matmul(x, param(name + ".w")), param(name + ".b"));
    }

    Id split_heads(Id x, int t) {
        return g.transpose_0213(g.reshape(x, {b, t, heads, dh}));
    }

    Id merge_heads(Id x, int t) {
        return g.reshape(g.transpose_0213(x), {b, t, p.config.d_model});
    }

    // pre-norm attention block: x + Wo(attend(LN(x), LN(mem)))
    Id attention(Id x, Id memory, Id mask, const std::string& prefix, int tq, int tk) {
        Id q = split_heads(linear(x, prefix + ".wq"), tq);
        Id k = split_heads(linear(memory, prefix + ".wk"), tk);
        Id v = split_heads(linear(memory, prefix + ".wv"), tk);
        Id scores = g.scale(g.bmm_nt(q, k), U(1) / static_cast<U>(std::sqrt(double(dh))));
        Id probs = g.attn_softmax(scores, mask);
        Id ctx = merge_heads(g.bmm(probs, v), tq);
        return g.dropout(linear(ctx, prefix + ".wo"), dropout_rate, rng, train);
    }

    Id ffn(Id x, const std::string& prefix) {
        return g.dropout(linear(g.relu(linear(x, prefix + ".w1")), prefix + ".w2"), dropout_rate,
                         rng, train);
    }

    Id norm(Id x, const std::string& name) {
        return g.layernorm(x, param(name + ".g"), param(name + ".b"));
    }
};

}  // namespace

template <typename U>
ForwardResult<U> forward(Graph<U>& graph, ModelParams<U>& params, const Batch& batch,
                         U dropout_rate, bool train_mode, Rng& rng) {
    const auto& cfg = params.config;
    const int b = batch.size, s = batch.src_len, t = batch.tgt_len;
    if (s > cfg.max_pos || t > cfg.max_pos) throw DataError("sequence exceeds position table");
    for (int id : batch.src)
        if (id < 0 || id >= cfg.vocab_size) throw DataError("source token outside vocabulary");
    for (int id : batch.tgt_in)
        if (id < 0 || id >= cfg.vocab_size) throw DataError("target token outside vocabulary");

    using Id = typename Graph<U>::Id;
    Blocks<U> blk{graph, params, b, cfg.n_heads, cfg.d_model / cfg.n_heads,
                  dropout_rate, train_mode, rng};

    const Tensor<U> pos = position_table<U>(cfg);
    auto positions = [&](int len) {
        Tensor<U> out({b, len, cfg.d_model});
        for (int bi = 0; bi < b; ++bi)
            std::copy(pos.data.begin(), pos.data.begin() + std::size_t(len) * cfg.d_model,
                      out.data.begin() + std::size_t(bi) * len * cfg.d_model);
        return out;
    };

    Id embed_leaf = train_mode ? graph.leaf(params.at("embed")) : graph.constant(params.at("embed"));
    const U emb_scale = static_cast<U>(std::sqrt(double(cfg.d_model)));

    Id src_mask = graph.input(key_padding_mask<U>(batch.src, b, s, s));
    Id cross_mask = graph.input(key_padding_mask<U>(batch.src, b, t, s));
    Id tgt_mask = graph.input(causal_padding_mask<U>(batch.tgt_in, b, t));

    // encoder
    Id x = graph.embed(embed_leaf, batch.src, {b, s, cfg.d_model}, emb_scale);
    x = graph.dropout(graph.add(x, graph.input(positions(s))), dropout_rate, rng, train_mode);
    for (int l = 0; l < cfg.n_enc_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        Id n1 = blk.norm(x, pre + ".ln1");
        x = graph.add(x, blk.attention(n1, n1, src_mask, pre + ".attn", s, s));
        x = graph.add(x, blk.ffn(blk.norm(x, pre + ".ln2"), pre + ".ffn"));
    }
    Id enc_out = blk.norm(x, "enc.final_ln");

    // decoder
    Id y = graph.embed(embed_leaf, batch.tgt_in, {b, t, cfg.d_model}, emb_scale);
    y = graph.dropout(graph.add(y, graph.input(positions(t))), dropout_rate, rng, train_mode);
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        Id n1 = blk.norm(y, pre + ".ln1");
        y = graph.add(y, blk.attention(n1, n1, tgt_mask, pre + ".self", t, t));
        y = graph.add(y, blk.attention(blk.norm(y, pre + ".ln2"), enc_out, cross_mask,
                                       pre + ".cross", t, s));
        y = graph.add(y, blk.ffn(blk.norm(y, pre + ".ln3"), pre + ".ffn"));
    }
    y = blk.norm(y, "dec.final_ln");

    // output projection tied to the embedding table
    Id logits = graph.matmul_nt(y, embed_leaf);
    return {logits, enc_out};
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian floats");

void save_checkpoint(const ModelParams<float>& params, const std::string& path) {
    json header;
    header["format_version"] = 1;
    header["hyper"] = {{"vocab_size", params.config.vocab_size},
                       {"d_model", params.config.d_model},
                       {"n_heads", params.config.n_heads},
                       {"d_ff", params.config.d_ff},
                       {"n_enc_layers", params.config.n_enc_layers},
                       {"n_dec_layers", params.config.n_dec_layers},
                       {"max_pos", params.config.max_pos}};
    header["params"] = json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : params.named) {
        header["params"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.numel() * static_cast<std::int64_t>(sizeof(float));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << header.dump() << '\n';
    for (const auto& [name, t] : params.named)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

ModelParams<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint missing header line");
    json header = json::parse(line);
    if (header.at("format_version").get<int>() != 1)
        throw DataError("unsupported checkpoint format version");

    ModelParams<float> params;
    const auto& h = header.at("hyper");
    params.config.vocab_size = h.at("vocab_size").get<int>();
    params.config.d_model = h.at("d_model").get<int>();
    params.config.n_heads = h.at("n_heads").get<int>();
    params.config.d_ff = h.at("d_ff").get<int>();
    params.config.n_enc_layers = h.at("n_enc_layers").get<int>();
    params.config.n_dec_layers = h.at("n_dec_layers").get<int>();
    params.config.max_pos = h.at("max_pos").get<int>();
    params.config.validate();

    const std::int64_t payload_start = static_cast<std::int64_t>(line.size()) + 1;
    for (const auto& jp : header.at("params")) {
        Tensor<float> t(jp.at("shape").get<std::vector<int>>());
        in.seekg(payload_start + jp.at("offset").get<std::int64_t>());
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!in) throw DataError("checkpoint payload truncated");
        params.named.emplace_back(jp.at("name").get<std::string>(), std::move(t));
    }
    if (params.count() != params.config.param_count())
        throw DataError("checkpoint parameters do not match hyperparameters");
    return params;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params<float>(const ModelConfig&, Rng&);
template ModelParams<double> init_params<double>(const ModelConfig&, Rng&);
template Tensor<float> position_table<float>(const ModelConfig&);
template Tensor<double> position_table<double>(const ModelConfig&);
template ForwardResult<float> forward<float>(Graph<float>&, ModelParams<float>&, const Batch&,
                                             float, bool, Rng&);
template ForwardResult<double> forward<double>(Graph<double>&, ModelParams<double>&, const Batch&,
                                               double, bool, Rng&);

}  // namespace zsnmt
