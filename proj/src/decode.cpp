#include "zsnmt/decode.hpp"

#include <algorithm>
#include <cmath>

#include "zsnmt/graph.hpp"
#include "zsnmt/kernels.hpp"

namespace zsnmt {

namespace {

// Decoder-side forward with per-row key/value caches, numerically identical
// to the graph forward: same kernels, same reduction order. Rows advance in
// lockstep; reorder() rewires rows to their surviving parents between steps.
class IncrementalDecoder {
public:
    IncrementalDecoder(const ModelParams<float>& params, int rows, int cap,
                       std::vector<int> sentence_of_row, const std::vector<float>& enc_out,
                       const std::vector<int>& padded_src, int n_sentences, int src_len)
        : p_(params),
          cfg_(params.config),
          rows_(rows),
          cap_(cap),
          sent_(std::move(sentence_of_row)),
          src_len_(src_len),
          heads_(cfg_.n_heads),
          dh_(cfg_.d_model / cfg_.n_heads),
          pos_(position_table<float>(cfg_)) {
        if (cap_ > kMaxCache || src_len_ > kMaxCache)
            throw ConfigError("decode length exceeds the attention scratch capacity");
        const int d = cfg_.d_model;
        self_k_.assign(cfg_.n_dec_layers, std::vector<float>(std::size_t(rows_) * cap_ * d));
        self_v_ = self_k_;
        cross_k_.assign(cfg_.n_dec_layers, std::vector<float>(std::size_t(n_sentences) * src_len * d));
        cross_v_ = cross_k_;
        cross_mask_.resize(std::size_t(n_sentences) * src_len);
        for (int b = 0; b < n_sentences; ++b)
            for (int j = 0; j < src_len; ++j)
                cross_mask_[std::size_t(b) * src_len + j] =
                    padded_src[std::size_t(b) * src_len + j] != Vocab::kPad ? 1.0f : 0.0f;

        // cross-attention keys/values precomputed from the encoder output
        const std::int64_t n_src_rows = std::int64_t(n_sentences) * src_len;
        for (int l = 0; l < cfg_.n_dec_layers; ++l) {
            const std::string pre = "dec." + std::to_string(l) + ".cross";
            linear_into(enc_out.data(), n_src_rows, pre + ".wk", cross_k_[l].data());
            linear_into(enc_out.data(), n_src_rows, pre + ".wv", cross_v_[l].data());
        }
        logits_.resize(std::size_t(rows_) * cfg_.vocab_size);
        logprobs_.resize(logits_.size());
    }

    // feed one token per row; returns log-probabilities [rows, vocab]
    const std::vector<float>& step(const std::vector<int>& tokens) {
        const int d = cfg_.d_model;
        const int t = t_++;
        if (t >= cap_) throw InternalError("decoder stepped past its cache capacity");

        std::vector<float> x(std::size_t(rows_) * d);
        kernels::embed_gather(p_.at("embed").data.data(), tokens.data(), x.data(), rows_, d,
                              std::sqrt(float(d)));
        kernels::add_bias(x.data(), pos_.data.data() + std::size_t(t) * d, x.data(), rows_, d);

        std::vector<float> normed(x.size()), q(x.size()), k(x.size()), v(x.size()),
            ctx(x.size()), out(x.size());
        for (int l = 0; l < cfg_.n_dec_layers; ++l) {
            const std::string pre = "dec." + std::to_string(l);
            // self attention over the cache
            norm_into(x, pre + ".ln1", normed);
            linear_into(normed.data(), rows_, pre + ".self.wq", q.data());
            linear_into(normed.data(), rows_, pre + ".self.wk", k.data());
            linear_into(normed.data(), rows_, pre + ".self.wv", v.data());
            store_cache(self_k_[l], k, t);
            store_cache(self_v_[l], v, t);
            attend_self(q, self_k_[l], self_v_[l], t + 1, ctx);
            linear_into(ctx.data(), rows_, pre + ".self.wo", out.data());
            kernels::acc(x.data(), out.data(), std::int64_t(x.size()));
            // cross attention
            norm_into(x, pre + ".ln2", normed);
            linear_into(normed.data(), rows_, pre + ".cross.wq", q.data());
            attend_cross(q, cross_k_[l], cross_v_[l], ctx);
            linear_into(ctx.data(), rows_, pre + ".cross.wo", out.data());
            kernels::acc(x.data(), out.data(), std::int64_t(x.size()));
            // feed forward
            norm_into(x, pre + ".ln3", normed);
            std::vector<float> hidden(std::size_t(rows_) * cfg_.d_ff);
            linear_into(normed.data(), rows_, pre + ".ffn.w1", hidden.data());
            kernels::relu(hidden.data(), hidden.data(), std::int64_t(hidden.size()));
            linear_into(hidden.data(), rows_, pre + ".ffn.w2", out.data());
            kernels::acc(x.data(), out.data(), std::int64_t(x.size()));
        }
        norm_into(x, "dec.final_ln", normed);
        kernels::matmul_nt(normed.data(), p_.at("embed").data.data(), logits_.data(), rows_, d,
                           cfg_.vocab_size);
        log_softmax_rows();
        return logprobs_;
    }

    // new row r continues from old row parent[r]
    void reorder(const std::vector<int>& parent) {
        const int d = cfg_.d_model;
        scratch_.resize(std::size_t(rows_) * cap_ * d);
        for (int l = 0; l < cfg_.n_dec_layers; ++l) {
            permute(self_k_[l], parent, d);
            permute(self_v_[l], parent, d);
        }
    }

    int steps_taken() const { return t_; }

private:
    void linear_into(const float* in, std::int64_t in_rows, const std::string& name, float* out) {
        const auto& w = p_.at(name + ".w");
        kernels::matmul_nn(in, w.data.data(), out, static_cast<int>(in_rows), w.dim(0), w.dim(1));
        kernels::add_bias(out, p_.at(name + ".b").data.data(), out, static_cast<int>(in_rows),
                          w.dim(1));
    }

    void norm_into(const std::vector<float>& x, const std::string& name, std::vector<float>& out) {
        const int d = cfg_.d_model;
        rstd_.resize(rows_);
        mean_.resize(rows_);
        kernels::layernorm(x.data(), p_.at(name + ".g").data.data(), p_.at(name + ".b").data.data(),
                           out.data(), rstd_.data(), mean_.data(), rows_, d, 1e-5f);
    }

    void store_cache(std::vector<float>& cache, const std::vector<float>& kv, int t) {
        const int d = cfg_.d_model;
        for (int r = 0; r < rows_; ++r)
            std::copy(kv.begin() + std::size_t(r) * d, kv.begin() + std::size_t(r + 1) * d,
                      cache.begin() + (std::size_t(r) * cap_ + t) * d);
    }

    // attention of the current position against `len` cached positions
    void attend_self(const std::vector<float>& q, const std::vector<float>& kc,
                     const std::vector<float>& vc, int len, std::vector<float>& ctx) {
        const int d = cfg_.d_model;
        const float inv_sqrt = 1.0f / std::sqrt(float(dh_));
        auto row = [&](int r) {
            for (int h = 0; h < heads_; ++h) {
                const float* qh = q.data() + std::size_t(r) * d + h * dh_;
                float scores[kMaxCache];
                for (int j = 0; j < len; ++j) {
                    const float* kj = kc.data() + (std::size_t(r) * cap_ + j) * d + h * dh_;
                    float acc = 0.0f;
                    for (int e = 0; e < dh_; ++e) acc += qh[e] * kj[e];
                    scores[j] = acc * inv_sqrt;
                }
                softmax_inplace(scores, len);
                float* ch = ctx.data() + std::size_t(r) * d + h * dh_;
                for (int e = 0; e < dh_; ++e) ch[e] = 0.0f;
                for (int j = 0; j < len; ++j) {
                    const float* vj = vc.data() + (std::size_t(r) * cap_ + j) * d + h * dh_;
                    for (int e = 0; e < dh_; ++e) ch[e] += scores[j] * vj[e];
                }
            }
        };
        if (kernels::backend() == kernels::Backend::Parallel) {
#pragma omp parallel for schedule(static)
            for (int r = 0; r < rows_; ++r) row(r);
        } else {
            for (int r = 0; r < rows_; ++r) row(r);
        }
    }

    void attend_cross(const std::vector<float>& q, const std::vector<float>& kc,
                      const std::vector<float>& vc, std::vector<float>& ctx) {
        const int d = cfg_.d_model;
        const float inv_sqrt = 1.0f / std::sqrt(float(dh_));
        auto row = [&](int r) {
            const int b = sent_[r];
            const float* mask = cross_mask_.data() + std::size_t(b) * src_len_;
            for (int h = 0; h < heads_; ++h) {
                const float* qh = q.data() + std::size_t(r) * d + h * dh_;
                float scores[kMaxCache];
                for (int j = 0; j < src_len_; ++j) {
                    const float* kj = kc.data() + (std::size_t(b) * src_len_ + j) * d + h * dh_;
                    float acc = 0.0f;
                    for (int e = 0; e < dh_; ++e) acc += qh[e] * kj[e];
                    scores[j] = acc * inv_sqrt;
                }
                masked_softmax_inplace(scores, mask, src_len_);
                float* ch = ctx.data() + std::size_t(r) * d + h * dh_;
                for (int e = 0; e < dh_; ++e) ch[e] = 0.0f;
                for (int j = 0; j < src_len_; ++j) {
                    const float* vj = vc.data() + (std::size_t(b) * src_len_ + j) * d + h * dh_;
                    for (int e = 0; e < dh_; ++e) ch[e] += scores[j] * vj[e];
                }
            }
        };
        if (kernels::backend() == kernels::Backend::Parallel) {
#pragma omp parallel for schedule(static)
            for (int r = 0; r < rows_; ++r) row(r);
        } else {
            for (int r = 0; r < rows_; ++r) row(r);
        }
    }

    // same operation order as kernels::attn_softmax with an all-ones mask
    static void softmax_inplace(float* s, int n) {
        float mx = s[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, s[j]);
        float z = 0.0f;
        for (int j = 0; j < n; ++j) {
            s[j] = std::exp(s[j] - mx);
            z += s[j];
        }
        const float inv = 1.0f / z;
        for (int j = 0; j < n; ++j) s[j] *= inv;
    }

    static void masked_softmax_inplace(float* s, const float* mask, int n) {
        float mx = 0.0f;
        bool any = false;
        for (int j = 0; j < n; ++j)
            if (mask[j] > 0.0f && (!any || s[j] > mx)) {
                mx = s[j];
                any = true;
            }
        if (!any) {
            for (int j = 0; j < n; ++j) s[j] = 0.0f;
            return;
        }
        float z = 0.0f;
        for (int j = 0; j < n; ++j) {
            s[j] = mask[j] > 0.0f ? std::exp(s[j] - mx) : 0.0f;
            z += s[j];
        }
        const float inv = 1.0f / z;
        for (int j = 0; j < n; ++j) s[j] *= inv;
    }

    void log_softmax_rows() {
        const int v = cfg_.vocab_size;
        auto row = [&](int r) {
            const float* lr = logits_.data() + std::size_t(r) * v;
            float* out = logprobs_.data() + std::size_t(r) * v;
            float mx = lr[0];
            for (int j = 1; j < v; ++j) mx = std::max(mx, lr[j]);
            float z = 0.0f;
            for (int j = 0; j < v; ++j) z += std::exp(lr[j] - mx);
            const float logz = std::log(z) + mx;
            for (int j = 0; j < v; ++j) out[j] = lr[j] - logz;
        };
        if (kernels::backend() == kernels::Backend::Parallel) {
#pragma omp parallel for schedule(static)
            for (int r = 0; r < rows_; ++r) row(r);
        } else {
            for (int r = 0; r < rows_; ++r) row(r);
        }
    }

    void permute(std::vector<float>& cache, const std::vector<int>& parent, int d) {
        const std::size_t row_bytes = std::size_t(cap_) * d;
        for (int r = 0; r < rows_; ++r)
            std::copy(cache.begin() + std::size_t(parent[r]) * row_bytes,
                      cache.begin() + std::size_t(parent[r]) * row_bytes + std::size_t(t_) * d,
                      scratch_.begin() + std::size_t(r) * row_bytes);
        std::swap(cache, scratch_);
    }

    static constexpr int kMaxCache = 128;

    const ModelParams<float>& p_;
    const ModelConfig& cfg_;
    int rows_, cap_;
    std::vector<int> sent_;
    int src_len_;
    int heads_, dh_;
    Tensor<float> pos_;
    int t_ = 0;
    std::vector<std::vector<float>> self_k_, self_v_, cross_k_, cross_v_;
    std::vector<float> cross_mask_, logits_, logprobs_, rstd_, mean_, scratch_;
};

// Run the shared graph forward once (1-token dummy target) to get encoder
// output through the exact training code path. With train_mode off the
// forward treats parameters as read-only constants.
std::vector<float> encode_sources(const ModelParams<float>& params,
                                  const std::vector<std::vector<int>>& srcs, int src_len,
                                  std::vector<int>& padded_out) {
    const int b = static_cast<int>(srcs.size());
    Batch batch;
    batch.size = b;
    batch.src_len = src_len;
    batch.tgt_len = 1;
    batch.src.assign(std::size_t(b) * src_len, Vocab::kPad);
    for (int i = 0; i < b; ++i)
        std::copy(srcs[i].begin(), srcs[i].end(), batch.src.begin() + std::size_t(i) * src_len);
    batch.tgt_in.assign(b, Vocab::kBos);
    batch.tgt_out.assign(b, Vocab::kEos);
    batch.loss_weight.assign(b, 0.0f);

    Graph<float> graph;
    Rng rng(0);
    auto result =
        forward(graph, const_cast<ModelParams<float>&>(params), batch, 0.0f, false, rng);
    padded_out = batch.src;
    return graph.val(result.enc_out).data;
}

struct LiveHyp {
    std::vector<int> tokens;
    double logprob = 0.0;
    int row = -1;
};

struct FinishedHyp {
    std::vector<int> tokens;  // without </s>
    double logprob = 0.0;     // with </s>
    double score = 0.0;
};

bool better(double score_a, const std::vector<int>& tok_a, double score_b,
            const std::vector<int>& tok_b) {
    if (score_a != score_b) return score_a > score_b;
    return tok_a < tok_b;
}

}  // namespace

int default_max_len(int src_untagged_len) { return 2 * src_untagged_len + 5; }

std::vector<DecodedHyp> beam_decode_batch(const ModelParams<float>& params,
                                          const std::vector<std::vector<int>>& tagged_srcs,
                                          int beam, const std::vector<int>& max_len) {
    if (tagged_srcs.empty()) return {};
    if (beam < 1) throw ConfigError("beam size must be >= 1");
    const int n = static_cast<int>(tagged_srcs.size());
    int src_len = 1, global_max = 1;
    for (const auto& s : tagged_srcs) {
        if (s.empty()) throw DataError("cannot decode an empty source");
        src_len = std::max(src_len, static_cast<int>(s.size()));
    }
    for (int m : max_len) global_max = std::max(global_max, m);
    if (static_cast<int>(max_len.size()) != n) throw ConfigError("max_len per sentence required");
    if (global_max + 1 > params.config.max_pos)
        throw ConfigError("max_len exceeds the position table");

    std::vector<int> padded_src;
    const auto enc_out = encode_sources(params, tagged_srcs, src_len, padded_src);

    const int rows = n * beam;
    std::vector<int> sent_of_row(rows);
    for (int r = 0; r < rows; ++r) sent_of_row[r] = r / beam;
    IncrementalDecoder dec(params, rows, global_max + 1, sent_of_row, enc_out, padded_src, n,
                           src_len);

    std::vector<std::vector<LiveHyp>> live(n);
    std::vector<std::vector<FinishedHyp>> finished(n);
    std::vector<bool> done(n, false);
    for (int s = 0; s < n; ++s) {
        if (max_len[s] < 1) {
            done[s] = true;
            continue;
        }
        LiveHyp h;
        h.row = s * beam;
        live[s].push_back(h);
    }

    std::vector<int> feed(rows, Vocab::kBos);
    const int vocab = params.config.vocab_size;

    for (int t = 0; t < global_max; ++t) {
        bool all_done = true;
        for (int s = 0; s < n; ++s) all_done &= done[s];
        if (all_done) break;

        const auto& lp = dec.step(feed);

        std::vector<int> parent(rows);
        for (int r = 0; r < rows; ++r) parent[r] = r;
        std::fill(feed.begin(), feed.end(), Vocab::kEos);

        for (int s = 0; s < n; ++s) {
            if (done[s]) continue;
            const bool last_step = (t == max_len[s] - 1);

            struct Cand {
                double logprob;
                int hyp;
                int token;
            };
            std::vector<Cand> cands;
            for (std::size_t i = 0; i < live[s].size(); ++i) {
                const float* row_lp = lp.data() + std::size_t(live[s][i].row) * vocab;
                if (last_step) {
                    cands.push_back({live[s][i].logprob + row_lp[Vocab::kEos],
                                     static_cast<int>(i), Vocab::kEos});
                    continue;
                }
                for (int v = 0; v < vocab; ++v) {
                    if (v == Vocab::kPad) continue;
                    cands.push_back({live[s][i].logprob + row_lp[v], static_cast<int>(i), v});
                }
            }
            std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
                if (a.logprob != b.logprob) return a.logprob > b.logprob;
                if (a.token != b.token) return a.token < b.token;
                return a.hyp < b.hyp;
            });

            std::vector<LiveHyp> next;
            for (const auto& c : cands) {
                if (static_cast<int>(next.size()) >= beam) break;
                const LiveHyp& src_hyp = live[s][c.hyp];
                if (c.token == Vocab::kEos) {
                    FinishedHyp f;
                    f.tokens = src_hyp.tokens;
                    f.logprob = c.logprob;
                    f.score = c.logprob / double(src_hyp.tokens.size() + 1);
                    finished[s].push_back(std::move(f));
                    continue;
                }
                LiveHyp h;
                h.tokens = src_hyp.tokens;
                h.tokens.push_back(c.token);
                h.logprob = c.logprob;
                h.row = s * beam + static_cast<int>(next.size());
                parent[h.row] = src_hyp.row;
                feed[h.row] = c.token;
                next.push_back(std::move(h));
            }
            live[s] = std::move(next);

            if (live[s].empty() || last_step) {
                done[s] = true;
                continue;
            }
            // no live hypothesis can beat the best finished one: any
            // extension scores at most logprob / max_len (logprobs <= 0)
            if (!finished[s].empty()) {
                double best_fin = finished[s][0].score;
                for (const auto& f : finished[s]) best_fin = std::max(best_fin, f.score);
                bool can_improve = false;
                for (const auto& h : live[s])
                    if (h.logprob / double(max_len[s]) > best_fin) can_improve = true;
                if (!can_improve) done[s] = true;
            }
        }
        dec.reorder(parent);
    }

    std::vector<DecodedHyp> out(n);
    for (int s = 0; s < n; ++s) {
        DecodedHyp& best = out[s];
        if (!finished[s].empty()) {
            const FinishedHyp* pick = &finished[s][0];
            for (const auto& f : finished[s])
                if (better(f.score, f.tokens, pick->score, pick->tokens)) pick = &f;
            best.tokens = pick->tokens;
            best.logprob = pick->logprob;
            best.score = pick->score;
            best.finished = true;
        } else if (!live[s].empty()) {
            const LiveHyp* pick = &live[s][0];
            double pick_score = pick->logprob / std::max<double>(1.0, double(pick->tokens.size()));
            for (const auto& h : live[s]) {
                const double sc = h.logprob / std::max<double>(1.0, double(h.tokens.size()));
                if (better(sc, h.tokens, pick_score, pick->tokens)) {
                    pick = &h;
                    pick_score = sc;
                }
            }
            best.tokens = pick->tokens;
            best.logprob = pick->logprob;
            best.score = pick_score;
            best.finished = false;
        }
    }
    return out;
}

DecodedHyp beam_search(const ModelParams<float>& params, const Vocab& vocab,
                       const std::vector<int>& src_tokens, const std::string& tgt_lang_tag,
                       int beam, int max_len) {
    std::vector<int> tagged;
    tagged.push_back(vocab.tag_id(tgt_lang_tag));
    tagged.insert(tagged.end(), src_tokens.begin(), src_tokens.end());
    if (max_len <= 0) max_len = default_max_len(static_cast<int>(src_tokens.size()));
    return beam_decode_batch(params, {tagged}, beam, {max_len})[0];
}

std::vector<int> strip_specials(const std::vector<int>& tokens, const Vocab& vocab) {
    std::vector<int> out;
    for (int t : tokens)
        if (vocab.is_surface(t)) out.push_back(t);
    return out;
}

DecodedHyp pivot_translate(const ModelParams<float>& params, const Vocab& vocab,
                           const std::vector<int>& src_tokens, const std::string& src_lang,
                           const std::string& tgt_lang, int beam,
                           const std::optional<std::vector<int>>& oracle_english) {
    if (src_lang == "en" || tgt_lang == "en")
        throw ConfigError("pivot translation requires non-English endpoints");
    std::vector<int> english;
    if (oracle_english) {
        english = *oracle_english;
    } else {
        auto mid = beam_search(params, vocab, src_tokens, "en", beam);
        english = strip_specials(mid.tokens, vocab);
    }
    return beam_search(params, vocab, english, tgt_lang, beam);
}

std::vector<DecodedHyp> pivot_translate_batch(const ModelParams<float>& params, const Vocab& vocab,
                                              const std::vector<std::vector<int>>& src_tokens,
                                              const std::string& src_lang,
                                              const std::string& tgt_lang, int beam) {
    if (src_lang == "en" || tgt_lang == "en")
        throw ConfigError("pivot translation requires non-English endpoints");
    const int en_tag = vocab.tag_id("en");
    const int tgt_tag = vocab.tag_id(tgt_lang);

    std::vector<std::vector<int>> stage1(src_tokens.size());
    std::vector<int> max1(src_tokens.size());
    for (std::size_t i = 0; i < src_tokens.size(); ++i) {
        stage1[i].push_back(en_tag);
        stage1[i].insert(stage1[i].end(), src_tokens[i].begin(), src_tokens[i].end());
        max1[i] = default_max_len(static_cast<int>(src_tokens[i].size()));
    }
    const auto mids = beam_decode_batch(params, stage1, beam, max1);

    std::vector<std::vector<int>> stage2(mids.size());
    std::vector<int> max2(mids.size());
    for (std::size_t i = 0; i < mids.size(); ++i) {
        const auto english = strip_specials(mids[i].tokens, vocab);
        stage2[i].push_back(tgt_tag);
        stage2[i].insert(stage2[i].end(), english.begin(), english.end());
        max2[i] = default_max_len(static_cast<int>(english.size()));
    }
    return beam_decode_batch(params, stage2, beam, max2);
}

}  // namespace zsnmt
