#include "zsnmt/noiser.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace zsnmt {

void SpanStats::merge(const SpanStats& other) {
    draws += other.draws;
    nonzero_draws += other.nonzero_draws;
    sum_lengths += other.sum_lengths;
    sum_nonzero += other.sum_nonzero;
    tokens_seen += other.tokens_seen;
    tokens_removed += other.tokens_removed;
    masks_emitted += other.masks_emitted;
}

NoisedExample noise(const std::vector<int>& tokens, const NoiseConfig& cfg, Rng& rng,
                    SpanStats* stats) {
    if (tokens.empty()) throw DataError("cannot noise an empty sequence");
    if (cfg.mask_ratio < 0.0 || cfg.mask_ratio >= 1.0) throw ConfigError("mask_ratio must be in [0, 1)");
    if (cfg.poisson_lambda <= 0.0) throw ConfigError("poisson_lambda must be positive");
    for (int t : tokens)
        if (t == cfg.mask_token || t < Vocab::kNumSpecials)
            throw DataError("input to noise() contains reserved tokens");

    const int n = static_cast<int>(tokens.size());
    NoisedExample out;
    out.clean = tokens;
    if (stats) stats->tokens_seen += n;

    // round-half-up budget; tiny sequences pass through unmasked
    const int budget = (n < 2) ? 0 : static_cast<int>(std::floor(cfg.mask_ratio * n + 0.5));
    std::vector<int> span_of(n, -1);       // original position -> span id, -1 uncovered
    std::vector<int> insertions_at(n + 1, 0);  // gap -> number of inserted masks
    int removed = 0;
    int next_span = 0;

    while (removed < budget) {
        const int draw = rng.poisson(cfg.poisson_lambda);
        if (stats) {
            ++stats->draws;
            stats->sum_lengths += draw;
            if (draw > 0) {
                ++stats->nonzero_draws;
                stats->sum_nonzero += draw;
            }
        }
        if (draw == 0) {
            insertions_at[rng.below(n + 1)] += 1;
            continue;
        }
        // uniform start among uncovered positions
        std::vector<int> candidates;
        candidates.reserve(n);
        for (int p = 0; p < n; ++p)
            if (span_of[p] < 0) candidates.push_back(p);
        if (candidates.empty()) break;
        const int start = candidates[rng.below(candidates.size())];
        int len = std::min(draw, budget - removed);
        const int id = next_span++;
        for (int p = start; p < n && len > 0 && span_of[p] < 0; ++p, --len) {
            span_of[p] = id;
            ++removed;
        }
    }

    for (int p = 0; p <= n; ++p) {
        for (int i = 0; i < insertions_at[p]; ++i) out.noised.push_back(cfg.mask_token);
        if (p == n) break;
        if (span_of[p] < 0) {
            out.noised.push_back(tokens[p]);
        } else if (p == 0 || span_of[p - 1] != span_of[p]) {
            out.noised.push_back(cfg.mask_token);  // one mask per span
        }
    }
    if (stats) {
        stats->tokens_removed += removed;
        for (int t : out.noised) stats->masks_emitted += (t == cfg.mask_token);
    }
    return out;
}

std::vector<NoisedExample> build_denoising_corpus(const CorpusBundle& bundle,
                                                  const NoiseConfig& cfg, SpanStats* stats) {
    // Distinct English sentences across both sides of the train split.
    std::vector<std::vector<int>> sentences;
    std::set<std::vector<int>> seen;
    auto consider = [&](std::vector<int> s) {
        if (s.empty()) return;
        if (seen.insert(s).second) sentences.push_back(std::move(s));
    };
    bool any_en = false;
    for (const auto& ex : bundle.train) {
        if (ex.tgt_lang == "en") {
            any_en = true;
            consider(ex.tgt);
        }
        if (ex.src_lang == "en") {
            any_en = true;
            consider(std::vector<int>(ex.src.begin() + 1, ex.src.end()));  // drop the tag
        }
    }
    if (!any_en) throw DataError("bundle has no English sides to build a denoising corpus from");

    Rng base(cfg.seed);
    std::vector<NoisedExample> corpus(sentences.size());
    std::vector<SpanStats> per(stats ? sentences.size() : 0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(sentences.size()); ++i) {
        Rng rng = base.fork(static_cast<std::uint64_t>(i));
        corpus[i] = noise(sentences[i], cfg, rng, stats ? &per[i] : nullptr);
    }
    if (stats)
        for (const auto& s : per) stats->merge(s);
    return corpus;
}

}  // namespace zsnmt
