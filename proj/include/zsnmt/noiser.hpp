#ifndef ZSNMT_NOISER_HPP
#define ZSNMT_NOISER_HPP

#include <cstdint>
#include <vector>

#include "zsnmt/rng.hpp"
#include "zsnmt/synthlang.hpp"

namespace zsnmt {

struct NoiseConfig {
    double mask_ratio = 0.30;
    double poisson_lambda = 3.0;
    int mask_token = Vocab::kMask;
    std::uint64_t seed = 1;
};

struct NoisedExample {
    std::vector<int> noised;  // corrupted sequence, contains <mask> tokens
    std::vector<int> clean;   // unmodified original
};

// Aggregate sampler statistics for verification. `sampled` records every raw
// span-length draw, before clipping or budget truncation.
struct SpanStats {
    std::int64_t draws = 0;
    std::int64_t nonzero_draws = 0;
    std::int64_t sum_lengths = 0;       // over all draws, zeros included
    std::int64_t sum_nonzero = 0;
    std::int64_t tokens_seen = 0;
    std::int64_t tokens_removed = 0;
    std::int64_t masks_emitted = 0;

    double mean_sampled_length() const { return draws ? double(sum_lengths) / double(draws) : 0.0; }
    double mean_nonzero_length() const {
        return nonzero_draws ? double(sum_nonzero) / double(nonzero_draws) : 0.0;
    }
    double masked_fraction() const {
        return tokens_seen ? double(tokens_removed) / double(tokens_seen) : 0.0;
    }
    void merge(const SpanStats& other);
};

// Text infilling: replace sampled non-overlapping spans (lengths ~ Poisson)
// with a single mask token until round(mask_ratio * len) tokens are removed.
// A 0-length draw inserts a mask without removing anything. Spans clip at the
// sequence end and at previously covered positions; a draw larger than the
// remaining budget is truncated to it. Sequences shorter than 2 tokens pass
// through unmasked.
NoisedExample noise(const std::vector<int>& tokens, const NoiseConfig& cfg, Rng& rng,
                    SpanStats* stats = nullptr);

// One noised example per distinct English training sentence (first-occurrence
// order; repeats are noised once). Per-sentence substreams make the result
// independent of traversal order.
std::vector<NoisedExample> build_denoising_corpus(const CorpusBundle& bundle,
                                                  const NoiseConfig& cfg,
                                                  SpanStats* stats = nullptr);

}  // namespace zsnmt

#endif
