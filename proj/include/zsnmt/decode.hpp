#ifndef ZSNMT_DECODE_HPP
#define ZSNMT_DECODE_HPP

#include <optional>
#include <string>
#include <vector>

#include "zsnmt/model.hpp"
#include "zsnmt/vocab.hpp"

namespace zsnmt {

struct DecodedHyp {
    std::vector<int> tokens;  // generated tokens, terminating </s> stripped
    double logprob = 0.0;     // cumulative, </s> included when finished
    double score = 0.0;       // logprob / generated length (</s> counted)
    bool finished = false;    // false = ran out of steps, best unfinished returned
};

// Beam search with per-hypothesis length normalization (logprob divided by
// generated length). A hypothesis may emit at most max_len tokens including
// the terminating </s>; the final step admits only </s>. Score ties break
// toward the lexicographically smaller token sequence, so equal-probability
// candidates resolve to the lowest token id.
std::vector<DecodedHyp> beam_decode_batch(const ModelParams<float>& params,
                                          const std::vector<std::vector<int>>& tagged_srcs,
                                          int beam, const std::vector<int>& max_len);

DecodedHyp beam_search(const ModelParams<float>& params, const Vocab& vocab,
                       const std::vector<int>& src_tokens, const std::string& tgt_lang_tag,
                       int beam = 5, int max_len = 0);

// Two-step decoding through English: src => en, then en => tgt. `src_tokens`
// carries no tag. When `oracle_english` is given it replaces the first-step
// output (ground-truth pivot diagnostic).
DecodedHyp pivot_translate(const ModelParams<float>& params, const Vocab& vocab,
                           const std::vector<int>& src_tokens, const std::string& src_lang,
                           const std::string& tgt_lang, int beam = 5,
                           const std::optional<std::vector<int>>& oracle_english = std::nullopt);

// Batched pivot over many sentences (two batched beam passes).
std::vector<DecodedHyp> pivot_translate_batch(const ModelParams<float>& params, const Vocab& vocab,
                                              const std::vector<std::vector<int>>& src_tokens,
                                              const std::string& src_lang,
                                              const std::string& tgt_lang, int beam = 5);

// Drop pad/bos/eos/mask and tag tokens.
std::vector<int> strip_specials(const std::vector<int>& tokens, const Vocab& vocab);

int default_max_len(int src_untagged_len);

}  // namespace zsnmt

#endif
