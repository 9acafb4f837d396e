#ifndef ZSNMT_BLEU_HPP
#define ZSNMT_BLEU_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "zsnmt/vocab.hpp"

namespace zsnmt {

struct BleuReport {
    double score = 0.0;  // [0, 100]
    std::array<double, 4> precisions{};
    double brevity_penalty = 1.0;
    std::int64_t hyp_len = 0;
    std::int64_t ref_len = 0;
};

// Corpus-level 4-gram BLEU: clipped n-gram counts pooled over the corpus,
// exponential brevity penalty, zero precisions replaced by 1e-9 so short
// corpora still score reproducibly.
BleuReport corpus_bleu(const std::vector<std::vector<int>>& hypotheses,
                       const std::vector<std::vector<int>>& references);

// Fraction of hypotheses whose surface tokens belong in strict majority to
// the expected language. Hypotheses without surface tokens count off-target.
double language_accuracy(const std::vector<std::vector<int>>& hypotheses,
                         const std::string& expected_lang, const Vocab& vocab);

}  // namespace zsnmt

#endif
