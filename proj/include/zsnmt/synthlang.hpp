#ifndef ZSNMT_SYNTHLANG_HPP
#define ZSNMT_SYNTHLANG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zsnmt/common.hpp"
#include "zsnmt/rng.hpp"
#include "zsnmt/vocab.hpp"

namespace zsnmt {

// Sequence of language-neutral symbol ids in [0, v_sem).
struct SemanticSeq {
    std::vector<int> tokens;
};

enum class ReorderKind { Identity, Reverse, AdjacentSwap, Rotate };

struct Reorder {
    ReorderKind kind = ReorderKind::Identity;
    int k = 0;  // rotation amount, Rotate only

    std::vector<int> apply(const std::vector<int>& in) const;
    std::string name() const;
    static Reorder parse(const std::string& name);
};

// A synthetic language: bijective cipher from semantic symbols into this
// language's surface block, plus a deterministic length-preserving reorder.
struct LanguageSpec {
    std::string lang_id;
    std::vector<int> cipher;  // semantic id -> surface slot, a permutation of [0, v_sem)
    Reorder reorder;
};

struct ParallelExample {
    std::string src_lang;
    std::string tgt_lang;
    std::vector<int> src;  // first token is the <2tgt> tag
    std::vector<int> tgt;  // surface tokens only
};

struct CorpusConfig {
    std::vector<std::string> languages = {"en", "aa", "bb", "cc"};  // "en" required
    int v_sem = 64;
    int len_min = 4;
    int len_max = 16;
    int train_per_direction = 20000;
    int dev_per_direction = 1000;
    int test_per_direction = 1000;
    std::uint64_t seed = 1;
};

// English-centric training data plus dev/test references for every ordered
// direction, including the zero-shot ones.
struct CorpusBundle {
    CorpusConfig config;
    std::vector<LanguageSpec> languages;  // "en" first
    Vocab vocab;
    std::vector<ParallelExample> train;
    std::map<std::string, std::vector<ParallelExample>> dev;   // key "aa-bb" = aa => bb
    std::map<std::string, std::vector<ParallelExample>> test;
    std::uint64_t seed = 0;

    const LanguageSpec& spec_of(const std::string& lang) const;
    static std::string dir_key(const std::string& src, const std::string& tgt) { return src + "-" + tgt; }
};

std::vector<SemanticSeq> gen_semantic(std::uint64_t rng_seed, int count, int len_min, int len_max,
                                      int v_sem);

// Surface token ids (global vocab space): reorder(cipher(sem)).
std::vector<int> realize(const SemanticSeq& sem, const LanguageSpec& lang, const Vocab& vocab);

// Inverse of realize: surface tokens back to the semantic sequence.
SemanticSeq unrealize(const std::vector<int>& surface, const LanguageSpec& lang, const Vocab& vocab);

CorpusBundle build_corpus(const CorpusConfig& config);

// Corpus directory layout: train.tsv / dev.tsv / test.tsv with one record per
// line (src_lang, tgt_lang, src tokens, tgt tokens; tab-separated, tokens
// space-separated) and a meta.json sidecar with language specs, the vocab
// table and the seed.
void save_corpus(const CorpusBundle& bundle, const std::string& dir);
CorpusBundle load_corpus(const std::string& dir);

}  // namespace zsnmt

#endif
