#include "zsnmt/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "zsnmt/common.hpp"

namespace zsnmt {

namespace {

constexpr double kEpsilonPrecision = 1e-9;

// n <= 4 tokens packed into 16 bits each; offset by n so different orders
// never collide
std::uint64_t pack_ngram(const std::vector<int>& tokens, std::size_t start, int n) {
    std::uint64_t key = static_cast<std::uint64_t>(n);
    for (int i = 0; i < n; ++i) {
        const int t = tokens[start + i];
        if (t < 0 || t >= (1 << 16)) throw DataError("token id does not fit the n-gram packing");
        key = (key << 16) | static_cast<std::uint64_t>(t);
    }
    return key;
}

void count_ngrams(const std::vector<int>& tokens, int n,
                  std::unordered_map<std::uint64_t, std::int64_t>& counts) {
    if (static_cast<int>(tokens.size()) < n) return;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[pack_ngram(tokens, i, n)];
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<int>>& hypotheses,
                       const std::vector<std::vector<int>>& references) {
    if (hypotheses.empty()) throw DataError("corpus_bleu on an empty corpus");
    if (hypotheses.size() != references.size())
        throw DataError("hypothesis/reference count mismatch");

    BleuReport report;
    std::array<std::int64_t, 4> matched{}, total{};
    std::unordered_map<std::uint64_t, std::int64_t> hyp_counts, ref_counts;
    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        report.hyp_len += static_cast<std::int64_t>(hypotheses[s].size());
        report.ref_len += static_cast<std::int64_t>(references[s].size());
        for (int n = 1; n <= 4; ++n) {
            hyp_counts.clear();
            ref_counts.clear();
            count_ngrams(hypotheses[s], n, hyp_counts);
            count_ngrams(references[s], n, ref_counts);
            for (const auto& [key, count] : hyp_counts) {
                total[n - 1] += count;
                const auto it = ref_counts.find(key);
                if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
            }
        }
    }

    double log_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
        double p = total[n] > 0 ? double(matched[n]) / double(total[n]) : 0.0;
        report.precisions[n] = p;
        if (p <= 0.0) p = kEpsilonPrecision;
        log_sum += std::log(p);
    }
    if (report.hyp_len == 0) {
        report.brevity_penalty = 0.0;
        report.score = 0.0;
        return report;
    }
    report.brevity_penalty =
        report.hyp_len >= report.ref_len
            ? 1.0
            : std::exp(1.0 - double(report.ref_len) / double(report.hyp_len));
    report.score = report.brevity_penalty * std::exp(log_sum / 4.0) * 100.0;
    return report;
}

double language_accuracy(const std::vector<std::vector<int>>& hypotheses,
                         const std::string& expected_lang, const Vocab& vocab) {
    vocab.surface_base(expected_lang);  // validates the language is known
    if (hypotheses.empty()) throw DataError("language_accuracy on an empty corpus");
    std::int64_t on_target = 0;
    for (const auto& hyp : hypotheses) {
        std::int64_t surface = 0, expected = 0;
        for (int t : hyp) {
            if (!vocab.is_surface(t)) continue;
            ++surface;
            expected += vocab.lang_of(t) == expected_lang;
        }
        on_target += (surface > 0 && 2 * expected > surface);
    }
    return double(on_target) / double(hypotheses.size());
}

}  // namespace zsnmt
