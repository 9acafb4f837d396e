#ifndef ZSNMT_RNG_HPP
#define ZSNMT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace zsnmt {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random stream. mt19937_64 output is pinned by the standard and
// all derived distributions below are hand-rolled, so sequences are bit-identical
// across platforms and standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

    std::uint64_t u64() { return gen_(); }

    // 53-bit uniform in [0, 1).
    double real01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). Rejection sampling keeps it exactly uniform.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x = u64();
        while (x >= limit) x = u64();
        return x % n;
    }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Knuth's product method; fine for small lambda.
    int poisson(double lambda) {
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= real01();
        } while (p > limit);
        return k - 1;
    }

    // Box-Muller with cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = real01();
        const double v = real01();
        const double r = std::sqrt(-2.0 * std::log1p(-u));
        const double a = 2.0 * M_PI * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream keyed by (seed, stream id). Used for per-example
    // work so results do not depend on processing order.
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed2701)));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace zsnmt

#endif
