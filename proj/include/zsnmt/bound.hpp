#ifndef ZSNMT_BOUND_HPP
#define ZSNMT_BOUND_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "zsnmt/rng.hpp"

namespace zsnmt {

// Finite x -> h -> y chain with an extra noise channel on h. The Markov
// factorization P(x,h,y) = P(x) P(h|x) P(y|h) holds exactly by construction,
// so P(y|h,x) = P(y|h) is an identity here rather than an approximation.
struct DiscreteChain {
    std::vector<double> px;                           // [X]
    std::vector<std::vector<double>> ph_given_x;      // [X][H]
    std::vector<std::vector<double>> py_given_h;      // [H][Y]
    std::vector<std::vector<double>> noise_channel;   // [H][Hbar]

    int nx() const { return static_cast<int>(px.size()); }
    int nh() const { return static_cast<int>(ph_given_x.empty() ? 0 : ph_given_x[0].size()); }
    int ny() const { return static_cast<int>(py_given_h.empty() ? 0 : py_given_h[0].size()); }
    int nhbar() const { return static_cast<int>(noise_channel.empty() ? 0 : noise_channel[0].size()); }

    void validate() const;  // row sums 1 within 1e-12, entries >= 0, sizes <= 32

    // Dirichlet-style random chain; with deterministic_y the y-emission is a
    // random permutation matrix (|Y| = |H|), the regime where P(h|y) equals
    // the exact posterior.
    static DiscreteChain random(Rng& rng, int max_size = 8, bool deterministic_y = false);
};

// KL(q || p) in extended reals: +inf when q puts mass outside supp(p),
// 0 log 0 = 0.
double kl_divergence(const std::vector<double>& q, const std::vector<double>& p);

std::vector<double> marginal_h(const DiscreteChain& chain);                  // P(h)
std::vector<double> denoiser_posterior(const DiscreteChain& chain, int hbar);  // P(h|hbar)
std::vector<double> posterior_h_given_y(const DiscreteChain& chain, int y);    // P(h|y)

// log P(y|x) = log sum_h P(h|x) P(y|h); -inf when the pair has probability 0
double true_loglik(const DiscreteChain& chain, int x, int y);

// exact posterior P(h|x,y); zero-probability pair is a data error
std::vector<double> posterior(const DiscreteChain& chain, int x, int y);

// sum_h q(h) log P(y|h) - KL(q || P(h|x)); -inf when q escapes supp(P(h|x))
// or hits a zero-probability emission
double elbo(const DiscreteChain& chain, const std::vector<double>& q, int x, int y);

struct GapReport {
    double true_ll = 0.0;
    double elbo = 0.0;
    double delta = 0.0;       // true_ll - elbo
    double kl_posterior = 0.0;  // KL(q || P(h|x,y)), the exact gap
    double kl_approx = 0.0;     // KL(q || P(h|y)), the approximate gap
};

GapReport gap(const DiscreteChain& chain, const std::vector<double>& q, int x, int y);

struct BoundTrial {
    GapReport report;
    bool q_is_posterior = false;
    bool deterministic_y = false;
};

// Independent random trials (parallelized, per-trial substreams). Every third
// trial uses the exact posterior as q; the others use the denoiser posterior
// P(h|hbar) for a sampled hbar.
std::vector<BoundTrial> run_bound_trials(int trials, std::uint64_t seed, bool deterministic_y);

struct BoundSummary {
    int trials = 0;
    double max_bound_violation = 0.0;   // max(elbo - true_ll), <= 0 means the bound held
    double max_gap_identity_error = 0.0;  // max |delta - kl_posterior| over finite trials
    double max_posterior_delta = 0.0;     // max |delta| over q = posterior trials
    double max_approx_error = 0.0;        // max |delta - kl_approx| over finite trials
    int infinite_pairs = 0;    // trials where delta and kl diverged together
    int infinite_mismatch = 0;  // trials where exactly one of them diverged
    bool pass(bool deterministic_y) const;
};

BoundSummary summarize_trials(const std::vector<BoundTrial>& trials);

void write_trials_csv(const std::vector<BoundTrial>& trials, const std::string& path);

}  // namespace zsnmt

#endif
