#include "zsnmt/bound.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "zsnmt/common.hpp"

namespace zsnmt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRowSumTol = 1e-12;
constexpr int kMaxSupport = 32;

void validate_rows(const std::vector<std::vector<double>>& m, const char* what) {
    for (const auto& row : m) {
        if (static_cast<int>(row.size()) > kMaxSupport)
            throw ConfigError(std::string(what) + " support exceeds 32");
        double sum = 0.0;
        for (double p : row) {
            if (p < 0.0) throw DataError(std::string(what) + " has a negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTol)
            throw DataError(std::string(what) + " row does not sum to 1");
    }
}

std::vector<double> random_dist(Rng& rng, int n) {
    // gamma(1) draws with a floor keep every entry well away from zero
    std::vector<double> p(n);
    double sum = 0.0;
    for (auto& x : p) {
        x = -std::log1p(-rng.real01()) + 0.01;
        sum += x;
    }
    for (auto& x : p) x /= sum;
    // exact renormalization to pass the 1e-12 row-sum check
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= total;
    return p;
}

int sample_index(Rng& rng, const std::vector<double>& p) {
    const double u = rng.real01();
    double cum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cum += p[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

}  // namespace

void DiscreteChain::validate() const {
    if (px.empty() || ph_given_x.empty() || py_given_h.empty() || noise_channel.empty())
        throw DataError("chain has an empty component");
    if (static_cast<int>(px.size()) > kMaxSupport) throw ConfigError("px support exceeds 32");
    double sum = 0.0;
    for (double p : px) {
        if (p < 0.0) throw DataError("px has a negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) throw DataError("px does not sum to 1");
    if (static_cast<int>(ph_given_x.size()) != nx()) throw DataError("ph_given_x row count");
    if (static_cast<int>(py_given_h.size()) != nh()) throw DataError("py_given_h row count");
    if (static_cast<int>(noise_channel.size()) != nh()) throw DataError("noise_channel row count");
    validate_rows(ph_given_x, "ph_given_x");
    validate_rows(py_given_h, "py_given_h");
    validate_rows(noise_channel, "noise_channel");
}

DiscreteChain DiscreteChain::random(Rng& rng, int max_size, bool deterministic_y) {
    DiscreteChain chain;
    const int x = static_cast<int>(rng.range(2, max_size));
    const int h = static_cast<int>(rng.range(2, max_size));
    const int y = deterministic_y ? h : static_cast<int>(rng.range(2, max_size));
    const int hbar = static_cast<int>(rng.range(2, max_size));

    chain.px = random_dist(rng, x);
    for (int i = 0; i < x; ++i) chain.ph_given_x.push_back(random_dist(rng, h));
    if (deterministic_y) {
        std::vector<int> perm(h);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        chain.py_given_h.assign(h, std::vector<double>(y, 0.0));
        for (int i = 0; i < h; ++i) chain.py_given_h[i][perm[i]] = 1.0;
    } else {
        for (int i = 0; i < h; ++i) chain.py_given_h.push_back(random_dist(rng, y));
    }
    for (int i = 0; i < h; ++i) chain.noise_channel.push_back(random_dist(rng, hbar));
    chain.validate();
    return chain;
}

double kl_divergence(const std::vector<double>& q, const std::vector<double>& p) {
    if (q.size() != p.size()) throw DataError("KL over mismatched supports");
    double kl = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] == 0.0) continue;  // 0 log 0 = 0
        if (p[i] == 0.0) return kInf;
        kl += q[i] * std::log(q[i] / p[i]);
    }
    return kl;
}

std::vector<double> marginal_h(const DiscreteChain& chain) {
    std::vector<double> ph(chain.nh(), 0.0);
    for (int x = 0; x < chain.nx(); ++x)
        for (int h = 0; h < chain.nh(); ++h) ph[h] += chain.px[x] * chain.ph_given_x[x][h];
    return ph;
}

std::vector<double> denoiser_posterior(const DiscreteChain& chain, int hbar) {
    const auto ph = marginal_h(chain);
    std::vector<double> q(chain.nh());
    double z = 0.0;
    for (int h = 0; h < chain.nh(); ++h) {
        q[h] = ph[h] * chain.noise_channel[h][hbar];
        z += q[h];
    }
    if (z <= 0.0) throw DataError("observed noisy symbol has probability zero");
    for (auto& v : q) v /= z;
    return q;
}

std::vector<double> posterior_h_given_y(const DiscreteChain& chain, int y) {
    const auto ph = marginal_h(chain);
    std::vector<double> q(chain.nh());
    double z = 0.0;
    for (int h = 0; h < chain.nh(); ++h) {
        q[h] = ph[h] * chain.py_given_h[h][y];
        z += q[h];
    }
    if (z <= 0.0) throw DataError("y has probability zero");
    for (auto& v : q) v /= z;
    return q;
}

double true_loglik(const DiscreteChain& chain, int x, int y) {
    double p = 0.0;
    for (int h = 0; h < chain.nh(); ++h) p += chain.ph_given_x[x][h] * chain.py_given_h[h][y];
    return p > 0.0 ? std::log(p) : -kInf;
}

std::vector<double> posterior(const DiscreteChain& chain, int x, int y) {
    std::vector<double> q(chain.nh());
    double z = 0.0;
    for (int h = 0; h < chain.nh(); ++h) {
        q[h] = chain.ph_given_x[x][h] * chain.py_given_h[h][y];
        z += q[h];
    }
    if (z <= 0.0) throw DataError("posterior of a zero-probability pair");
    for (auto& v : q) v /= z;
    return q;
}

double elbo(const DiscreteChain& chain, const std::vector<double>& q, int x, int y) {
    if (static_cast<int>(q.size()) != chain.nh()) throw DataError("q support mismatch");
    double expectation = 0.0;
    for (int h = 0; h < chain.nh(); ++h) {
        if (q[h] == 0.0) continue;
        if (chain.py_given_h[h][y] == 0.0) return -kInf;
        expectation += q[h] * std::log(chain.py_given_h[h][y]);
    }
    const double kl = kl_divergence(q, chain.ph_given_x[x]);
    if (std::isinf(kl)) return -kInf;
    return expectation - kl;
}

GapReport gap(const DiscreteChain& chain, const std::vector<double>& q, int x, int y) {
    GapReport report;
    report.true_ll = true_loglik(chain, x, y);
    report.elbo = elbo(chain, q, x, y);
    report.delta = report.true_ll - report.elbo;  // +inf when the bound is -inf
    report.kl_posterior = kl_divergence(q, posterior(chain, x, y));
    report.kl_approx = kl_divergence(q, posterior_h_given_y(chain, y));
    return report;
}

std::vector<BoundTrial> run_bound_trials(int trials, std::uint64_t seed, bool deterministic_y) {
    if (trials < 1) throw ConfigError("need at least one trial");
    Rng base(seed);
    std::vector<BoundTrial> out(trials);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < trials; ++i) {
        Rng rng = base.fork(static_cast<std::uint64_t>(i));
        const auto chain = DiscreteChain::random(rng, 8, deterministic_y);
        // (x, y) sampled from the joint, so P(y|x) > 0
        const int x = sample_index(rng, chain.px);
        const int h_latent = sample_index(rng, chain.ph_given_x[x]);
        const int y = sample_index(rng, chain.py_given_h[h_latent]);

        BoundTrial trial;
        trial.deterministic_y = deterministic_y;
        trial.q_is_posterior = (i % 3 == 2);
        std::vector<double> q;
        if (trial.q_is_posterior) {
            q = posterior(chain, x, y);
        } else {
            const int hbar = sample_index(rng, chain.noise_channel[h_latent]);
            q = denoiser_posterior(chain, hbar);
        }
        trial.report = gap(chain, q, x, y);
        out[i] = trial;
    }
    return out;
}

BoundSummary summarize_trials(const std::vector<BoundTrial>& trials) {
    BoundSummary s;
    s.trials = static_cast<int>(trials.size());
    for (const auto& t : trials) {
        const auto& r = t.report;
        if (!std::isinf(r.elbo))
            s.max_bound_violation = std::max(s.max_bound_violation, r.elbo - r.true_ll);
        const bool delta_inf = std::isinf(r.delta);
        const bool kl_inf = std::isinf(r.kl_posterior);
        if (delta_inf || kl_inf) {
            if (delta_inf && kl_inf)
                ++s.infinite_pairs;
            else
                ++s.infinite_mismatch;
        } else {
            s.max_gap_identity_error =
                std::max(s.max_gap_identity_error, std::abs(r.delta - r.kl_posterior));
        }
        if (t.q_is_posterior)
            s.max_posterior_delta = std::max(s.max_posterior_delta, std::abs(r.delta));
        if (!delta_inf && !std::isinf(r.kl_approx))
            s.max_approx_error = std::max(s.max_approx_error, std::abs(r.delta - r.kl_approx));
        else if (delta_inf != std::isinf(r.kl_approx) && t.deterministic_y)
            ++s.infinite_mismatch;
    }
    return s;
}

bool BoundSummary::pass(bool deterministic_y) const {
    if (max_bound_violation > 1e-12) return false;
    if (max_gap_identity_error > 1e-12) return false;
    if (max_posterior_delta > 1e-12) return false;
    if (infinite_mismatch > 0) return false;
    if (deterministic_y && max_approx_error > 1e-9) return false;
    return true;
}

void write_trials_csv(const std::vector<BoundTrial>& trials, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "true_loglik,elbo,delta,kl_posterior,kl_approx,q_is_posterior,deterministic_y\n";
    for (const auto& t : trials) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", t.report.true_ll,
                      t.report.elbo, t.report.delta, t.report.kl_posterior, t.report.kl_approx,
                      t.q_is_posterior ? 1 : 0, t.deterministic_y ? 1 : 0);
        out << buf;
    }
}

}  // namespace zsnmt
