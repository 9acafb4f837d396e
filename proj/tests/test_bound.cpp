#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "zsnmt/bound.hpp"
#include "zsnmt/common.hpp"

using namespace zsnmt;

namespace {

// brute-force joint enumeration oracle: P(x,h,y) table, then condition
struct JointOracle {
    std::vector<double> joint;  // [x][h][y]
    int nx, nh, ny;

    explicit JointOracle(const DiscreteChain& c) : nx(c.nx()), nh(c.nh()), ny(c.ny()) {
        joint.resize(std::size_t(nx) * nh * ny);
        for (int x = 0; x < nx; ++x)
            for (int h = 0; h < nh; ++h)
                for (int y = 0; y < ny; ++y)
                    joint[(std::size_t(x) * nh + h) * ny + y] =
                        c.px[x] * c.ph_given_x[x][h] * c.py_given_h[h][y];
    }

    std::vector<double> p_h_given_xy(int x, int y) const {
        std::vector<double> q(nh);
        double z = 0.0;
        for (int h = 0; h < nh; ++h) {
            q[h] = joint[(std::size_t(x) * nh + h) * ny + y];
            z += q[h];
        }
        for (auto& v : q) v /= z;
        return q;
    }
};

DiscreteChain make_chain(std::vector<double> px, std::vector<std::vector<double>> phx,
                         std::vector<std::vector<double>> pyh,
                         std::vector<std::vector<double>> noise) {
    DiscreteChain c;
    c.px = std::move(px);
    c.ph_given_x = std::move(phx);
    c.py_given_h = std::move(pyh);
    c.noise_channel = std::move(noise);
    c.validate();
    return c;
}

}  // namespace

TEST_CASE("single latent value reduces to the emission likelihood") {
    // |H| = 1: log P(y|x) = log P(y|h0), the posterior is a point mass
    auto chain = make_chain({0.4, 0.6}, {{1.0}, {1.0}}, {{0.3, 0.7}}, {{0.5, 0.5}});
    CHECK(true_loglik(chain, 0, 1) == doctest::Approx(std::log(0.7)).epsilon(1e-14));
    const auto post = posterior(chain, 1, 0);
    REQUIRE(post.size() == 1);
    CHECK(post[0] == 1.0);
}

TEST_CASE("a fully deterministic consistent chain has log-likelihood zero") {
    auto chain = make_chain({1.0}, {{0.0, 1.0}}, {{1.0, 0.0}, {0.0, 1.0}},
                            {{0.5, 0.5}, {0.5, 0.5}});
    CHECK(true_loglik(chain, 0, 1) == 0.0);  // log 1
    // inconsistent pair signals the -inf case distinctly
    CHECK(true_loglik(chain, 0, 0) == -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(posterior(chain, 0, 0), DataError);
}

TEST_CASE("true_loglik and posterior match the joint-enumeration oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const auto chain = DiscreteChain::random(rng, 6);
        const JointOracle oracle(chain);
        for (int x = 0; x < chain.nx(); ++x) {
            for (int y = 0; y < chain.ny(); ++y) {
                double direct = 0.0;
                for (int h = 0; h < chain.nh(); ++h)
                    direct += chain.ph_given_x[x][h] * chain.py_given_h[h][y];
                CHECK(std::abs(std::exp(true_loglik(chain, x, y)) - direct) < 1e-12);

                const auto mine = posterior(chain, x, y);
                const auto ref = oracle.p_h_given_xy(x, y);
                for (int h = 0; h < chain.nh(); ++h) CHECK(std::abs(mine[h] - ref[h]) < 1e-12);
            }
        }
    }
}

TEST_CASE("KL properties") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const auto chain = DiscreteChain::random(rng, 8);
        const auto p = chain.ph_given_x[0];
        const auto q = chain.ph_given_x[chain.nx() - 1];
        CHECK(kl_divergence(p, p) <= 1e-12);
        CHECK(kl_divergence(p, q) >= 0.0);
    }
    // support escape is +inf; 0 log 0 contributes nothing
    CHECK(std::isinf(kl_divergence({0.5, 0.5}, {1.0, 0.0})));
    CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("ELBO tightness at the exact posterior, Jensen gap elsewhere") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const auto chain = DiscreteChain::random(rng, 8);
        const int x = (int)rng.below(chain.nx());
        const int y = (int)rng.below(chain.ny());
        const double ll = true_loglik(chain, x, y);

        // tight at the posterior
        const auto post = posterior(chain, x, y);
        CHECK(std::abs(elbo(chain, post, x, y) - ll) < 1e-12);

        // q = P(h|x): the bound becomes sum_h P(h|x) log P(y|h)
        const auto& prior = chain.ph_given_x[x];
        double jensen = 0.0;
        for (int h = 0; h < chain.nh(); ++h)
            jensen += prior[h] * std::log(chain.py_given_h[h][y]);
        CHECK(std::abs(elbo(chain, prior, x, y) - jensen) < 1e-12);
        CHECK(elbo(chain, prior, x, y) <= ll + 1e-12);

        // equality only at the posterior: a visibly different q stays short
        std::vector<double> other = prior;
        bool differs = false;
        for (int h = 0; h < chain.nh(); ++h) differs |= std::abs(other[h] - post[h]) > 1e-3;
        if (differs) CHECK(elbo(chain, other, x, y) < ll - 1e-12);
    }
}

TEST_CASE("uniform q on a symmetric chain closes the gap") {
    // P(h|x) uniform and P(y|h) constant in h make P(h|x,y) uniform
    auto chain = make_chain({1.0}, {{0.25, 0.25, 0.25, 0.25}},
                            {{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}},
                            {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
    const std::vector<double> uniform(4, 0.25);
    const auto report = gap(chain, uniform, 0, 1);
    CHECK(std::abs(report.delta) < 1e-12);
    CHECK(std::abs(report.kl_posterior) < 1e-12);
}

TEST_CASE("the gap equals KL against the exact posterior") {
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        const auto chain = DiscreteChain::random(rng, 8);
        const int x = (int)rng.below(chain.nx());
        const int y = (int)rng.below(chain.ny());
        const int hbar = (int)rng.below(chain.nhbar());
        const auto q = denoiser_posterior(chain, hbar);
        const auto report = gap(chain, q, x, y);
        CHECK(std::abs(report.delta - report.kl_posterior) < 1e-12);
        CHECK(report.delta >= -1e-12);
        // the approximate gap differs in general
        CHECK(std::isfinite(report.kl_approx));
    }
}

TEST_CASE("permutation emissions make the approximate gap exact") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const auto chain = DiscreteChain::random(rng, 6, true);
        const int x = (int)rng.below(chain.nx());
        // choose y consistent with some latent of positive prior mass
        int h_star = (int)rng.below(chain.nh());
        int y = 0;
        for (int j = 0; j < chain.ny(); ++j)
            if (chain.py_given_h[h_star][j] == 1.0) y = j;

        // P(h|y) equals P(h|x,y) pointwise in this regime
        const auto approx = posterior_h_given_y(chain, y);
        const auto exact = posterior(chain, x, y);
        for (int h = 0; h < chain.nh(); ++h) CHECK(std::abs(approx[h] - exact[h]) < 1e-12);

        // finite case: q = the exact posterior
        const auto report = gap(chain, exact, x, y);
        CHECK(std::abs(report.delta) < 1e-12);
        CHECK(std::abs(report.delta - report.kl_approx) < 1e-9);

        // full-support q: both the gap and the approximation diverge together
        const int hbar = (int)rng.below(chain.nhbar());
        const auto q = denoiser_posterior(chain, hbar);
        const auto wide = gap(chain, q, x, y);
        CHECK(std::isinf(wide.delta) == std::isinf(wide.kl_posterior));
        CHECK(std::isinf(wide.delta) == std::isinf(wide.kl_approx));
    }
}

TEST_CASE("trial runner summary passes and stays deterministic") {
    const auto trials = run_bound_trials(400, 42, false);
    const auto summary = summarize_trials(trials);
    CHECK(summary.trials == 400);
    CHECK(summary.pass(false));
    CHECK(summary.infinite_mismatch == 0);

    const auto again = run_bound_trials(400, 42, false);
    for (std::size_t i = 0; i < trials.size(); ++i) {
        CHECK(trials[i].report.true_ll == again[i].report.true_ll);
        CHECK(trials[i].report.elbo == again[i].report.elbo);
    }

    const auto det = summarize_trials(run_bound_trials(400, 43, true));
    CHECK(det.pass(true));
}

TEST_CASE("chain validation rejects malformed inputs") {
    auto chain = make_chain({0.5, 0.5}, {{0.5, 0.5}, {0.2, 0.8}}, {{1.0, 0.0}, {0.0, 1.0}},
                            {{0.5, 0.5}, {0.5, 0.5}});
    chain.px = {0.6, 0.5};
    CHECK_THROWS_AS(chain.validate(), DataError);
    chain.px = {1.2, -0.2};
    CHECK_THROWS_AS(chain.validate(), DataError);
}
