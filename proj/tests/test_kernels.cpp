#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "zsnmt/kernels.hpp"
#include "zsnmt/rng.hpp"

using namespace zsnmt;
namespace k = zsnmt::kernels;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

// run `fn` writing into `out` on both backends and compare
void backends_agree(std::vector<float>& out, const std::function<void()>& fn) {
    k::set_backend(k::Backend::Serial);
    std::fill(out.begin(), out.end(), 0.0f);
    fn();
    const auto serial = out;
    k::set_backend(k::Backend::Parallel);
    std::fill(out.begin(), out.end(), 0.0f);
    fn();
    float max_diff = 0.0f;
    for (std::size_t i = 0; i < out.size(); ++i)
        max_diff = std::max(max_diff, std::abs(out[i] - serial[i]));
    CHECK(max_diff == 0.0f);
    k::set_backend(k::Backend::Parallel);
}

}  // namespace

TEST_CASE("matmul_nn matches a hand-rolled triple loop") {
    Rng rng(1);
    const int m = 5, kk = 7, n = 3;
    const auto a = random_vec(rng, m * kk);
    const auto b = random_vec(rng, kk * n);
    std::vector<float> c(m * n);
    k::matmul_nn(a.data(), b.data(), c.data(), m, kk, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double ref = 0.0;
            for (int x = 0; x < kk; ++x) ref += double(a[i * kk + x]) * double(b[x * n + j]);
            CHECK(std::abs(c[i * n + j] - ref) < 1e-4);
        }
}

TEST_CASE("matmul transpose variants agree with matmul_nn") {
    Rng rng(2);
    const int m = 6, kk = 8, n = 5;
    const auto a = random_vec(rng, m * kk);
    const auto b = random_vec(rng, kk * n);
    std::vector<float> c_ref(m * n);
    k::matmul_nn(a.data(), b.data(), c_ref.data(), m, kk, n);

    // b transposed: bt[n,k]
    std::vector<float> bt(n * kk);
    for (int x = 0; x < kk; ++x)
        for (int j = 0; j < n; ++j) bt[j * kk + x] = b[x * n + j];
    std::vector<float> c(m * n);
    k::matmul_nt(a.data(), bt.data(), c.data(), m, kk, n);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(c[i] - c_ref[i]) < 1e-5);

    // a transposed: at[k,m], c2 = at^T * b
    std::vector<float> at(kk * m);
    for (int i = 0; i < m; ++i)
        for (int x = 0; x < kk; ++x) at[x * m + i] = a[i * kk + x];
    std::vector<float> c2(m * n);
    k::matmul_tn(at.data(), b.data(), c2.data(), kk, m, n);
    for (std::size_t i = 0; i < c2.size(); ++i) CHECK(std::abs(c2[i] - c_ref[i]) < 1e-5);
}

TEST_CASE("serial and parallel backends produce identical results") {
    Rng rng(3);
    const int m = 33, kk = 17, n = 29, groups = 7;

    SUBCASE("matmul family") {
        const auto a = random_vec(rng, m * kk);
        const auto b = random_vec(rng, kk * n);
        const auto bt = random_vec(rng, n * kk);
        std::vector<float> c(m * n);
        backends_agree(c, [&] { k::matmul_nn(a.data(), b.data(), c.data(), m, kk, n); });
        backends_agree(c, [&] { k::matmul_nt(a.data(), bt.data(), c.data(), m, kk, n); });
        std::vector<float> ct(kk * n);
        backends_agree(ct, [&] { k::matmul_tn(a.data(), c.data(), ct.data(), m, kk, n); });
    }

    SUBCASE("batched matmul family") {
        const auto a = random_vec(rng, groups * m * kk);
        const auto b = random_vec(rng, groups * kk * n);
        const auto bt = random_vec(rng, groups * n * kk);
        std::vector<float> c(groups * m * n);
        backends_agree(c, [&] { k::bmm_nn(a.data(), b.data(), c.data(), groups, m, kk, n); });
        backends_agree(c, [&] { k::bmm_nt(a.data(), bt.data(), c.data(), groups, m, kk, n); });
        std::vector<float> ct(groups * kk * n);
        backends_agree(ct, [&] { k::bmm_tn(a.data(), c.data(), ct.data(), groups, m, kk, n); });
    }

    SUBCASE("softmax, layernorm, elementwise") {
        const int bsz = 3, h = 2, tq = 5, tk = 6;
        const auto scores = random_vec(rng, bsz * h * tq * tk);
        auto mask = random_vec(rng, bsz * tq * tk);
        for (auto& x : mask) x = x > 0 ? 1.0f : 0.0f;
        std::vector<float> probs(scores.size());
        backends_agree(probs,
                       [&] { k::attn_softmax(scores.data(), mask.data(), probs.data(), bsz, h, tq, tk); });

        const auto dprobs = random_vec(rng, probs.size());
        std::vector<float> dscores(probs.size());
        backends_agree(dscores, [&] {
            k::softmax_backward(probs.data(), dprobs.data(), dscores.data(),
                                std::int64_t(bsz) * h * tq, tk);
        });

        const int rows = 21, cols = 16;
        const auto x = random_vec(rng, rows * cols);
        const auto g = random_vec(rng, cols);
        const auto bias = random_vec(rng, cols);
        std::vector<float> y(x.size()), rstd(rows), mean(rows);
        backends_agree(y, [&] {
            k::layernorm(x.data(), g.data(), bias.data(), y.data(), rstd.data(), mean.data(), rows,
                         cols, 1e-5f);
        });
        const auto dy = random_vec(rng, x.size());
        std::vector<float> dx(x.size());
        backends_agree(dx, [&] {
            k::layernorm_backward_x(x.data(), g.data(), dy.data(), rstd.data(), mean.data(),
                                    dx.data(), rows, cols);
        });
        std::vector<float> dgb(2 * cols);
        backends_agree(dgb, [&] {
            k::layernorm_backward_params(x.data(), dy.data(), rstd.data(), mean.data(), dgb.data(),
                                         dgb.data() + cols, rows, cols);
        });

        std::vector<float> sum(x.size());
        backends_agree(sum, [&] { k::add(x.data(), dy.data(), sum.data(), std::int64_t(x.size())); });
        std::vector<float> biased(x.size());
        backends_agree(biased, [&] { k::add_bias(x.data(), bias.data(), biased.data(), rows, cols); });
        std::vector<float> dbias(cols);
        backends_agree(dbias, [&] { k::bias_backward(dy.data(), dbias.data(), rows, cols); });
    }
}

TEST_CASE("attention softmax rows sum to one and handle full masking") {
    Rng rng(4);
    const int bsz = 2, h = 2, tq = 4, tk = 5;
    const auto scores = random_vec(rng, bsz * h * tq * tk);
    std::vector<float> mask(bsz * tq * tk, 1.0f);
    // row (b=1, q=2) fully masked; row (b=0, q=1) partially masked
    for (int j = 0; j < tk; ++j) mask[(1 * tq + 2) * tk + j] = 0.0f;
    mask[(0 * tq + 1) * tk + 0] = 0.0f;
    mask[(0 * tq + 1) * tk + 3] = 0.0f;

    std::vector<float> probs(scores.size());
    k::attn_softmax(scores.data(), mask.data(), probs.data(), bsz, h, tq, tk);
    for (int b = 0; b < bsz; ++b)
        for (int hh = 0; hh < h; ++hh)
            for (int q = 0; q < tq; ++q) {
                double sum = 0.0;
                bool fully_masked = (b == 1 && q == 2);
                for (int j = 0; j < tk; ++j) {
                    const float p = probs[((std::size_t(b) * h + hh) * tq + q) * tk + j];
                    CHECK(std::isfinite(p));
                    CHECK(p >= 0.0f);
                    if (mask[(std::size_t(b) * tq + q) * tk + j] == 0.0f) CHECK(p == 0.0f);
                    sum += p;
                }
                if (fully_masked)
                    CHECK(sum == 0.0);
                else
                    CHECK(std::abs(sum - 1.0) < 1e-6);
            }
}

TEST_CASE("layernorm backward matches finite differences in double") {
    Rng rng(5);
    const int rows = 3, cols = 8;
    std::vector<double> x(rows * cols), g(cols), b(cols);
    for (auto& v : x) v = rng.normal();
    for (auto& v : g) v = 1.0 + 0.1 * rng.normal();
    for (auto& v : b) v = 0.1 * rng.normal();
    const auto dy_f = random_vec(rng, rows * cols);
    std::vector<double> dy(dy_f.begin(), dy_f.end());

    auto loss = [&](const std::vector<double>& xin) {
        std::vector<double> y(rows * cols), rstd(rows), mean(rows);
        k::layernorm(xin.data(), g.data(), b.data(), y.data(), rstd.data(), mean.data(), rows,
                     cols, 1e-5);
        double total = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) total += y[i] * dy[i];
        return total;
    };

    std::vector<double> y(rows * cols), rstd(rows), mean(rows);
    k::layernorm(x.data(), g.data(), b.data(), y.data(), rstd.data(), mean.data(), rows, cols,
                 1e-5);
    std::vector<double> dx(rows * cols, 0.0);
    k::layernorm_backward_x(x.data(), g.data(), dy.data(), rstd.data(), mean.data(), dx.data(),
                            rows, cols);

    const double eps = 1e-6;
    for (int i = 0; i < rows * cols; i += 5) {
        auto xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        const double fd = (loss(xp) - loss(xm)) / (2 * eps);
        CHECK(std::abs(fd - dx[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("adam update closed forms") {
    // beta1 = beta2 = 0 reduces to signed steepest descent with |g| scaling
    float p = 1.0f, g = -0.4f, m = 0.0f, v = 0.0f;
    k::adam_update<float>(&p, &g, &m, &v, 1, 0.1f, 0.0f, 0.0f, 1e-8f, 1);
    CHECK(std::abs(p - (1.0f - 0.1f * g / (std::abs(g) + 1e-8f))) < 1e-6f);
}
