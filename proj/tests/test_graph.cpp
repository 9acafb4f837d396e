#include <doctest.h>

#include <cmath>
#include <vector>

#include "zsnmt/graph.hpp"
#include "zsnmt/model.hpp"
#include "zsnmt/trainer.hpp"

using namespace zsnmt;

TEST_CASE("product rule through matmul") {
    Tensor<double> x({1, 1}, {2.0});
    Tensor<double> y({1, 1}, {3.0});
    Graph<double> g;
    auto z = g.matmul(g.leaf(x), g.leaf(y));
    CHECK(g.val(z).data[0] == doctest::Approx(6.0));
    g.backward(z);
    CHECK(x.grad[0] == doctest::Approx(3.0));
    CHECK(y.grad[0] == doctest::Approx(2.0));
}

TEST_CASE("backward rejects a detached graph") {
    Graph<double> g;
    CHECK_THROWS_AS(g.backward(3), InternalError);
}

TEST_CASE("cross entropy closed forms") {
    const int v = 7;

    SUBCASE("uniform logits cost ln(V)") {
        Tensor<double> logits({2, v});
        Graph<double> g;
        auto loss = g.cross_entropy(g.input(logits), {1, 4}, {1.0, 1.0}, 0.0);
        CHECK(g.val(loss).data[0] == doctest::Approx(std::log(double(v))).epsilon(1e-9));
    }

    SUBCASE("confident correct logits cost about zero") {
        Tensor<double> logits({1, v});
        logits.data[3] = 50.0;
        Graph<double> g;
        auto loss = g.cross_entropy(g.input(logits), {3}, {1.0}, 0.0);
        CHECK(g.val(loss).data[0] < 1e-12);
    }

    SUBCASE("matches an independent log-softmax computation") {
        Rng rng(11);
        const int rows = 5;
        Tensor<double> logits({rows, v});
        for (auto& x : logits.data) x = rng.normal();
        std::vector<int> targets;
        std::vector<double> weights;
        for (int r = 0; r < rows; ++r) {
            targets.push_back(static_cast<int>(rng.below(v)));
            weights.push_back(r == 2 ? 0.0 : 1.0);  // one padded row
        }
        Graph<double> g;
        auto loss = g.cross_entropy(g.input(logits), targets, weights, 0.0);

        double expected = 0.0;
        int counted = 0;
        for (int r = 0; r < rows; ++r) {
            if (weights[r] == 0.0) continue;
            double z = 0.0, mx = -1e30;
            for (int j = 0; j < v; ++j) mx = std::max(mx, logits.data[r * v + j]);
            for (int j = 0; j < v; ++j) z += std::exp(logits.data[r * v + j] - mx);
            expected += -(logits.data[r * v + targets[r]] - mx - std::log(z));
            ++counted;
        }
        expected /= counted;
        CHECK(std::abs(g.val(loss).data[0] - expected) < 1e-6);
    }

    SUBCASE("zero-weighted rows contribute zero gradient") {
        Rng rng(12);
        Tensor<double> logits({2, v});
        for (auto& x : logits.data) x = rng.normal();
        Graph<double> g;
        auto leaf = g.leaf(logits);
        auto loss = g.cross_entropy(leaf, {1, 2}, {1.0, 0.0}, 0.1);
        g.backward(loss);
        for (int j = 0; j < v; ++j) CHECK(logits.grad[v + j] == 0.0);
    }
}

namespace {

Batch tiny_batch(Rng& rng, int vocab, int b, int s, int t) {
    std::vector<std::vector<int>> srcs(b), tgts(b);
    for (int i = 0; i < b; ++i) {
        const int sl = 1 + static_cast<int>(rng.below(s));
        const int tl = 1 + static_cast<int>(rng.below(t));
        for (int j = 0; j < sl; ++j)
            srcs[i].push_back(Vocab::kNumSpecials + static_cast<int>(rng.below(vocab - Vocab::kNumSpecials)));
        for (int j = 0; j < tl; ++j)
            tgts[i].push_back(Vocab::kNumSpecials + static_cast<int>(rng.below(vocab - Vocab::kNumSpecials)));
    }
    return make_batch(srcs, tgts, std::vector<uint8_t>(b, 0));
}

double model_loss(ModelParams<double>& params, const Batch& batch) {
    Graph<double> g;
    Rng rng(0);
    auto fwd = forward(g, params, batch, 0.0, true, rng);
    std::vector<double> weights(batch.loss_weight.begin(), batch.loss_weight.end());
    auto loss = g.cross_entropy(fwd.logits, batch.tgt_out, weights, 0.1);
    return g.val(loss).data[0];
}

}  // namespace

TEST_CASE("full-model gradients match central finite differences") {
    // the standing gradient-check property: random tiny configurations,
    // 64-bit arithmetic, sampled parameters
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
        Rng rng(100 + trial);
        ModelConfig cfg;
        cfg.vocab_size = 16 + static_cast<int>(rng.below(8));
        cfg.d_model = 8 + 4 * static_cast<int>(rng.below(2));
        cfg.n_heads = 2;
        cfg.d_ff = 16;
        cfg.n_enc_layers = 1 + static_cast<int>(rng.below(2));
        cfg.n_dec_layers = 1 + static_cast<int>(rng.below(2));
        cfg.max_pos = 16;

        Rng init(200 + trial);
        auto params = init_params<double>(cfg, init);
        Batch batch = tiny_batch(rng, cfg.vocab_size, 2, 5, 4);

        params.zero_grads();
        Graph<double> g;
        Rng drop(0);
        auto fwd = forward(g, params, batch, 0.0, true, drop);
        std::vector<double> weights(batch.loss_weight.begin(), batch.loss_weight.end());
        auto loss = g.cross_entropy(fwd.logits, batch.tgt_out, weights, 0.1);
        g.backward(loss);

        const double eps = 1e-6;
        int checked = 0;
        for (int sample = 0; sample < 25; ++sample) {
            const std::size_t pi = rng.below(params.named.size());
            auto& tensor = params.named[pi].second;
            const std::size_t ei = rng.below(tensor.data.size());
            const double saved = tensor.data[ei];
            tensor.data[ei] = saved + eps;
            const double up = model_loss(params, batch);
            tensor.data[ei] = saved - eps;
            const double down = model_loss(params, batch);
            tensor.data[ei] = saved;
            const double fd = (up - down) / (2 * eps);
            const double analytic = tensor.grad[ei];
            // floor absorbs finite-difference roundoff on zero-gradient
            // parameters (key-projection biases cancel inside the softmax)
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-5});
            CHECK(std::abs(fd - analytic) / denom < 1e-3);
            ++checked;
        }
        CHECK(checked == 25);
    }
}

TEST_CASE("decoder causality: future target tokens cannot reach earlier logits") {
    Rng rng(7);
    ModelConfig cfg;
    cfg.vocab_size = 20;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 2;
    Rng init(8);
    auto params = init_params<float>(cfg, init);
    Batch batch = make_batch({{7, 9, 11, 13}}, {{6, 8, 10, 12}}, {0});
    REQUIRE(batch.tgt_len >= 3);
    (void)rng;

    Graph<float> g1;
    Rng d1(0);
    auto out1 = forward(g1, params, batch, 0.0f, false, d1);
    const auto logits1 = g1.val(out1.logits).data;

    // perturb the target token at position p; logits before p must not move
    const int p = batch.tgt_len - 1;
    Batch changed = batch;
    changed.tgt_in[p] = changed.tgt_in[p] == 5 ? 6 : 5;
    Graph<float> g2;
    Rng d2(0);
    auto out2 = forward(g2, params, changed, 0.0f, false, d2);
    const auto logits2 = g2.val(out2.logits).data;

    const int v = cfg.vocab_size;
    for (int pos = 0; pos < p; ++pos)
        for (int j = 0; j < v; ++j) CHECK(logits1[pos * v + j] == logits2[pos * v + j]);
    bool moved = false;
    for (int j = 0; j < v; ++j) moved |= logits1[p * v + j] != logits2[p * v + j];
    CHECK(moved);
}

TEST_CASE("extra source padding never changes logits") {
    Rng rng(9);
    ModelConfig cfg;
    cfg.vocab_size = 20;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.n_enc_layers = 2;
    cfg.n_dec_layers = 1;
    Rng init(10);
    auto params = init_params<float>(cfg, init);
    Batch batch = tiny_batch(rng, cfg.vocab_size, 2, 4, 4);

    Batch padded = batch;
    padded.src_len = batch.src_len + 3;
    padded.src.assign(std::size_t(padded.size) * padded.src_len, Vocab::kPad);
    for (int b = 0; b < batch.size; ++b)
        for (int s = 0; s < batch.src_len; ++s)
            padded.src[std::size_t(b) * padded.src_len + s] = batch.src_at(b, s);

    Graph<float> g1, g2;
    Rng d1(0), d2(0);
    const auto a = forward(g1, params, batch, 0.0f, false, d1);
    const auto b2 = forward(g2, params, padded, 0.0f, false, d2);
    const auto& la = g1.val(a.logits).data;
    const auto& lb = g2.val(b2.logits).data;
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("forward is deterministic without dropout and shape-correct") {
    ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    Rng init(3);
    auto params = init_params<float>(cfg, init);

    Batch batch = make_batch({{5, 6}}, {{7}}, {0});
    CHECK(batch.tgt_len == 2);

    Graph<float> g1, g2;
    Rng d1(1), d2(2);
    auto r1 = forward(g1, params, batch, 0.0f, false, d1);
    auto r2 = forward(g2, params, batch, 0.0f, false, d2);
    CHECK(g1.val(r1.logits).shape == std::vector<int>{1, 2, cfg.vocab_size});
    CHECK(g1.val(r1.logits).data == g2.val(r2.logits).data);

    // single-token target gives (1, 1, V)
    Batch one = make_batch({{5}}, {{}}, {0});
    Graph<float> g3;
    Rng d3(0);
    auto r3 = forward(g3, params, one, 0.0f, false, d3);
    CHECK(g3.val(r3.logits).shape == std::vector<int>{1, 1, cfg.vocab_size});

    Batch bad = make_batch({{35}}, {{7}}, {0});
    Graph<float> g4;
    CHECK_THROWS_AS(forward(g4, params, bad, 0.0f, false, d3), DataError);
}

TEST_CASE("dropout masks scale and zero consistently") {
    Tensor<float> x({1, 1000});
    std::fill(x.data.begin(), x.data.end(), 1.0f);
    Graph<float> g;
    Rng rng(5);
    auto out = g.dropout(g.leaf(x), 0.25f, rng, true);
    int zeros = 0;
    for (float v : g.val(out).data) {
        if (v == 0.0f)
            ++zeros;
        else
            CHECK(v == doctest::Approx(1.0f / 0.75f));
    }
    CHECK(zeros > 150);
    CHECK(zeros < 350);

    Graph<float> g2;
    Rng rng2(5);
    auto same = g2.dropout(g2.leaf(x), 0.25f, rng2, false);
    CHECK(g2.val(same).data == x.data);  // identity when not training
}
