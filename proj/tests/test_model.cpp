#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "zsnmt/model.hpp"
#include "zsnmt/trainer.hpp"

using namespace zsnmt;

TEST_CASE("parameter count follows the closed form across configurations") {
    for (int enc : {1, 2, 3}) {
        for (int dec : {1, 2}) {
            ModelConfig cfg;
            cfg.vocab_size = 50;
            cfg.d_model = 16;
            cfg.n_heads = 4;
            cfg.d_ff = 24;
            cfg.n_enc_layers = enc;
            cfg.n_dec_layers = dec;
            Rng rng(1);
            const auto params = init_params<float>(cfg, rng);
            CHECK(params.count() == cfg.param_count());
        }
    }
}

TEST_CASE("config validation") {
    ModelConfig cfg;
    cfg.vocab_size = 50;
    cfg.d_model = 30;
    cfg.n_heads = 4;  // not divisible
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.d_model = 32;
    CHECK_NOTHROW(cfg.validate());
    cfg.vocab_size = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig cfg;
    cfg.vocab_size = 40;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.n_enc_layers = 2;
    cfg.n_dec_layers = 1;
    Rng rng(9);
    const auto params = init_params<float>(cfg, rng);
    const std::string path = "test_ckpt.bin";
    save_checkpoint(params, path);
    const auto loaded = load_checkpoint(path);

    CHECK(loaded.config.vocab_size == cfg.vocab_size);
    CHECK(loaded.config.n_enc_layers == cfg.n_enc_layers);
    REQUIRE(loaded.named.size() == params.named.size());
    for (std::size_t i = 0; i < params.named.size(); ++i) {
        CHECK(loaded.named[i].first == params.named[i].first);
        CHECK(loaded.named[i].second.shape == params.named[i].second.shape);
        CHECK(loaded.named[i].second.data == params.named[i].second.data);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading validates the header") {
    CHECK_THROWS_AS(load_checkpoint("no_such_file.bin"), DataError);

    // truncated payload
    ModelConfig cfg;
    cfg.vocab_size = 20;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    Rng rng(2);
    const auto params = init_params<float>(cfg, rng);
    save_checkpoint(params, "test_ckpt_trunc.bin");
    {
        std::ifstream in("test_ckpt_trunc.bin", std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        content.resize(content.size() / 2);
        std::ofstream out("test_ckpt_trunc.bin", std::ios::binary);
        out << content;
    }
    CHECK_THROWS_AS(load_checkpoint("test_ckpt_trunc.bin"), DataError);
    std::filesystem::remove("test_ckpt_trunc.bin");
}

TEST_CASE("inverse-sqrt schedule hits the documented knees") {
    ScheduleConfig sched;
    sched.peak_lr = 5e-4;
    sched.warmup = 4000;
    CHECK(schedule_lr(sched, 4000) == doctest::Approx(5e-4));
    CHECK(schedule_lr(sched, 16000) == doctest::Approx(2.5e-4));  // sqrt(w / 4w) = 1/2
    CHECK(schedule_lr(sched, 400) == doctest::Approx(5e-5));
    CHECK_THROWS_AS(schedule_lr(sched, 0), ConfigError);
}

TEST_CASE("adam reaches a quadratic minimum and applies bias correction") {
    ModelConfig cfg;
    cfg.vocab_size = 8;
    cfg.d_model = 4;
    cfg.n_heads = 1;
    cfg.d_ff = 4;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    Rng rng(4);
    auto params = init_params<float>(cfg, rng);
    AdamOptimizer opt(params);

    // drive one scalar of one tensor toward 3.0 with gradient (x - 3)
    auto& tensor = params.named[0].second;
    tensor.ensure_grad();
    for (int step = 0; step < 400; ++step) {
        tensor.zero_grad();
        tensor.grad[0] = tensor.data[0] - 3.0f;
        // other parameters keep zero gradients
        for (auto& [name, t] : params.named) t.ensure_grad();
        opt.step(params, 0.05);
    }
    CHECK(std::abs(tensor.data[0] - 3.0f) < 0.05f);
    CHECK(opt.steps_taken() == 400);
}

TEST_CASE("position table alternates sin and cos") {
    ModelConfig cfg;
    cfg.vocab_size = 8;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.max_pos = 16;
    const auto pe = position_table<double>(cfg);
    CHECK(pe.shape == std::vector<int>{16, 8});
    CHECK(pe.data[0] == doctest::Approx(0.0));  // sin(0)
    CHECK(pe.data[1] == doctest::Approx(1.0));  // cos(0)
    CHECK(pe.data[8] == doctest::Approx(std::sin(1.0)));
    for (double v : pe.data) CHECK(std::abs(v) <= 1.0);
}
