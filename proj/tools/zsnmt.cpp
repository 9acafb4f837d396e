// Command-line front end: corpus generation, training, evaluation, bound
// verification and scenario reproduction.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "zsnmt/bleu.hpp"
#include "zsnmt/bound.hpp"
#include "zsnmt/decode.hpp"
#include "zsnmt/experiments.hpp"
#include "zsnmt/noiser.hpp"
#include "zsnmt/trainer.hpp"

using nlohmann::json;
using namespace zsnmt;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int cmd_gen_data(const std::string& out, std::uint64_t seed, const std::string& languages,
                 int train_per_dir, int dev, int test, bool emit_denoised) {
    CorpusConfig cfg;
    cfg.languages = split_list(languages);
    cfg.train_per_direction = train_per_dir;
    cfg.dev_per_direction = dev;
    cfg.test_per_direction = test;
    cfg.seed = seed;
    const auto bundle = build_corpus(cfg);
    save_corpus(bundle, out);
    if (emit_denoised) {
        NoiseConfig noise;
        noise.seed = Rng(seed).fork(0xD0).seed();
        const auto corpus = build_denoising_corpus(bundle, noise);
        std::ofstream f(out + "/denoise.tsv");
        for (const auto& ex : corpus) {
            f << "en-noised\ten\t";
            for (std::size_t i = 0; i < ex.noised.size(); ++i)
                f << (i ? " " : "") << bundle.vocab.token(ex.noised[i]);
            f << '\t';
            for (std::size_t i = 0; i < ex.clean.size(); ++i)
                f << (i ? " " : "") << bundle.vocab.token(ex.clean[i]);
            f << '\n';
        }
    }
    std::printf("wrote corpus to %s (train %zu, languages %zu, vocab %d)\n", out.c_str(),
                bundle.train.size(), bundle.languages.size(), bundle.vocab.size());
    return 0;
}

int cmd_train(const std::string& data, const std::string& directions, bool denoising,
              const std::string& out, std::uint64_t seed, int max_updates, int batch_tokens,
              int validate_every, int dev_subset, bool deterministic) {
    const auto bundle = load_corpus(data);
    TrainConfig cfg;
    cfg.directions = split_list(directions);
    cfg.denoising = denoising;
    cfg.seed = seed;
    cfg.max_updates = max_updates;
    cfg.batch_tokens = batch_tokens;
    cfg.validate_every = validate_every;
    cfg.dev_subset = dev_subset;
    cfg.deterministic = deterministic;
    cfg.out_dir = out;
    const auto result = train(bundle, nullptr, cfg);
    std::printf("finished %d updates; best sup dev BLEU %.2f at step %d\n", cfg.max_updates,
                result.best_score, result.best_step);
    std::printf("checkpoints: %s, %s\nmetrics: %s\n", result.best_ckpt_path.c_str(),
                result.final_ckpt_path.c_str(), result.metrics_path.c_str());
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data, const std::string& direction,
                 bool pivot, int beam, int subset, const std::string& out_json) {
    const auto bundle = load_corpus(data);
    const auto params = load_checkpoint(ckpt);
    if (params.config.vocab_size != bundle.vocab.size())
        throw ConfigError("checkpoint vocabulary does not match the corpus");

    std::vector<std::string> dirs;
    if (direction == "all")
        for (const auto& [key, examples] : bundle.test) dirs.push_back(key);
    else
        dirs = split_list(direction);

    json report;
    report["checkpoint"] = ckpt;
    report["data"] = data;
    report["beam"] = beam;
    json per_dir = json::array();
    double zero_sum = 0.0, sup_sum = 0.0;
    int zero_n = 0, sup_n = 0;
    for (const auto& dir : dirs) {
        const auto it = bundle.test.find(dir);
        if (it == bundle.test.end()) throw ConfigError("no test data for direction " + dir);
        const auto& examples = it->second;
        const int n = subset > 0 ? std::min<int>(subset, static_cast<int>(examples.size()))
                                 : static_cast<int>(examples.size());
        const std::string src_lang = examples[0].src_lang, tgt_lang = examples[0].tgt_lang;
        const bool zero_shot = src_lang != "en" && tgt_lang != "en";

        std::vector<std::vector<int>> hyp_tokens(n), refs(n);
        if (pivot && zero_shot) {
            std::vector<std::vector<int>> srcs(n);
            for (int i = 0; i < n; ++i) {
                srcs[i].assign(examples[i].src.begin() + 1, examples[i].src.end());
                refs[i] = examples[i].tgt;
            }
            const auto hyps =
                pivot_translate_batch(params, bundle.vocab, srcs, src_lang, tgt_lang, beam);
            for (int i = 0; i < n; ++i) hyp_tokens[i] = hyps[i].tokens;
        } else {
            std::vector<std::vector<int>> srcs(n);
            std::vector<int> max_len(n);
            for (int i = 0; i < n; ++i) {
                srcs[i] = examples[i].src;
                refs[i] = examples[i].tgt;
                max_len[i] = default_max_len(static_cast<int>(examples[i].src.size()) - 1);
            }
            const auto hyps = beam_decode_batch(params, srcs, beam, max_len);
            for (int i = 0; i < n; ++i) hyp_tokens[i] = hyps[i].tokens;
        }
        const auto bleu = corpus_bleu(hyp_tokens, refs);
        const double acc = language_accuracy(hyp_tokens, tgt_lang, bundle.vocab);
        per_dir.push_back({{"direction", dir},
                           {"zero_shot", zero_shot},
                           {"pivot", pivot && zero_shot},
                           {"bleu", bleu.score},
                           {"lang_accuracy", acc},
                           {"sentences", n}});
        (zero_shot ? zero_sum : sup_sum) += bleu.score;
        ++(zero_shot ? zero_n : sup_n);
    }
    report["directions"] = per_dir;
    report["zero_avg_bleu"] = zero_n ? zero_sum / zero_n : 0.0;
    report["parallel_avg_bleu"] = sup_n ? sup_sum / sup_n : 0.0;
    const std::string text = report.dump(2);
    std::printf("%s\n", text.c_str());
    if (!out_json.empty()) std::ofstream(out_json) << text << '\n';
    return 0;
}

int cmd_bound_verify(int trials, std::uint64_t seed, bool deterministic_y,
                     const std::string& out_csv) {
    const auto results = run_bound_trials(trials, seed, deterministic_y);
    if (!out_csv.empty()) write_trials_csv(results, out_csv);
    const auto summary = summarize_trials(results);
    std::printf("trials:                  %d\n", summary.trials);
    std::printf("max bound violation:     %.3e\n", summary.max_bound_violation);
    std::printf("max |delta - KL(q||P(h|x,y))|: %.3e\n", summary.max_gap_identity_error);
    std::printf("max |delta| at q=posterior:    %.3e\n", summary.max_posterior_delta);
    if (deterministic_y)
        std::printf("max |delta - KL(q||P(h|y))|:   %.3e\n", summary.max_approx_error);
    std::printf("diverged-together trials: %d, mismatched: %d\n", summary.infinite_pairs,
                summary.infinite_mismatch);
    const bool ok = summary.pass(deterministic_y);
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

int cmd_reproduce(const std::string& suite, std::uint64_t seed, const std::string& out) {
    auto print_checks = [](const json& report) {
        bool all = true;
        for (const auto& [name, ok] : report.at("checks").items()) {
            std::printf("  [%s] %s\n", ok.get<bool>() ? "PASS" : "FAIL", name.c_str());
            all &= ok.get<bool>();
        }
        return all;
    };
    bool all_ok = true;
    if (suite == "table1" || suite == "all") {
        std::printf("== table1 analog ==\n");
        const auto report = run_table1_analog(seed, out);
        std::printf("direct aa=>bb BLEU %.2f | pivot BLEU %.2f | direct acc %.3f | pivot acc %.3f\n",
                    report["direct"]["bleu"].get<double>(), report["pivot"]["bleu"].get<double>(),
                    report["direct"]["lang_accuracy"].get<double>(),
                    report["pivot"]["lang_accuracy"].get<double>());
        all_ok &= print_checks(report);
    }
    if (suite == "ablation" || suite == "all") {
        std::printf("== ablation analog ==\n");
        const auto report = run_ablation_analog(seed, out);
        for (const auto& row : report["rows"])
            std::printf("  %-12s zero BLEU %6.2f  sup BLEU %6.2f  zero acc %.3f\n",
                        row["variant"].get<std::string>().c_str(),
                        row["zero_avg_bleu"].get<double>(), row["sup_avg_bleu"].get<double>(),
                        row["zero_lang_accuracy"].get<double>());
        all_ok &= print_checks(report);
    }
    if (suite == "curve" || suite == "all") {
        std::printf("== learning curve ==\n");
        const auto report = run_learning_curve(seed, out);
        std::printf("final zero BLEU: mnmt %.2f, mnmt_dn %.2f\n",
                    report["final"]["mnmt"].get<double>(),
                    report["final"]["mnmt_dn"].get<double>());
        all_ok &= print_checks(report);
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multilingual translation lab"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus directory");
    std::string gen_out = "data";
    std::string gen_langs = "en,aa,bb,cc";
    std::uint64_t gen_seed = 1;
    int gen_train = 20000, gen_dev = 1000, gen_test = 1000;
    bool gen_denoised = false;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "corpus seed");
    gen->add_option("--languages", gen_langs, "comma-separated language ids (en required)");
    gen->add_option("--train-per-direction", gen_train, "training sentences per direction");
    gen->add_option("--dev", gen_dev, "dev sentences per direction");
    gen->add_option("--test", gen_test, "test sentences per direction");
    gen->add_flag("--emit-denoised", gen_denoised, "also write denoise.tsv");

    // train
    auto* tr = app.add_subcommand("train", "train a model on an existing corpus");
    std::string tr_data, tr_dirs, tr_out = "run";
    std::uint64_t tr_seed = 1;
    int tr_updates = 20000, tr_batch = 2048, tr_validate = 500, tr_subset = 200;
    bool tr_denoise = false, tr_det = true;
    tr->add_option("--data", tr_data, "corpus directory")->required();
    tr->add_option("--directions", tr_dirs, "training directions, e.g. aa-en,en-aa")->required();
    tr->add_flag("--denoising", tr_denoise, "add the English denoising task");
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--max-updates", tr_updates, "optimizer steps");
    tr->add_option("--batch-tokens", tr_batch, "token budget per batch");
    tr->add_option("--validate-every", tr_validate, "steps between validations");
    tr->add_option("--dev-subset", tr_subset, "dev sentences per direction per validation");
    tr->add_flag("--deterministic,!--no-deterministic", tr_det, "fixed reduction order");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "decode a test direction and score it");
    std::string ev_ckpt, ev_data, ev_dir = "all", ev_json;
    bool ev_pivot = false;
    int ev_beam = 5, ev_subset = 0;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "corpus directory")->required();
    ev->add_option("--direction", ev_dir, "direction like aa-bb, a comma list, or 'all'");
    ev->add_flag("--pivot", ev_pivot, "pivot zero-shot directions through English");
    ev->add_option("--beam", ev_beam, "beam size");
    ev->add_option("--subset", ev_subset, "cap sentences per direction (0 = all)");
    ev->add_option("--out", ev_json, "also write the JSON report here");

    // bound-verify
    auto* bv = app.add_subcommand("bound-verify", "exact latent-bound verification trials");
    int bv_trials = 1000;
    std::uint64_t bv_seed = 1;
    bool bv_det = false;
    std::string bv_csv;
    bv->add_option("--trials", bv_trials, "number of random chains");
    bv->add_option("--seed", bv_seed, "trial seed");
    bv->add_flag("--deterministic-y", bv_det, "permutation y-emission regime");
    bv->add_option("--out", bv_csv, "per-trial CSV path");

    // reproduce
    auto* rp = app.add_subcommand("reproduce", "run the experiment scenarios");
    std::string rp_suite = "all", rp_out = "reports";
    std::uint64_t rp_seed = 1;
    rp->add_option("--suite", rp_suite, "table1|ablation|curve|all")
        ->check(CLI::IsMember({"table1", "ablation", "curve", "all"}));
    rp->add_option("--seed", rp_seed, "scenario seed");
    rp->add_option("--out", rp_out, "report directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_out, gen_seed, gen_langs, gen_train, gen_dev, gen_test,
                                gen_denoised);
        if (tr->parsed())
            return cmd_train(tr_data, tr_dirs, tr_denoise, tr_out, tr_seed, tr_updates, tr_batch,
                             tr_validate, tr_subset, tr_det);
        if (ev->parsed())
            return cmd_evaluate(ev_ckpt, ev_data, ev_dir, ev_pivot, ev_beam, ev_subset, ev_json);
        if (bv->parsed()) return cmd_bound_verify(bv_trials, bv_seed, bv_det, bv_csv);
        if (rp->parsed()) return cmd_reproduce(rp_suite, rp_seed, rp_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
