#include "zsnmt/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "zsnmt/bleu.hpp"
#include "zsnmt/decode.hpp"
#include "zsnmt/trainer.hpp"

namespace zsnmt {

using nlohmann::json;

namespace {

// Pinned desk-scale schedule: short warmup and a hotter peak than the
// full-scale defaults so runs converge within minutes.
constexpr double kPeakLr = 1e-3;
constexpr int kWarmup = 400;

CorpusConfig corpus_config(std::uint64_t seed, const std::vector<std::string>& languages,
                           const ScenarioScale& scale) {
    CorpusConfig cfg;
    cfg.languages = languages;
    cfg.train_per_direction = scale.train_per_direction;
    cfg.dev_per_direction = scale.dev_per_direction;
    cfg.test_per_direction = scale.test_per_direction;
    cfg.seed = Rng(seed).fork(0xC0).seed();
    return cfg;
}

TrainConfig base_train_config(std::uint64_t seed, const ScenarioScale& scale) {
    TrainConfig cfg;
    cfg.max_updates = scale.max_updates;
    cfg.validate_every = scale.validate_every;
    cfg.dev_subset = scale.dev_subset;
    cfg.batch_tokens = scale.batch_tokens;
    cfg.schedule.peak_lr = kPeakLr;
    cfg.schedule.warmup = kWarmup;
    cfg.seed = seed;
    return cfg;
}

json config_echo(const TrainConfig& cfg) {
    return {{"directions", cfg.directions},
            {"denoising", cfg.denoising},
            {"max_updates", cfg.max_updates},
            {"batch_tokens", cfg.batch_tokens},
            {"validate_every", cfg.validate_every},
            {"peak_lr", cfg.schedule.peak_lr},
            {"warmup", cfg.schedule.warmup},
            {"dropout", cfg.dropout},
            {"label_smoothing", cfg.label_smoothing},
            {"beam", cfg.beam},
            {"dev_subset", cfg.dev_subset},
            {"seed", cfg.seed},
            {"deterministic", cfg.deterministic},
            {"arch",
             {{"d_model", cfg.arch.d_model},
              {"n_heads", cfg.arch.n_heads},
              {"d_ff", cfg.arch.d_ff},
              {"n_enc_layers", cfg.arch.n_enc_layers},
              {"n_dec_layers", cfg.arch.n_dec_layers}}}};
}

struct TestDirectionResult {
    double bleu = 0.0;
    double lang_acc = 0.0;
};

TestDirectionResult eval_direct(const ModelParams<float>& params, const CorpusBundle& bundle,
                                const std::string& dir, int subset, int beam) {
    const auto& examples = bundle.test.at(dir);
    const int n = subset > 0 ? std::min<int>(subset, static_cast<int>(examples.size()))
                             : static_cast<int>(examples.size());
    std::vector<std::vector<int>> srcs(n), refs(n);
    std::vector<int> max_len(n);
    for (int i = 0; i < n; ++i) {
        srcs[i] = examples[i].src;
        refs[i] = examples[i].tgt;
        max_len[i] = default_max_len(static_cast<int>(examples[i].src.size()) - 1);
    }
    const auto hyps = beam_decode_batch(params, srcs, beam, max_len);
    std::vector<std::vector<int>> tokens(n);
    for (int i = 0; i < n; ++i) tokens[i] = hyps[i].tokens;
    return {corpus_bleu(tokens, refs).score,
            language_accuracy(tokens, examples[0].tgt_lang, bundle.vocab)};
}

TestDirectionResult eval_pivot(const ModelParams<float>& params, const CorpusBundle& bundle,
                               const std::string& src_lang, const std::string& tgt_lang,
                               int subset, int beam) {
    const auto& examples = bundle.test.at(CorpusBundle::dir_key(src_lang, tgt_lang));
    const int n = subset > 0 ? std::min<int>(subset, static_cast<int>(examples.size()))
                             : static_cast<int>(examples.size());
    std::vector<std::vector<int>> srcs(n), refs(n);
    for (int i = 0; i < n; ++i) {
        srcs[i].assign(examples[i].src.begin() + 1, examples[i].src.end());  // drop the tag
        refs[i] = examples[i].tgt;
    }
    const auto hyps = pivot_translate_batch(params, bundle.vocab, srcs, src_lang, tgt_lang, beam);
    std::vector<std::vector<int>> tokens(n);
    for (int i = 0; i < n; ++i) tokens[i] = hyps[i].tokens;
    return {corpus_bleu(tokens, refs).score,
            language_accuracy(tokens, examples[0].tgt_lang, bundle.vocab)};
}

json curve_rows(const TrainResult& run, const std::string& variant) {
    json rows = json::array();
    for (const auto& row : run.history)
        rows.push_back({{"variant", variant},
                        {"step", row.step},
                        {"zero_bleu", row.validation.zero_avg_bleu}});
    return rows;
}

std::string curve_csv(const json& rows) {
    std::string csv = "variant,step,zero_bleu\n";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%d,%.4f\n", r["variant"].get<std::string>().c_str(),
                      r["step"].get<int>(), r["zero_bleu"].get<double>());
        csv += buf;
    }
    return csv;
}

void write_report(const json& report, const std::string& out_dir, const std::string& name) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir + "/" + name) << report.dump(2) << '\n';
}

std::vector<std::string> all_english_centric(const std::vector<std::string>& languages) {
    std::vector<std::string> dirs;
    for (const auto& l : languages) {
        if (l == "en") continue;
        dirs.push_back(l + "-en");
        dirs.push_back("en-" + l);
    }
    return dirs;
}

}  // namespace

json run_table1_analog(std::uint64_t seed, const std::string& out_dir,
                       const ScenarioScale& scale) {
    const auto bundle = build_corpus(corpus_config(seed, {"en", "aa", "bb"}, scale));

    TrainConfig cfg = base_train_config(seed, scale);
    cfg.directions = {"aa-en", "en-bb"};
    cfg.denoising = false;
    cfg.eval_zero_dirs = {"aa-bb"};
    if (!out_dir.empty()) cfg.out_dir = out_dir + "/table1";
    auto run = train(bundle, nullptr, cfg);

    const auto direct = eval_direct(run.best_params, bundle, "aa-bb", scale.final_eval_subset,
                                    cfg.beam);
    const auto pivot =
        eval_pivot(run.best_params, bundle, "aa", "bb", scale.final_eval_subset, cfg.beam);

    json report;
    report["scenario"] = "table1-analog";
    report["seed"] = seed;
    report["config"] = config_echo(cfg);
    report["direct"] = {{"bleu", direct.bleu}, {"lang_accuracy", direct.lang_acc}};
    report["pivot"] = {{"bleu", pivot.bleu}, {"lang_accuracy", pivot.lang_acc}};
    report["bleu_difference"] = pivot.bleu - direct.bleu;
    report["checks"] = {{"pivot_beats_direct", pivot.bleu > direct.bleu},
                        {"margin_at_least_10", pivot.bleu - direct.bleu >= 10.0},
                        {"direct_lang_acc_below_pivot", direct.lang_acc < pivot.lang_acc}};
    report["metrics_csv"] = run.metrics_csv;
    write_report(report, out_dir, "table1_report.json");
    return report;
}

json run_ablation_analog(std::uint64_t seed, const std::string& out_dir,
                         const ScenarioScale& scale) {
    const std::vector<std::string> languages = {"en", "aa", "bb", "cc"};
    const auto bundle = build_corpus(corpus_config(seed, languages, scale));

    struct Variant {
        const char* name;
        std::vector<std::string> directions;
        bool denoising;
        std::vector<std::string> zero_dirs;
    };
    const std::vector<Variant> variants = {
        {"two_dir", {"aa-en", "en-bb"}, false, {"aa-bb"}},
        {"two_dir_dn", {"aa-en", "en-bb"}, true, {"aa-bb"}},
        {"mnmt", all_english_centric(languages), false, {}},
        {"mnmt_dn", all_english_centric(languages), true, {}},
    };

    json report;
    report["scenario"] = "ablation-analog";
    report["seed"] = seed;
    json rows = json::array();
    json curves = json::array();
    std::map<std::string, MetricsRow> finals;
    std::map<std::string, double> zero_common;  // aa-bb BLEU per variant
    std::map<std::string, std::string> csvs;

    for (const auto& variant : variants) {
        TrainConfig cfg = base_train_config(seed, scale);
        cfg.directions = variant.directions;
        cfg.denoising = variant.denoising;
        cfg.eval_zero_dirs = variant.zero_dirs;  // empty = every zero-shot pair
        if (!out_dir.empty()) cfg.out_dir = out_dir + "/" + variant.name;
        auto run = train(bundle, nullptr, cfg);

        const auto& final_row = run.history.back();
        finals[variant.name] = final_row;
        csvs[variant.name] = run.metrics_csv;
        for (const auto& d : final_row.validation.zero_shot)
            if (d.direction == "aa-bb") zero_common[variant.name] = d.bleu;

        json row;
        row["variant"] = variant.name;
        row["config"] = config_echo(cfg);
        row["zero_avg_bleu"] = final_row.validation.zero_avg_bleu;
        row["sup_avg_bleu"] = final_row.validation.sup_avg_bleu;
        row["zero_lang_accuracy"] = final_row.validation.zero_avg_lang_acc;
        row["zero_bleu_aa_bb"] = zero_common.count(variant.name) ? zero_common[variant.name] : 0.0;
        json per_dir = json::array();
        for (const auto& d : final_row.validation.zero_shot)
            per_dir.push_back(
                {{"direction", d.direction}, {"bleu", d.bleu}, {"lang_accuracy", d.lang_accuracy}});
        row["zero_directions"] = per_dir;
        rows.push_back(row);

        if (std::string(variant.name) == "mnmt" || std::string(variant.name) == "mnmt_dn") {
            for (const auto& r : curve_rows(run, variant.name)) curves.push_back(r);
        }
    }

    report["rows"] = rows;
    const double a = finals["two_dir"].validation.zero_avg_bleu;
    const double b = finals["two_dir_dn"].validation.zero_avg_bleu;
    const double c = finals["mnmt"].validation.zero_avg_bleu;
    const double d = finals["mnmt_dn"].validation.zero_avg_bleu;
    report["checks"] = {
        {"dn_beats_two_dir", b > a},
        {"dn_beats_mnmt", d > c},
        // the shared zero-shot direction, same basis for both variants
        {"mnmt_dn_at_least_two_dir_dn_on_aa_bb", zero_common["mnmt_dn"] >= zero_common["two_dir_dn"]},
        {"mnmt_dn_lang_acc_above_0p95", finals["mnmt_dn"].validation.zero_avg_lang_acc > 0.95},
        {"supervised_within_1_bleu",
         std::abs(finals["mnmt_dn"].validation.sup_avg_bleu -
                  finals["mnmt"].validation.sup_avg_bleu) <= 1.0},
    };
    report["supervised"] = {{"mnmt", finals["mnmt"].validation.sup_avg_bleu},
                            {"mnmt_dn", finals["mnmt_dn"].validation.sup_avg_bleu}};
    report["metrics_csv"] = csvs;
    report["curve"] = curves;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir + "/curve.csv") << curve_csv(curves);
    }
    write_report(report, out_dir, "ablation_report.json");
    return report;
}

json run_learning_curve(std::uint64_t seed, const std::string& out_dir,
                        const ScenarioScale& scale) {
    const std::vector<std::string> languages = {"en", "aa", "bb", "cc"};
    const auto bundle = build_corpus(corpus_config(seed, languages, scale));

    json curves = json::array();
    json report;
    report["scenario"] = "learning-curve";
    report["seed"] = seed;
    double final_mnmt = 0.0, final_dn = 0.0;
    for (const bool denoising : {false, true}) {
        TrainConfig cfg = base_train_config(seed, scale);
        cfg.directions = all_english_centric(languages);
        cfg.denoising = denoising;
        const char* name = denoising ? "mnmt_dn" : "mnmt";
        if (!out_dir.empty()) cfg.out_dir = out_dir + "/curve_" + name;
        auto run = train(bundle, nullptr, cfg);
        for (const auto& r : curve_rows(run, name)) curves.push_back(r);
        (denoising ? final_dn : final_mnmt) = run.history.back().validation.zero_avg_bleu;
        report["config_" + std::string(name)] = config_echo(cfg);
    }
    report["curve"] = curves;
    report["final"] = {{"mnmt", final_mnmt}, {"mnmt_dn", final_dn}};
    report["checks"] = {{"dn_final_at_least_mnmt", final_dn >= final_mnmt}};
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir + "/curve.csv") << curve_csv(curves);
    }
    write_report(report, out_dir, "curve_report.json");
    return report;
}

}  // namespace zsnmt
