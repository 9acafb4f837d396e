#include "zsnmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "zsnmt/bleu.hpp"
#include "zsnmt/decode.hpp"
#include "zsnmt/graph.hpp"

namespace zsnmt {

double schedule_lr(const ScheduleConfig& sched, int step) {
    if (step < 1) throw ConfigError("schedule step starts at 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(sched.warmup);
    return sched.peak_lr * std::min(s / w, std::sqrt(w / s));
}

AdamOptimizer::AdamOptimizer(const ModelParams<float>& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& [name, t] : params.named) {
        m_.emplace_back(t.shape);
        v_.emplace_back(t.shape);
    }
}

void AdamOptimizer::step(ModelParams<float>& params, double lr) {
    ++step_;
    for (std::size_t i = 0; i < params.named.size(); ++i) {
        auto& t = params.named[i].second;
        if (t.grad.empty()) throw InternalError("optimizer step before backward");
        kernels::adam_update(t.data.data(), t.grad.data(), m_[i].data.data(), v_[i].data.data(),
                             t.numel(), static_cast<float>(lr), static_cast<float>(cfg_.beta1),
                             static_cast<float>(cfg_.beta2), static_cast<float>(cfg_.eps), step_);
    }
}

// --------------------------------- batching ---------------------------------

Batch make_batch(const std::vector<std::vector<int>>& srcs,
                 const std::vector<std::vector<int>>& tgts,
                 const std::vector<uint8_t>& is_denoise) {
    if (srcs.empty() || srcs.size() != tgts.size()) throw InternalError("bad batch inputs");
    Batch batch;
    batch.size = static_cast<int>(srcs.size());
    for (const auto& s : srcs) batch.src_len = std::max(batch.src_len, static_cast<int>(s.size()));
    for (const auto& t : tgts)
        batch.tgt_len = std::max(batch.tgt_len, static_cast<int>(t.size()) + 1);  // +1 for <s>/</s>
    batch.src.assign(std::size_t(batch.size) * batch.src_len, Vocab::kPad);
    batch.tgt_in.assign(std::size_t(batch.size) * batch.tgt_len, Vocab::kPad);
    batch.tgt_out.assign(std::size_t(batch.size) * batch.tgt_len, Vocab::kPad);
    batch.loss_weight.assign(std::size_t(batch.size) * batch.tgt_len, 0.0f);
    batch.is_denoise = is_denoise;

    for (int b = 0; b < batch.size; ++b) {
        std::copy(srcs[b].begin(), srcs[b].end(), batch.src.begin() + std::size_t(b) * batch.src_len);
        const auto& tgt = tgts[b];
        const std::size_t base = std::size_t(b) * batch.tgt_len;
        batch.tgt_in[base] = Vocab::kBos;
        for (std::size_t i = 0; i < tgt.size(); ++i) {
            batch.tgt_in[base + 1 + i] = tgt[i];
            batch.tgt_out[base + i] = tgt[i];
            batch.loss_weight[base + i] = 1.0f;
        }
        batch.tgt_out[base + tgt.size()] = Vocab::kEos;
        batch.loss_weight[base + tgt.size()] = 1.0f;
    }
    return batch;
}

BatchStream::BatchStream(const CorpusBundle& bundle, const std::vector<NoisedExample>* denoise,
                         const TrainConfig& cfg)
    : batch_tokens_(cfg.batch_tokens) {
    std::set<std::string> wanted(cfg.directions.begin(), cfg.directions.end());
    std::set<std::string> present;
    for (const auto& ex : bundle.train) {
        const auto key = CorpusBundle::dir_key(ex.src_lang, ex.tgt_lang);
        present.insert(key);
        if (!wanted.count(key)) continue;
        translation_.push_back({ex.src, ex.tgt, false});
    }
    for (const auto& dir : cfg.directions)
        if (!present.count(dir)) throw ConfigError("no parallel training data for direction " + dir);
    if (translation_.empty()) throw ConfigError("training requires at least one direction");

    if (cfg.denoising) {
        if (denoise == nullptr || denoise->empty())
            throw ConfigError("denoising enabled but no denoising corpus given");
        const int en_tag = bundle.vocab.tag_id("en");
        for (const auto& ex : *denoise) {
            Item item;
            item.src.push_back(en_tag);
            item.src.insert(item.src.end(), ex.noised.begin(), ex.noised.end());
            item.tgt = ex.clean;
            item.is_denoise = true;
            denoise_.push_back(std::move(item));
        }
        denoise_share_ = cfg.denoise_proportion >= 0.0
                             ? cfg.denoise_proportion
                             : double(denoise_.size()) / double(denoise_.size() + translation_.size());
    }

    t_order_.resize(translation_.size());
    for (std::size_t i = 0; i < t_order_.size(); ++i) t_order_[i] = i;
    d_order_.resize(denoise_.size());
    for (std::size_t i = 0; i < d_order_.size(); ++i) d_order_[i] = i;
    t_cursor_ = t_order_.size();  // forces a shuffle on first use
    d_cursor_ = d_order_.size();
}

const BatchStream::Item& BatchStream::draw(std::vector<std::size_t>& order, std::size_t& cursor,
                                           const std::vector<Item>& pool, Rng& rng) {
    if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
    }
    return pool[order[cursor++]];
}

Batch BatchStream::next(Rng& rng) {
    const bool denoise_task = !denoise_.empty() && rng.real01() < denoise_share_;
    auto& order = denoise_task ? d_order_ : t_order_;
    auto& cursor = denoise_task ? d_cursor_ : t_cursor_;
    const auto& pool = denoise_task ? denoise_ : translation_;

    std::vector<std::vector<int>> srcs, tgts;
    std::vector<uint8_t> flags;
    int tokens = 0;
    while (tokens < batch_tokens_) {
        const Item& item = draw(order, cursor, pool, rng);
        const int cost = static_cast<int>(item.src.size() + item.tgt.size()) + 2;
        if (!srcs.empty() && tokens + cost > batch_tokens_) {
            --cursor;  // put it back for the next batch
            break;
        }
        srcs.push_back(item.src);
        tgts.push_back(item.tgt);
        flags.push_back(item.is_denoise);
        tokens += cost;
    }
    return make_batch(srcs, tgts, flags);
}

// --------------------------------- validate ---------------------------------

namespace {

DirectionScore score_direction(const ModelParams<float>& params, const Vocab& vocab,
                               const std::vector<ParallelExample>& examples, int subset,
                               int beam) {
    const int n =
        subset > 0 ? std::min<int>(subset, static_cast<int>(examples.size())) : static_cast<int>(examples.size());
    if (n == 0) throw ConfigError("empty dev direction");
    std::vector<std::vector<int>> srcs(n), refs(n);
    std::vector<int> max_len(n);
    for (int i = 0; i < n; ++i) {
        srcs[i] = examples[i].src;
        refs[i] = examples[i].tgt;
        max_len[i] = default_max_len(static_cast<int>(examples[i].src.size()) - 1);
    }
    const auto hyps = beam_decode_batch(params, srcs, beam, max_len);
    std::vector<std::vector<int>> hyp_tokens(n);
    for (int i = 0; i < n; ++i) hyp_tokens[i] = hyps[i].tokens;

    DirectionScore score;
    score.direction = CorpusBundle::dir_key(examples[0].src_lang, examples[0].tgt_lang);
    score.bleu = corpus_bleu(hyp_tokens, refs).score;
    score.lang_accuracy = language_accuracy(hyp_tokens, examples[0].tgt_lang, vocab);
    return score;
}

}  // namespace

ValidationReport validate(const ModelParams<float>& params, const Vocab& vocab,
                          const std::map<std::string, std::vector<ParallelExample>>& dev_sets,
                          const std::vector<std::string>& sup_dirs,
                          const std::vector<std::string>& zero_dirs, int subset, int beam) {
    ValidationReport report;
    auto eval_dirs = [&](const std::vector<std::string>& dirs, std::vector<DirectionScore>& out) {
        double bleu = 0.0;
        for (const auto& dir : dirs) {
            const auto it = dev_sets.find(dir);
            if (it == dev_sets.end()) throw ConfigError("no dev data for direction " + dir);
            out.push_back(score_direction(params, vocab, it->second, subset, beam));
            bleu += out.back().bleu;
        }
        return dirs.empty() ? 0.0 : bleu / double(dirs.size());
    };
    report.sup_avg_bleu = eval_dirs(sup_dirs, report.supervised);
    report.zero_avg_bleu = eval_dirs(zero_dirs, report.zero_shot);
    double acc = 0.0;
    for (const auto& d : report.zero_shot) acc += d.lang_accuracy;
    report.zero_avg_lang_acc = report.zero_shot.empty() ? 0.0 : acc / double(report.zero_shot.size());
    report.offtarget_rate = report.zero_shot.empty() ? 0.0 : 1.0 - report.zero_avg_lang_acc;
    return report;
}

// ----------------------------------- train -----------------------------------

std::string metrics_csv_header() {
    return "step,l_m,l_d,zero_bleu,sup_bleu,offtarget_rate";
}

std::string format_metrics_row(const MetricsRow& row, bool denoising) {
    char buf[256];
    char ld[32] = "";
    if (denoising && row.has_l_d) std::snprintf(ld, sizeof(ld), "%.6f", row.l_d);
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%s,%.4f,%.4f,%.6f", row.step, row.l_m, ld,
                  row.validation.zero_avg_bleu, row.validation.sup_avg_bleu,
                  row.validation.offtarget_rate);
    return buf;
}

TrainResult train(const CorpusBundle& bundle, const std::vector<NoisedExample>* denoise,
                  TrainConfig cfg) {
    // resolve validation direction lists
    if (cfg.eval_sup_dirs.empty()) cfg.eval_sup_dirs = cfg.directions;
    if (cfg.eval_zero_dirs.empty()) {
        std::set<std::string> sup(cfg.directions.begin(), cfg.directions.end());
        for (const auto& a : bundle.languages)
            for (const auto& b : bundle.languages) {
                if (a.lang_id == b.lang_id || a.lang_id == "en" || b.lang_id == "en") continue;
                const auto key = CorpusBundle::dir_key(a.lang_id, b.lang_id);
                if (!sup.count(key)) cfg.eval_zero_dirs.push_back(key);
            }
    }

    // build the denoising corpus from the selected directions when the caller
    // did not hand one in
    std::vector<NoisedExample> own_denoise;
    if (cfg.denoising && denoise == nullptr) {
        CorpusBundle view;
        view.vocab = bundle.vocab;
        std::set<std::string> wanted(cfg.directions.begin(), cfg.directions.end());
        for (const auto& ex : bundle.train)
            if (wanted.count(CorpusBundle::dir_key(ex.src_lang, ex.tgt_lang))) view.train.push_back(ex);
        NoiseConfig noise_cfg = cfg.noise;
        noise_cfg.seed = Rng(cfg.seed).fork(0xD0).seed();
        own_denoise = build_denoising_corpus(view, noise_cfg);
        denoise = &own_denoise;
    }

    cfg.arch.vocab_size = bundle.vocab.size();
    cfg.arch.validate();

    Rng init_rng(Rng(cfg.seed).fork(0x1).seed());
    Rng batch_rng(Rng(cfg.seed).fork(0x2).seed());
    Rng dropout_rng(Rng(cfg.seed).fork(0x3).seed());

    TrainResult result;
    auto params = init_params<float>(cfg.arch, init_rng);
    AdamOptimizer optimizer(params, cfg.adam);
    BatchStream stream(bundle, cfg.denoising ? denoise : nullptr, cfg);

    const bool write_files = !cfg.out_dir.empty();
    if (write_files) std::filesystem::create_directories(cfg.out_dir);

    std::string csv = metrics_csv_header() + "\n";
    double lm_sum = 0.0, ld_sum = 0.0;
    std::int64_t lm_count = 0, ld_count = 0;

    auto run_validation = [&](int step) {
        MetricsRow row;
        row.step = step;
        row.l_m = lm_count ? lm_sum / double(lm_count) : 0.0;
        row.has_l_d = ld_count > 0;
        row.l_d = ld_count ? ld_sum / double(ld_count) : 0.0;
        row.validation = validate(params, bundle.vocab, bundle.dev, cfg.eval_sup_dirs,
                                  cfg.eval_zero_dirs, cfg.dev_subset, cfg.beam);
        row.validation.step = step;
        lm_sum = ld_sum = 0.0;
        lm_count = ld_count = 0;

        if (row.validation.sup_avg_bleu > result.best_score) {
            result.best_score = row.validation.sup_avg_bleu;
            result.best_step = step;
            result.best_params = params;
            if (write_files) {
                result.best_ckpt_path = cfg.out_dir + "/best.ckpt";
                save_checkpoint(params, result.best_ckpt_path);
            }
        }
        csv += format_metrics_row(row, cfg.denoising) + "\n";
        result.history.push_back(std::move(row));
    };

    Graph<float> graph;  // node buffers are pooled across steps
    for (int step = 1; step <= cfg.max_updates; ++step) {
        Batch batch = stream.next(batch_rng);
        const bool denoise_batch = !batch.is_denoise.empty() && batch.is_denoise[0];

        params.zero_grads();
        graph.reset();
        auto fwd = forward(graph, params, batch, static_cast<float>(cfg.dropout), true, dropout_rng);
        auto loss = graph.cross_entropy(fwd.logits, batch.tgt_out, batch.loss_weight,
                                        static_cast<float>(cfg.label_smoothing));
        const double loss_value = graph.val(loss).data[0];
        graph.backward(loss);
        optimizer.step(params, schedule_lr(cfg.schedule, step));

        if (denoise_batch) {
            ld_sum += loss_value;
            ++ld_count;
        } else {
            lm_sum += loss_value;
            ++lm_count;
        }

        if (step % cfg.validate_every == 0 || step == cfg.max_updates) run_validation(step);
    }
    if (result.history.empty()) run_validation(cfg.max_updates);

    result.final_params = std::move(params);
    if (result.best_score < 0) {
        result.best_params = result.final_params;
        result.best_step = cfg.max_updates;
    }
    result.metrics_csv = csv;
    if (write_files) {
        result.metrics_path = cfg.out_dir + "/metrics.csv";
        std::ofstream(result.metrics_path) << csv;
        result.final_ckpt_path = cfg.out_dir + "/final.ckpt";
        save_checkpoint(result.final_params, result.final_ckpt_path);
        if (result.best_ckpt_path.empty()) {
            result.best_ckpt_path = cfg.out_dir + "/best.ckpt";
            save_checkpoint(result.best_params, result.best_ckpt_path);
        }
    }
    return result;
}

}  // namespace zsnmt
