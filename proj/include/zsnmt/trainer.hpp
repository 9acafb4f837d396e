#ifndef ZSNMT_TRAINER_HPP
#define ZSNMT_TRAINER_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsnmt/model.hpp"
#include "zsnmt/noiser.hpp"
#include "zsnmt/synthlang.hpp"

namespace zsnmt {

struct ScheduleConfig {
    double peak_lr = 5e-4;
    int warmup = 4000;
};

// peak_lr * min(step / warmup, sqrt(warmup / step))
double schedule_lr(const ScheduleConfig& sched, int step);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(const ModelParams<float>& params, AdamConfig cfg = {});
    // applies one update from the gradients stored in `params`
    void step(ModelParams<float>& params, double lr);
    int steps_taken() const { return step_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor<float>> m_, v_;
    int step_ = 0;
};

struct TrainConfig {
    std::vector<std::string> directions;  // e.g. {"aa-en", "en-aa", ...}
    bool denoising = false;
    // share of denoising batches; negative = proportional to corpus sizes
    double denoise_proportion = -1.0;
    int max_updates = 20000;
    int batch_tokens = 2048;
    int validate_every = 500;
    std::uint64_t seed = 1;
    bool deterministic = true;  // runs are order-fixed either way; flag is recorded
    double dropout = 0.1;
    double label_smoothing = 0.1;
    ScheduleConfig schedule;
    AdamConfig adam;
    NoiseConfig noise;
    ModelConfig arch;  // vocab_size is filled in from the bundle

    // validation scope; empty sup list defaults to `directions`, empty zero
    // list defaults to every non-English ordered pair absent from it
    std::vector<std::string> eval_sup_dirs;
    std::vector<std::string> eval_zero_dirs;
    int dev_subset = 200;  // sentences per direction per validation; <= 0 = all
    int beam = 5;

    std::string out_dir;  // empty = keep everything in memory only
};

struct DirectionScore {
    std::string direction;
    double bleu = 0.0;
    double lang_accuracy = 0.0;
};

struct ValidationReport {
    int step = 0;
    std::vector<DirectionScore> supervised;
    std::vector<DirectionScore> zero_shot;
    double sup_avg_bleu = 0.0;
    double zero_avg_bleu = 0.0;
    double zero_avg_lang_acc = 0.0;
    double offtarget_rate = 0.0;
};

struct MetricsRow {
    int step = 0;
    double l_m = 0.0;
    bool has_l_d = false;
    double l_d = 0.0;
    ValidationReport validation;
};

struct TrainResult {
    ModelParams<float> final_params;
    ModelParams<float> best_params;
    double best_score = -1.0;
    int best_step = 0;
    std::vector<MetricsRow> history;
    std::string metrics_csv;  // full file contents, also written to out_dir
    std::string best_ckpt_path, final_ckpt_path, metrics_path;
};

// Deterministic batch assembly: per-task example streams shuffled per epoch,
// one task drawn per update (translation vs denoising), examples packed until
// the token budget fills. Batches are single-task.
class BatchStream {
public:
    BatchStream(const CorpusBundle& bundle, const std::vector<NoisedExample>* denoise,
                const TrainConfig& cfg);

    Batch next(Rng& rng);
    std::int64_t translation_pool_size() const { return static_cast<std::int64_t>(translation_.size()); }
    std::int64_t denoise_pool_size() const { return static_cast<std::int64_t>(denoise_.size()); }
    double denoise_share() const { return denoise_share_; }

private:
    struct Item {
        std::vector<int> src;
        std::vector<int> tgt;
        bool is_denoise = false;
    };

    const Item& draw(std::vector<std::size_t>& order, std::size_t& cursor,
                     const std::vector<Item>& pool, Rng& rng);

    std::vector<Item> translation_, denoise_;
    std::vector<std::size_t> t_order_, d_order_;
    std::size_t t_cursor_ = 0, d_cursor_ = 0;
    double denoise_share_ = 0.0;
    int batch_tokens_;
};

Batch make_batch(const std::vector<std::vector<int>>& srcs,
                 const std::vector<std::vector<int>>& tgts, const std::vector<uint8_t>& is_denoise);

ValidationReport validate(const ModelParams<float>& params, const Vocab& vocab,
                          const std::map<std::string, std::vector<ParallelExample>>& dev_sets,
                          const std::vector<std::string>& sup_dirs,
                          const std::vector<std::string>& zero_dirs, int subset, int beam);

TrainResult train(const CorpusBundle& bundle, const std::vector<NoisedExample>* denoise,
                  TrainConfig cfg);

std::string metrics_csv_header();
std::string format_metrics_row(const MetricsRow& row, bool denoising);

}  // namespace zsnmt

#endif
