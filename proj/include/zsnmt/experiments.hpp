#ifndef ZSNMT_EXPERIMENTS_HPP
#define ZSNMT_EXPERIMENTS_HPP

#include <cstdint>
#include <string>

#include <json.hpp>

namespace zsnmt {

// Published scenario scale. Tests may shrink it; the CLI always runs the
// defaults, so a scenario is a pure function of (name, seed).
struct ScenarioScale {
    int train_per_direction = 20000;
    int dev_per_direction = 1000;
    int test_per_direction = 1000;
    int max_updates = 1400;
    int validate_every = 200;
    int dev_subset = 200;
    int batch_tokens = 2048;
    int final_eval_subset = 500;  // sentences per direction for the report numbers
};

// One model on {aa=>en, en=>bb} only; reports direct zero-shot aa=>bb against
// two-step pivoting through English.
nlohmann::json run_table1_analog(std::uint64_t seed, const std::string& out_dir,
                                 const ScenarioScale& scale = {});

// Four variants on one bundle: two-direction baseline, +denoising, full
// English-centric system, full system +denoising.
nlohmann::json run_ablation_analog(std::uint64_t seed, const std::string& out_dir,
                                   const ScenarioScale& scale = {});

// Zero-shot dev BLEU per validation step for the full system with and
// without denoising.
nlohmann::json run_learning_curve(std::uint64_t seed, const std::string& out_dir,
                                  const ScenarioScale& scale = {});

}  // namespace zsnmt

#endif
