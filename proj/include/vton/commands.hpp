#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vton/config.hpp"
#include "vton/metrics.hpp"
#include "vton/pipeline.hpp"

namespace vton {

namespace fs = std::filesystem;

struct TrainOptions {
    std::optional<fs::path> resume;         // checkpoint to continue from
    std::optional<int64_t> steps;           // overrides the configured step count
    std::optional<fs::path> warp_checkpoint; // try-on training: warp source (oracle when absent)
    std::ostream* progress = nullptr;
};

struct TrainResult {
    int64_t steps = 0;
    std::vector<double> losses; // total loss per step taken in this run
    double initial_metric = 0.0; // warped-garment L1 / paired masked L1 before the run
    double final_metric = 0.0;
    fs::path checkpoint;
};

/// Warping module training on the train split; writes warp.ckpt and warp_train.jsonl.
TrainResult cmd_train_warp(const PipelineConfig& cfg, const fs::path& out, const TrainOptions& opt = {});

/// Try-on module training; writes tryon.ckpt (weights, EMA shadow, optimizer state) and
/// tryon_train.jsonl. The metric is the masked L1 over the non-preserved region.
TrainResult cmd_train_tryon(const PipelineConfig& cfg, const fs::path& out, const TrainOptions& opt = {});

/// Steps derived from the config: explicit steps, else epochs x batches per epoch.
int64_t configured_steps(int64_t steps, int64_t epochs, int64_t batch_size, int64_t dataset_size);

/// Saves freshly initialized networks as checkpoints (useful for smoke runs).
void save_models(const PipelineConfig& cfg, Models& models, const fs::path& warp_ckpt, const fs::path& tryon_ckpt);

struct InferCommandOptions {
    fs::path warp_checkpoint;
    fs::path tryon_checkpoint;
    Split split = Split::test;
    Pairing pairing = Pairing::paired;
    bool exact_masks = false;
    std::optional<int64_t> limit;
};

/// Writes images/<name>.png, reports/<name>.json and contact_sheet.png under out.
std::vector<InferResult> cmd_infer(const PipelineConfig& cfg, const fs::path& out, const InferCommandOptions& opt);

/// Metrics of generated images against references. Paired metrics need gt; unpaired reports
/// only carry distributional metrics.
EvalReport evaluate_images(const std::string& name, const torch::Tensor& outputs,
                           const std::optional<torch::Tensor>& gts, const torch::Tensor& reference_set,
                           PerceptualNet& extractor, const std::string& pairing);

struct EvalCommandOptions {
    fs::path warp_checkpoint;
    fs::path tryon_checkpoint;
    bool self_check = false; // evaluate ground truth against itself
};

/// Paired and unpaired evaluation of the test split; writes eval.json, eval.md, eval.csv and
/// appends to eval.jsonl.
std::vector<EvalReport> cmd_eval(const PipelineConfig& cfg, const fs::path& out, const EvalCommandOptions& opt);

struct Table {
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    nlohmann::json to_json() const;
    std::string markdown() const;
    std::string csv() const;
};

enum class Ablation { attention, noise, threshold, postproc, ddim, conditions };
Ablation parse_ablation(const std::string& s);
std::string to_string(Ablation a);

struct AblateOptions {
    std::optional<fs::path> warp_checkpoint;
    std::optional<fs::path> tryon_checkpoint;
    std::optional<int64_t> train_steps; // training budget for sweeps that retrain
    std::optional<int64_t> images;      // evaluation set size
    std::vector<double> thresholds{0.75, 0.80, 0.85, 0.90, 0.95, 1.0};
    std::vector<double> noise_levels{2.0, 5.0, 7.0};
    std::ostream* progress = nullptr;
};

/// Runs one sweep and writes ablate_<which>.{json,md,csv}.
Table cmd_ablate(const PipelineConfig& cfg, const fs::path& out, Ablation which, const AblateOptions& opt = {});

/// Predicted parsing surrogate: reference parts displaced and eroded/dilated by seeded random
/// amounts (stands in for an imperfect parser when no warp checkpoint is supplied).
torch::Tensor perturbed_prediction(const torch::Tensor& parse7, uint64_t seed, double strength = 1.0);

/// Overlap reports of a fixed set under each threshold; the last threshold of 1.0 uses
/// equality mode.
Table threshold_sweep(const std::vector<torch::Tensor>& pred7, const std::vector<torch::Tensor>& ref9,
                      const std::vector<double>& thresholds);
std::vector<double> threshold_sweep_rates(const std::vector<torch::Tensor>& pred7,
                                          const std::vector<torch::Tensor>& ref9,
                                          const std::vector<double>& thresholds);

struct BenchOptions {
    std::optional<fs::path> warp_checkpoint;
    std::optional<fs::path> tryon_checkpoint;
    std::optional<std::vector<int64_t>> steps; // overrides ddim.bench_steps
    std::optional<int64_t> images;             // number of test images (default: batch size)
    std::optional<int64_t> repeats;
    std::ostream* progress = nullptr;
};

struct BenchResult {
    TimingStats single_step;
    std::map<int64_t, TimingStats> ddim;
    int64_t single_step_forwards_per_image = 0;
    std::string weights; // "checkpoint" or "seeded"
    Table table;
};

/// Single-step pipeline vs the multi-step baseline at the bench resolution.
BenchResult cmd_bench(const PipelineConfig& cfg, const fs::path& out, const BenchOptions& opt = {});

struct PluginOptions {
    fs::path image, person, pred_parsing, ref_parsing;
    double threshold = 0.8;
    bool equality_mode = false;
};

/// Conditional post-processing of an external try-on image; writes <out>/plugin.png and
/// <out>/plugin.json.
ConditionalResult cmd_plugin(const fs::path& out, const PluginOptions& opt);

/// Writes the synthetic train/test splits in the directory layout.
void cmd_gen_data(const PipelineConfig& cfg, const fs::path& root);

/// Appends one JSON object per line.
void append_jsonl(const fs::path& path, const nlohmann::json& j);

} // namespace vton
