#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vton/types.hpp"

namespace vton {

struct DataConfig {
    int64_t height = 64;
    int64_t width = 48;
    std::string garment_type = "upper";
    std::string source = "synthetic"; // "synthetic" or "directory"
    std::string root;
    int64_t train_count = 8;
    int64_t test_count = 8;
    std::map<std::string, int64_t> label_map; // dataset parse label -> internal label
    std::string unpaired_list;
};

struct WarpLossConfig {
    double per = 0.2, ce = 3.0, m = 0.3, adv = 0.1, tv = 0.1, sec = 6.0;
};

struct WarpConfig {
    int64_t levels = 5;
    std::vector<int64_t> channels;
    std::vector<int64_t> attention_resolutions{64, 32, 16, 8};
    double attention_dropout = 0.2;
    bool use_attention = true;
    int64_t heads = 4;
    int64_t max_disp = 4;
    double lr_g = 5e-6, lr_d = 5e-6;
    double beta1 = 0.5, beta2 = 0.999;
    double grad_clip = 0.0; // global gradient-norm clip for the generator; 0 disables
    int64_t batch_size = 8;
    int64_t epochs = 500;
    int64_t steps = 0; // 0: derived from epochs and dataset size
    std::optional<double> ema;
    WarpLossConfig loss;
};

struct TryOnLossConfig {
    double per = 1.0, adv = 0.1;
};

struct TryOnConfig {
    int64_t base_channels = 128;
    std::vector<int64_t> channel_mult{1, 1, 2, 2, 4};
    std::vector<int64_t> attention_resolutions{64, 32, 16};
    int64_t res_blocks = 2;
    double attention_dropout = 0.1;
    int64_t heads = 4;
    std::string clip_version = "ViT-B/32"; // reference encoder; embeddings accepted via file: ids
    std::string encoder = "conv512";
    int64_t embed_dim = 512;
    double alpha_n = 5.0;
    double lr_g = 5e-5, lr_d = 5e-5;
    double beta1 = 0.9, beta2 = 0.999;
    int64_t batch_size = 3;
    int64_t epochs = 500;
    int64_t steps = 0;
    std::optional<double> ema = 0.9999;
    TryOnLossConfig loss;
};

struct PostprocConfig {
    double threshold = 0.8;
    bool equality_mode = false;
    bool unconditional = true;
    bool conditional = true;
};

struct DdimConfig {
    int64_t timesteps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    std::vector<int64_t> bench_steps{1, 10, 100, 1000};
    int64_t train_steps = 200;
    double lr = 1e-4;
};

struct EvalConfig {
    int64_t batch_size = 4;
    int64_t repeats = 10;
    int64_t bench_height = 128;
    int64_t bench_width = 96;
    std::string extractor_weights; // optional checkpoint overriding the seeded extractor
    uint64_t extractor_seed = 1234;
};

struct LogConfig {
    int64_t every = 10;
    int64_t checkpoint_every = 0; // 0: only at the end
};

struct PipelineConfig {
    std::string preset = "desk-64";
    uint64_t seed = 0;
    std::string device = "cpu";
    DataConfig data;
    WarpConfig warp;
    TryOnConfig tryon;
    PostprocConfig postproc;
    DdimConfig ddim;
    EvalConfig eval;
    LogConfig log;

    /// Throws ConfigError on inconsistent values.
    void validate() const;
    ImageSize size() const { return {data.height, data.width}; }
    GarmentType garment_type() const { return parse_garment_type(data.garment_type); }
};

nlohmann::json to_json(const PipelineConfig& cfg);

/// Strict parse: unknown keys throw ConfigError naming the full key path. Missing keys keep
/// the defaults of `base`.
PipelineConfig from_json(const nlohmann::json& j, const PipelineConfig& base = {});

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
PipelineConfig preset(const std::string& name);

/// Applies VTON_<SECTION>__<KEY>=value overrides ("__" separates nesting levels) onto a JSON
/// config. Values parse as JSON when possible, else as strings.
void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment_overrides();

/// Preset (if any) + file (if any) + env overrides, validated.
PipelineConfig load_config(const std::optional<std::string>& preset_name,
                           const std::optional<std::filesystem::path>& file,
                           const std::map<std::string, std::string>& env = {});

} // namespace vton
