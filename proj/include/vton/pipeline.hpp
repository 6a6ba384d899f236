#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "vton/checkpoint.hpp"
#include "vton/config.hpp"
#include "vton/dataset.hpp"
#include "vton/ddim.hpp"
#include "vton/feature_nets.hpp"
#include "vton/postproc.hpp"
#include "vton/preprocess.hpp"
#include "vton/synthdata.hpp"
#include "vton/tryonnet.hpp"
#include "vton/warploss.hpp"
#include "vton/warpnet.hpp"

namespace vton {

/// Per-sample tensors derived once from a Sample (unbatched).
struct Prepared {
    std::string name;
    GarmentType type = GarmentType::upper;
    torch::Tensor person, garment, densepose; // 3 x H x W
    torch::Tensor parsing;                    // H x W int64, 9-label
    torch::Tensor parse7;                     // H x W int64, warp targets
    torch::Tensor heatmaps;                   // 10 x H x W
    torch::Tensor preserved;                  // H x W bool
    torch::Tensor person_input;               // 16 x H x W
    std::optional<torch::Tensor> gt;          // 3 x H x W
    torch::Tensor cloth_mask;                 // H x W bool
    torch::Tensor mark_mask;                  // H x W bool
};

Prepared prepare(const Sample& s);
std::vector<Prepared> prepare_all(const std::vector<Sample>& samples);

/// Stacks one field of a prepared batch along a new leading dimension.
torch::Tensor stack(const std::vector<Prepared>& batch, torch::Tensor Prepared::*field);
torch::Tensor stack_gt(const std::vector<Prepared>& batch);

WarpNetConfig warp_net_config(const PipelineConfig& cfg);
UNetConfig unet_config(const PipelineConfig& cfg);

inline constexpr uint64_t test_seed_offset = 1000000;

/// Synthetic splits use seeds [0, train_count) and [offset, offset + test_count); unpaired
/// synthetic samples pair each person with the next sample's garment.
std::vector<Sample> load_split(const PipelineConfig& cfg, Split split, Pairing pairing);

struct WarpBatch {
    torch::Tensor person_input; // N x 16 x H x W
    WarpTargets targets;
};
WarpBatch make_warp_batch(const std::vector<Prepared>& batch);

class WarpTrainer {
public:
    WarpTrainer(WarpNet net, const PipelineConfig& cfg, FeatureExtractor perceptual_net);
    LossBreakdown step(const WarpBatch& batch, double* d_loss = nullptr);
    /// Finest-level warped-garment L1 inside the gt cloth mask (eval mode, no grad).
    double warped_l1(const WarpBatch& batch);

    WarpNet net;
    PatchDiscriminator disc{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g, opt_d;
    int64_t step_count = 0;

private:
    WarpLossWeights weights_;
    FeatureExtractor per_;
    uint64_t seed_;
    double grad_clip_ = 0.0;
};

/// Finest-level warp outputs for a batch.
struct WarpResult {
    torch::Tensor flow;        // N x 2 x H x W
    torch::Tensor logits;      // N x 7 x H x W
    torch::Tensor pred_labels; // N x H x W
    torch::Tensor warped;      // N x 3 x H x W
    torch::Tensor cloth_mask;  // N x H x W bool
};
WarpResult run_warp(WarpNet& net, const std::vector<Prepared>& batch);
/// Ground-truth stand-in for the warp module: gt garment region, gt cloth mask, gt parsing.
WarpResult oracle_warp(const std::vector<Prepared>& batch);

struct Models {
    WarpNet warp{nullptr};
    TryOnUNet unet{nullptr};
    std::shared_ptr<GarmentEncoder> encoder;
};

/// Fresh networks for the configured size (or an explicit one), initialized from cfg.seed.
Models build_models(const PipelineConfig& cfg, std::optional<ImageSize> size = std::nullopt);

/// Loads networks from checkpoints; the try-on weights come from the EMA shadow when present
/// and use_ema is set. Missing files throw DataError.
Models load_models(const PipelineConfig& cfg, const std::filesystem::path& warp_ckpt,
                   const std::filesystem::path& tryon_ckpt, bool use_ema = true);

torch::Tensor encode_global(GarmentEncoder& encoder, const std::vector<Prepared>& batch);

/// Try-on training batch from prepared samples and warp outputs (local condition I_c).
TryOnBatch make_tryon_batch(const std::vector<Prepared>& batch, const WarpResult& warp, GarmentEncoder& encoder);

struct InferOptions {
    PostprocOptions post;
    bool unconditional_post = true;
    bool conditional_post = true;
    double alpha_n = 5.0;
    uint64_t seed = 0;
    bool pure_noise = false;     // noise image without the condition signal
    bool zero_embedding = false; // zero global condition
    bool zero_densepose = false;
    bool exact_masks = false;    // predicted parsing replaced by the reference parsing
};
InferOptions infer_options(const PipelineConfig& cfg);

struct InferResult {
    std::string name;
    torch::Tensor output;         // final image
    torch::Tensor raw;            // generator output
    torch::Tensor merged;         // after static merge
    torch::Tensor condition;      // I_c
    torch::Tensor condition_post; // I'_c
    torch::Tensor warped_garment;
    torch::Tensor pred_labels;
    PartOverlapReport report;
};

/// Full single-step inference: warp, I_c, unconditional post-processing, noise, one generator
/// pass, static merge, conditional post-processing.
std::vector<InferResult> infer(Models& models, const std::vector<Prepared>& batch, const InferOptions& opt);

/// Same pipeline with the generator replaced by multi-step DDIM sampling of a baseline net.
std::vector<InferResult> infer_ddim(Models& models, TryOnUNet& ddim_net, const DiffusionSchedule& schedule,
                                    int64_t steps, const std::vector<Prepared>& batch, const InferOptions& opt);

/// Per-image noise stream derived from the item name.
uint64_t name_stream(const std::string& name);

/// Sets the global torch RNG from (seed, step) so dropout is reproducible across resumes.
void seed_step(uint64_t seed, int64_t step);

PerceptualNet make_perceptual_net(const PipelineConfig& cfg);

} // namespace vton
