#pragma once

#include <atomic>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "vton/feature_nets.hpp"
#include "vton/warploss.hpp"

namespace vton {

struct UNetConfig {
    int64_t in_channels = 9; // noise image 3 + local condition 3 + dense pose 3
    int64_t out_channels = 3;
    int64_t base_channels = 128;
    std::vector<int64_t> channel_mult{1, 1, 2, 2, 4};
    int64_t res_blocks = 2;
    std::vector<int64_t> attention_heights{64, 32, 16};
    double attention_dropout = 0.1;
    int64_t heads = 4;
    int64_t embed_dim = 512;
    bool time_conditioned = false; // adds a sinusoidal timestep embedding (multi-step baseline)
    bool tanh_head = true;
};

int64_t norm_groups(int64_t channels);

class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(int64_t in, int64_t out, int64_t emb_channels);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);
    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    torch::nn::Linear emb_proj{nullptr};
};
TORCH_MODULE(ResBlock);

class SelfAttentionImpl : public torch::nn::Module {
public:
    SelfAttentionImpl(int64_t channels, int64_t heads, double dropout);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::GroupNorm norm{nullptr};
    torch::nn::Conv2d qkv{nullptr}, proj{nullptr};

private:
    int64_t heads_;
    double dropout_;
};
TORCH_MODULE(SelfAttention);

/// U-Net whose timestep-embedding slot carries the global garment embedding
/// (optionally summed with a timestep embedding for the multi-step baseline).
class TryOnUNetImpl : public torch::nn::Module {
public:
    TryOnUNetImpl(UNetConfig cfg, int64_t input_height);

    /// x: N x in_channels x H x W, emb: N x embed_dim, t: N timesteps (time-conditioned only).
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb, const torch::Tensor& t = {});

    const UNetConfig& config() const { return cfg_; }
    int64_t forward_count() const { return forward_count_.load(); }
    void reset_forward_count() { forward_count_ = 0; }
    /// Number of levels (counted from the top) carrying self-attention.
    int64_t attention_level_count() const;

private:
    struct Stage {
        int64_t res_index;
        int64_t attn_index; // -1 when absent
    };
    UNetConfig cfg_;
    torch::nn::Conv2d conv_in{nullptr}, conv_out{nullptr};
    torch::nn::GroupNorm norm_out{nullptr};
    torch::nn::Sequential global_mlp{nullptr}, time_mlp{nullptr};
    torch::nn::ModuleList res{nullptr}, attn{nullptr}, downs{nullptr}, ups{nullptr};
    ResBlock mid1{nullptr}, mid2{nullptr};
    SelfAttention mid_attn{nullptr};
    std::vector<std::vector<Stage>> down_stages_, up_stages_;
    std::vector<bool> attention_levels_;
    std::atomic<int64_t> forward_count_{0};
};
TORCH_MODULE(TryOnUNet);

/// Sinusoidal embedding of integer timesteps (N) into N x dim.
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

/// Deterministic generator for (seed, stream) pairs.
torch::Generator make_generator(uint64_t seed, uint64_t stream = 0);

/// z = z0 + alpha_n * eps, eps ~ N(0, I) from the given generator. alpha_n = 0 returns z0 exactly.
torch::Tensor add_noise(const torch::Tensor& z0, double alpha_n, torch::Generator& gen);

/// Argmax labels (N x H x W) of 7-class logits.
torch::Tensor predicted_labels(const torch::Tensor& logits);

/// Copies person pixels where (predicted bg AND reference bg) OR preserved; raw output elsewhere.
/// pred_labels7: 7-class labels, ref_parsing: 9-label map, preserved: bool; all [N x] H x W.
torch::Tensor merge_static(const torch::Tensor& raw, const torch::Tensor& person, const torch::Tensor& preserved,
                           const torch::Tensor& pred_labels7, const torch::Tensor& ref_parsing);

/// Static-region mask used by merge_static.
torch::Tensor static_region(const torch::Tensor& preserved, const torch::Tensor& pred_labels7,
                            const torch::Tensor& ref_parsing);

/// Exponential moving average of module parameters.
class EmaShadow {
public:
    EmaShadow() = default;
    EmaShadow(const torch::nn::Module& m, double decay);
    void update(const torch::nn::Module& m);
    void copy_to(torch::nn::Module& m) const;
    double decay() const { return decay_; }
    int64_t updates() const { return updates_; }
    const std::vector<torch::Tensor>& shadow() const { return shadow_; }
    std::vector<torch::Tensor>& shadow() { return shadow_; }
    void set_updates(int64_t n) { updates_ = n; }

private:
    double decay_ = 0.9999;
    int64_t updates_ = 0;
    std::vector<torch::Tensor> shadow_;
};

struct TryOnLossWeights {
    double per = 1.0;
    double adv = 0.1;
    void validate() const;
};

/// Training pipeline inputs; all tensors batched.
struct TryOnBatch {
    torch::Tensor gt;          // N x 3 x H x W
    torch::Tensor person;      // N x 3 x H x W
    torch::Tensor condition;   // local condition image, N x 3 x H x W
    torch::Tensor densepose;   // N x 3 x H x W
    torch::Tensor embedding;   // N x E
    torch::Tensor preserved;   // N x H x W bool
    torch::Tensor pred_labels; // N x H x W, 7-class
    torch::Tensor ref_parsing; // N x H x W, 9-label
};

struct TryOnTrainOptions {
    double alpha_n = 5.0;
    double lr_g = 5e-5, lr_d = 5e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double ema = 0.9999;
    TryOnLossWeights weights;
    uint64_t seed = 0;
};

struct TryOnStepResult {
    LossBreakdown generator;
    double discriminator = 0.0;
};

/// Loss of the try-on network: L1 + per * perceptual + adv * adversarial.
LossBreakdown total_tryon_loss(const torch::Tensor& l1, const torch::Tensor& per, const torch::Tensor& adv,
                               const TryOnLossWeights& w);

class TryOnTrainer {
public:
    TryOnTrainer(TryOnUNet unet, TryOnTrainOptions opt, FeatureExtractor perceptual_net);

    /// One generator + discriminator update; throws NumericalError on a non-finite loss.
    TryOnStepResult step(const TryOnBatch& batch);

    /// Generator output after merging for a batch, with noise drawn from (seed, stream).
    torch::Tensor predict(const TryOnBatch& batch, uint64_t stream, bool use_ema);

    TryOnUNet unet;
    PatchDiscriminator disc{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g, opt_d;
    EmaShadow ema;
    int64_t step_count = 0;

private:
    TryOnTrainOptions opt_;
    FeatureExtractor per_;
};

} // namespace vton
