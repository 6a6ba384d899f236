#pragma once

#include <vector>

#include <torch/torch.h>

#include "vton/warp_ops.hpp"

namespace vton {

struct WarpNetConfig {
    int64_t levels = 5;                   // N
    std::vector<int64_t> channels;        // per level, finest first; empty -> default widths
    std::vector<int64_t> attention_heights{64, 32, 16, 8};
    double attention_dropout = 0.2;
    bool use_attention = true;
    int64_t heads = 4;
    int64_t max_disp = 4;
    int64_t person_channels = 16; // 10 keypoint heatmaps + 3 dense pose + 3 preserved person
    int64_t garment_channels = 3;

    /// Channel width of level i (explicit list, else 32 * 2^min(i, 3)).
    int64_t width(int64_t level) const;
};

/// Levels are finest first: level i is (H / 2^i) x (W / 2^i).
struct FeaturePyramid {
    std::vector<torch::Tensor> levels;
};

/// Feature pyramid network: strided encoder + top-down pathway with lateral connections.
class PyramidEncoderImpl : public torch::nn::Module {
public:
    PyramidEncoderImpl(int64_t in_channels, const WarpNetConfig& cfg);
    FeaturePyramid forward(const torch::Tensor& x);

private:
    int64_t levels_;
    torch::nn::ModuleList encoders_, laterals_, top_down_, smooth_;
};
TORCH_MODULE(PyramidEncoder);

/// CF-B: warp garment features, correlate with person features, predict a flow residual.
class CoarseFlowBlockImpl : public torch::nn::Module {
public:
    CoarseFlowBlockImpl(int64_t channels, int64_t max_disp);
    torch::Tensor forward(const torch::Tensor& g, const torch::Tensor& p, const torch::Tensor& flow_in);
    torch::nn::Sequential head{nullptr};
    torch::nn::Conv2d out{nullptr};

private:
    int64_t max_disp_;
};
TORCH_MODULE(CoarseFlowBlock);

/// FF-B: cross attention (gated by level height) or concatenation, then a grouped
/// convolution stack predicting a flow residual.
class FineFlowBlockImpl : public torch::nn::Module {
public:
    FineFlowBlockImpl(int64_t channels, bool attention, const WarpNetConfig& cfg);
    torch::Tensor forward(const torch::Tensor& g, const torch::Tensor& p, const torch::Tensor& flow_in);
    bool uses_attention() const { return !attention.is_empty(); }
    CrossAttention attention{nullptr};
    torch::nn::Sequential head{nullptr};
    torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(FineFlowBlock);

/// GP-B: warp garment features by the refined flow, fuse with the person, emit 7 logits.
class GlobalParsingBlockImpl : public torch::nn::Module {
public:
    explicit GlobalParsingBlockImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& g, const torch::Tensor& p, const torch::Tensor& flow);
    torch::nn::Sequential fuse{nullptr}, classify{nullptr};
};
TORCH_MODULE(GlobalParsingBlock);

struct FusionOutput {
    torch::Tensor coarse_flow, flow, logits;
};

class FusionBlockImpl : public torch::nn::Module {
public:
    FusionBlockImpl(int64_t channels, bool attention, const WarpNetConfig& cfg);
    FusionOutput forward(const torch::Tensor& g, const torch::Tensor& p, const torch::Tensor& flow_in);
    CoarseFlowBlock coarse{nullptr};
    FineFlowBlock fine{nullptr};
    GlobalParsingBlock parsing{nullptr};
    double flow_clamp = 0.0; // 0 = derived from the level size
};
TORCH_MODULE(FusionBlock);

struct WarpOutput {
    std::vector<torch::Tensor> flows;  // finest first, N x 2 x H_i x W_i
    std::vector<torch::Tensor> logits; // finest first, N x 7 x H_i x W_i
};

/// The warping module: person and garment pyramids plus a coarse-to-fine cascade of
/// fusion blocks. The untrained cascade outputs the identity flow.
class WarpNetImpl : public torch::nn::Module {
public:
    /// Fusion blocks are built for a fixed input height so the attention gate resolves per level.
    WarpNetImpl(WarpNetConfig cfg, int64_t input_height);

    FeaturePyramid extract_person(const torch::Tensor& person_input);
    FeaturePyramid extract_garment(const torch::Tensor& garment);
    WarpOutput cascade(const FeaturePyramid& person, const FeaturePyramid& garment);
    WarpOutput forward(const torch::Tensor& person_input, const torch::Tensor& garment);

    const WarpNetConfig& config() const { return cfg_; }
    int64_t input_height() const { return input_height_; }
    bool level_uses_attention(int64_t level) const;
    FusionBlock block(int64_t level);

    PyramidEncoder person_fpn{nullptr}, garment_fpn{nullptr};
    torch::nn::ModuleList fusion{nullptr};

private:
    WarpNetConfig cfg_;
    int64_t input_height_;
    std::vector<bool> attention_levels_;
};
TORCH_MODULE(WarpNet);

/// Builds the 16-channel person input: keypoint heatmaps, dense pose, preserved person.
torch::Tensor person_input(const torch::Tensor& heatmaps, const torch::Tensor& densepose,
                           const torch::Tensor& preserved_person);

/// Throws ConfigError when the size is not divisible by 2^(levels-1).
void check_pyramid_size(int64_t height, int64_t width, int64_t levels);

int64_t count_parameters(const torch::nn::Module& m);

} // namespace vton
