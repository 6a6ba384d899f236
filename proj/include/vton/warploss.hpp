#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "vton/feature_nets.hpp"
#include "vton/warpnet.hpp"

namespace vton {

struct WarpLossWeights {
    double per = 0.2;
    double ce = 3.0;
    double m = 0.3;
    double adv = 0.1;
    double tv = 0.1;
    double sec = 6.0;

    /// Throws ConfigError on negative or non-finite weights.
    void validate() const;
};

/// Unweighted terms of the warping objective (scalar tensors).
struct WarpLossParts {
    torch::Tensor l1, per, ce, m, adv, tv, sec;
};

struct LossBreakdown {
    torch::Tensor total;
    std::map<std::string, double> terms; // unweighted values
    nlohmann::json to_json() const;
};

inline constexpr double charbonnier_eps = 1e-3;

/// Mean absolute error over masked pixels (mask broadcast over channels). Empty mask gives 0.
torch::Tensor l1_warp(const torch::Tensor& warped, const torch::Tensor& target, const torch::Tensor& mask);

/// Sum over extractor stages of the mean L1 between features.
torch::Tensor perceptual(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& net);

/// Mean pixel-wise cross entropy; logits N x 7 x H x W, target N x H x W int64.
torch::Tensor parsing_ce(const torch::Tensor& logits, const torch::Tensor& target);

/// Mean absolute difference over all elements of probabilities and one-hot targets.
torch::Tensor parsing_l1(const torch::Tensor& probs, const torch::Tensor& one_hot);

enum class AdvSide { generator, discriminator };

/// Relativistic average hinge loss. The generator side treats real scores as constants.
torch::Tensor adversarial_relativistic(const torch::Tensor& real, const torch::Tensor& fake, AdvSide side);

/// mean|du/dx| + mean|du/dy|, averaged over both flow channels.
torch::Tensor tv_loss(const torch::Tensor& flow);

/// Sum over horizontal, vertical and both diagonal directions of the mean Charbonnier penalty
/// of second differences; directions that do not fit in the field contribute 0.
torch::Tensor second_order_smooth(const torch::Tensor& flow);

LossBreakdown total_warp_loss(const WarpLossParts& parts, const WarpLossWeights& w);

/// Supervision for one batch at full resolution.
struct WarpTargets {
    torch::Tensor garment;    // N x 3 x H x W flat garment
    torch::Tensor gt;         // N x 3 x H x W ground-truth try-on
    torch::Tensor cloth_mask; // N x 1 x H x W float
    torch::Tensor parse7;     // N x H x W int64
};

/// Warped garment at a pyramid level: garment downsampled to the level and warped by its flow.
torch::Tensor warped_at_level(const torch::Tensor& garment, const torch::Tensor& flow, int64_t level);

/// All non-adversarial terms summed over levels with weight 1/2^i; the perceptual term is
/// taken at the finest level only. parts.adv is left as zero for the caller to fill.
WarpLossParts multiscale_warp_parts(const WarpOutput& out, const WarpTargets& t, const FeatureExtractor& net);

/// Downsample helpers shared with the training loop.
torch::Tensor downsample_image(const torch::Tensor& x, int64_t level);
torch::Tensor downsample_labels(const torch::Tensor& labels, int64_t level);

} // namespace vton
