#include "vton/warpnet.hpp"

#include <algorithm>

#include "vton/types.hpp"

namespace vton {

namespace {

namespace nn = torch::nn;

nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1, int64_t groups = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).groups(groups));
}

nn::Conv2d conv1(int64_t in, int64_t out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 1)); }

nn::LeakyReLU lrelu() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.1)); }

nn::Conv2d zero_conv(int64_t in, int64_t out) {
    auto c = conv3(in, out);
    torch::NoGradGuard g;
    c->weight.zero_();
    c->bias.zero_();
    return c;
}

torch::Tensor clamp_flow(const torch::Tensor& flow, double bound) {
    if (bound <= 0.0) bound = 2.0 * static_cast<double>(std::max(flow.size(2), flow.size(3)));
    return flow.clamp(-bound, bound);
}

} // namespace

int64_t WarpNetConfig::width(int64_t level) const {
    if (!channels.empty()) {
        if (level >= static_cast<int64_t>(channels.size())) {
            throw ConfigError("warp channel list shorter than the pyramid depth");
        }
        return channels[static_cast<size_t>(level)];
    }
    return 32 * (int64_t{1} << std::min<int64_t>(level, 3));
}

void check_pyramid_size(int64_t height, int64_t width, int64_t levels) {
    const int64_t div = int64_t{1} << std::max<int64_t>(levels - 1, 0);
    if (height % div != 0 || width % div != 0) {
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by 2^" + std::to_string(levels - 1));
    }
}

int64_t count_parameters(const torch::nn::Module& m) {
    int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

PyramidEncoderImpl::PyramidEncoderImpl(int64_t in_channels, const WarpNetConfig& cfg)
    : levels_(cfg.levels) {
    encoders_ = register_module("encoders", nn::ModuleList());
    laterals_ = register_module("laterals", nn::ModuleList());
    top_down_ = register_module("top_down", nn::ModuleList());
    smooth_ = register_module("smooth", nn::ModuleList());
    int64_t prev = in_channels;
    for (int64_t i = 0; i < levels_; ++i) {
        const int64_t c = cfg.width(i);
        encoders_->push_back(nn::Sequential(conv3(prev, c, i == 0 ? 1 : 2), lrelu(), conv3(c, c), lrelu()));
        laterals_->push_back(conv1(c, c));
        smooth_->push_back(conv3(c, c));
        // projects level i+1 onto level i's width in the top-down pass
        if (i + 1 < levels_) top_down_->push_back(conv1(cfg.width(i + 1), c));
        prev = c;
    }
}

FeaturePyramid PyramidEncoderImpl::forward(const torch::Tensor& x) {
    check_pyramid_size(x.size(2), x.size(3), levels_);
    std::vector<torch::Tensor> bottom_up;
    auto h = x;
    for (int64_t i = 0; i < levels_; ++i) {
        h = encoders_[static_cast<size_t>(i)]->as<nn::Sequential>()->forward(h);
        bottom_up.push_back(h);
    }
    FeaturePyramid pyr;
    pyr.levels.resize(static_cast<size_t>(levels_));
    torch::Tensor merged;
    for (int64_t i = levels_ - 1; i >= 0; --i) {
        auto lat = laterals_[static_cast<size_t>(i)]->as<nn::Conv2d>()->forward(bottom_up[static_cast<size_t>(i)]);
        if (merged.defined()) {
            auto up = torch::nn::functional::interpolate(
                merged, torch::nn::functional::InterpolateFuncOptions()
                            .scale_factor(std::vector<double>{2.0, 2.0})
                            .mode(torch::kNearest));
            lat = lat + top_down_[static_cast<size_t>(i)]->as<nn::Conv2d>()->forward(up);
        }
        merged = lat;
        pyr.levels[static_cast<size_t>(i)] = smooth_[static_cast<size_t>(i)]->as<nn::Conv2d>()->forward(lat);
    }
    return pyr;
}

CoarseFlowBlockImpl::CoarseFlowBlockImpl(int64_t channels, int64_t max_disp) : max_disp_(max_disp) {
    const int64_t cost = (2 * max_disp + 1) * (2 * max_disp + 1);
    head = register_module("head", nn::Sequential(conv3(cost, channels), lrelu(),
                                                  conv3(channels, std::max<int64_t>(channels / 2, 8)), lrelu()));
    out = register_module("out", zero_conv(std::max<int64_t>(channels / 2, 8), 2));
}

torch::Tensor CoarseFlowBlockImpl::forward(const torch::Tensor& g, const torch::Tensor& p,
                                           const torch::Tensor& flow_in) {
    auto cost = correlate(warp(g, flow_in), p, max_disp_);
    return flow_in + out(head->forward(cost));
}

FineFlowBlockImpl::FineFlowBlockImpl(int64_t channels, bool use_attention, const WarpNetConfig& cfg) {
    if (use_attention) {
        attention = register_module(
            "attention", CrossAttention(channels, cfg.heads, cfg.attention_dropout,
                                        AttentionGate{cfg.attention_heights}));
    }
    const int64_t groups = channels % 4 == 0 ? 4 : 1;
    const int64_t mid = std::max<int64_t>(channels / 2, 8);
    head = register_module("head", nn::Sequential(conv3(2 * channels, channels, 1, groups), lrelu(),
                                                  conv3(channels, mid, 1, groups), lrelu()));
    out = register_module("out", zero_conv(mid, 2));
}

torch::Tensor FineFlowBlockImpl::forward(const torch::Tensor& g, const torch::Tensor& p,
                                         const torch::Tensor& flow_in) {
    auto gw = warp(g, flow_in);
    auto fused = uses_attention() ? torch::cat({attention(gw, p), p}, 1) : torch::cat({gw, p}, 1);
    return flow_in + out(head->forward(fused));
}

GlobalParsingBlockImpl::GlobalParsingBlockImpl(int64_t channels) {
    fuse = register_module("fuse", nn::Sequential(conv3(2 * channels, channels), lrelu()));
    classify = register_module("classify", nn::Sequential(conv3(channels, channels), lrelu(),
                                                          conv3(channels, parse7::count)));
}

torch::Tensor GlobalParsingBlockImpl::forward(const torch::Tensor& g, const torch::Tensor& p,
                                              const torch::Tensor& flow) {
    auto gp = fuse->forward(torch::cat({warp(g, flow), p}, 1));
    return classify->forward(gp);
}

FusionBlockImpl::FusionBlockImpl(int64_t channels, bool attention, const WarpNetConfig& cfg) {
    coarse = register_module("coarse", CoarseFlowBlock(channels, cfg.max_disp));
    fine = register_module("fine", FineFlowBlock(channels, attention, cfg));
    parsing = register_module("parsing", GlobalParsingBlock(channels));
}

FusionOutput FusionBlockImpl::forward(const torch::Tensor& g, const torch::Tensor& p,
                                      const torch::Tensor& flow_in) {
    FusionOutput o;
    o.coarse_flow = clamp_flow(coarse(g, p, flow_in), flow_clamp);
    o.flow = clamp_flow(fine(g, p, o.coarse_flow), flow_clamp);
    o.logits = parsing(g, p, o.flow);
    return o;
}

WarpNetImpl::WarpNetImpl(WarpNetConfig cfg, int64_t input_height)
    : cfg_(std::move(cfg)), input_height_(input_height) {
    if (cfg_.levels < 1) throw ConfigError("warp pyramid needs at least one level");
    person_fpn = register_module("person_fpn", PyramidEncoder(cfg_.person_channels, cfg_));
    garment_fpn = register_module("garment_fpn", PyramidEncoder(cfg_.garment_channels, cfg_));
    fusion = register_module("fusion", nn::ModuleList());
    const AttentionGate gate{cfg_.attention_heights};
    for (int64_t i = 0; i < cfg_.levels; ++i) {
        const bool attn = cfg_.use_attention && gate.allows(input_height_ >> i);
        attention_levels_.push_back(attn);
        fusion->push_back(FusionBlock(cfg_.width(i), attn, cfg_));
    }
}

bool WarpNetImpl::level_uses_attention(int64_t level) const {
    return attention_levels_.at(static_cast<size_t>(level));
}

FusionBlock WarpNetImpl::block(int64_t level) {
    return FusionBlock(std::dynamic_pointer_cast<FusionBlockImpl>(fusion->ptr(static_cast<size_t>(level))));
}

FeaturePyramid WarpNetImpl::extract_person(const torch::Tensor& x) { return person_fpn(x); }

FeaturePyramid WarpNetImpl::extract_garment(const torch::Tensor& x) { return garment_fpn(x); }

WarpOutput WarpNetImpl::cascade(const FeaturePyramid& person, const FeaturePyramid& garment) {
    if (person.levels.size() != garment.levels.size() ||
        static_cast<int64_t>(person.levels.size()) != cfg_.levels) {
        throw ContractError("pyramid depth mismatch");
    }
    const int64_t n = cfg_.levels;
    WarpOutput out;
    out.flows.resize(static_cast<size_t>(n));
    out.logits.resize(static_cast<size_t>(n));
    const auto& coarsest = person.levels.back();
    torch::Tensor flow = torch::zeros({coarsest.size(0), 2, coarsest.size(2), coarsest.size(3)},
                                      coarsest.options());
    for (int64_t i = n - 1; i >= 0; --i) {
        const auto idx = static_cast<size_t>(i);
        if (i != n - 1) flow = upsample_flow(flow);
        auto r = fusion[idx]->as<FusionBlockImpl>()->forward(garment.levels[idx], person.levels[idx], flow);
        flow = r.flow;
        out.flows[idx] = r.flow;
        out.logits[idx] = r.logits;
    }
    return out;
}

WarpOutput WarpNetImpl::forward(const torch::Tensor& person_in, const torch::Tensor& garment) {
    if (person_in.size(2) != garment.size(2) || person_in.size(3) != garment.size(3)) {
        throw ContractError("person and garment inputs differ in size");
    }
    return cascade(extract_person(person_in), extract_garment(garment));
}

torch::Tensor person_input(const torch::Tensor& heatmaps, const torch::Tensor& densepose,
                           const torch::Tensor& preserved_person) {
    const int64_t dim = heatmaps.dim() == 4 ? 1 : 0;
    return torch::cat({heatmaps, densepose, preserved_person}, dim);
}

} // namespace vton
