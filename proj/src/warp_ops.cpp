#include "vton/warp_ops.hpp"

#include <algorithm>
#include <cmath>

#include "vton/types.hpp"

namespace vton {

torch::Tensor warp(const torch::Tensor& input, const torch::Tensor& flow) {
    const bool batched = input.dim() == 4;
    auto x = batched ? input : input.unsqueeze(0);
    auto f = flow.dim() == 4 ? flow : flow.unsqueeze(0);
    const int64_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    if (f.size(0) != n || f.size(1) != 2 || f.size(2) != h || f.size(3) != w) {
        throw ContractError("warp: flow shape does not match input");
    }
    auto opts = f.options();
    auto gx = torch::arange(w, opts).view({1, 1, w});
    auto gy = torch::arange(h, opts).view({1, h, 1});
    auto sx = (gx - f.select(1, 0)).clamp(0.0, static_cast<double>(w - 1));
    auto sy = (gy - f.select(1, 1)).clamp(0.0, static_cast<double>(h - 1));
    auto x0 = sx.detach().floor();
    auto y0 = sy.detach().floor();
    auto wx = (sx - x0).unsqueeze(1);
    auto wy = (sy - y0).unsqueeze(1);
    auto x0i = x0.to(torch::kInt64);
    auto y0i = y0.to(torch::kInt64);
    auto x1i = (x0i + 1).clamp_max(w - 1);
    auto y1i = (y0i + 1).clamp_max(h - 1);

    auto flat = x.reshape({n, c, h * w});
    auto tap = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
        auto idx = (yi * w + xi).view({n, 1, h * w}).expand({n, c, h * w});
        return flat.gather(2, idx).view({n, c, h, w});
    };
    auto top = (1 - wx) * tap(y0i, x0i) + wx * tap(y0i, x1i);
    auto bottom = (1 - wx) * tap(y1i, x0i) + wx * tap(y1i, x1i);
    auto out = (1 - wy) * top + wy * bottom;
    return batched ? out : out.squeeze(0);
}

torch::Tensor correlate(const torch::Tensor& a, const torch::Tensor& b, int64_t max_disp) {
    if (a.sizes() != b.sizes()) throw ContractError("correlate: feature shapes differ");
    const int64_t c = a.size(1), h = a.size(2), w = a.size(3);
    namespace F = torch::nn::functional;
    auto bp = F::pad(b, F::PadFuncOptions({max_disp, max_disp, max_disp, max_disp}));
    std::vector<torch::Tensor> channels;
    channels.reserve(static_cast<size_t>((2 * max_disp + 1) * (2 * max_disp + 1)));
    for (int64_t dy = -max_disp; dy <= max_disp; ++dy) {
        for (int64_t dx = -max_disp; dx <= max_disp; ++dx) {
            auto shifted = bp.narrow(2, max_disp + dy, h).narrow(3, max_disp + dx, w);
            channels.push_back((a * shifted).sum(1));
        }
    }
    return torch::stack(channels, 1) / static_cast<double>(c);
}

torch::Tensor upsample_flow(const torch::Tensor& flow) {
    namespace F = torch::nn::functional;
    return F::interpolate(flow, F::InterpolateFuncOptions()
                                    .scale_factor(std::vector<double>{2.0, 2.0})
                                    .mode(torch::kBilinear)
                                    .align_corners(false)) *
           2.0;
}

torch::Tensor downsample_flow(const torch::Tensor& flow, int64_t levels) {
    auto f = flow;
    for (int64_t i = 0; i < levels; ++i) f = torch::avg_pool2d(f, 2) * 0.5;
    return f;
}

bool AttentionGate::allows(int64_t height) const {
    return std::find(heights.begin(), heights.end(), height) != heights.end();
}

torch::Tensor scaled_dot_product_attention(const torch::Tensor& q, const torch::Tensor& k,
                                           const torch::Tensor& v, double dropout, bool training,
                                           torch::Tensor* weights) {
    if (!weights && !(training && dropout > 0.0)) {
        // fused kernel; never materializes the score matrix
        return at::scaled_dot_product_attention(q.contiguous(), k.contiguous(), v.contiguous());
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) * scale, -1);
    if (weights) *weights = attn;
    if (training && dropout > 0.0) attn = torch::dropout(attn, dropout, true);
    return torch::matmul(attn, v);
}

CrossAttentionImpl::CrossAttentionImpl(int64_t channels, int64_t heads, double dropout, AttentionGate gate)
    : channels_(channels), heads_(heads), dropout_(dropout), gate_(std::move(gate)) {
    if (channels % heads != 0) throw ConfigError("attention channels must be divisible by heads");
    q_proj = register_module("q_proj", torch::nn::Linear(channels, channels));
    k_proj = register_module("k_proj", torch::nn::Linear(channels, channels));
    v_proj = register_module("v_proj", torch::nn::Linear(channels, channels));
    out_proj = register_module("out_proj", torch::nn::Linear(channels, channels));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& query_feat, const torch::Tensor& person_feat) {
    const int64_t n = query_feat.size(0), c = query_feat.size(1), h = query_feat.size(2),
                  w = query_feat.size(3);
    if (!gate_.allows(h)) {
        throw ContractError("cross attention requested at height " + std::to_string(h) +
                            " outside the attention gate; use concatenation");
    }
    const int64_t m = h * w, d = c / heads_;
    auto tokens = [&](const torch::Tensor& t) { return t.flatten(2).transpose(1, 2); }; // N x M x C
    auto split = [&](const torch::Tensor& t) { return t.view({n, m, heads_, d}).transpose(1, 2); };
    auto q = split(q_proj(tokens(query_feat)));
    auto k = split(k_proj(tokens(person_feat)));
    auto v = split(v_proj(tokens(person_feat)));
    auto o = scaled_dot_product_attention(q, k, v, dropout_, is_training(), &last_weights_);
    last_weights_ = last_weights_.detach();
    o = out_proj(o.transpose(1, 2).reshape({n, m, c}));
    return query_feat + o.transpose(1, 2).reshape({n, c, h, w});
}

} // namespace vton
