#include "vton/warploss.hpp"

#include <cmath>
#include <iostream>

#include "vton/types.hpp"
#include "vton/warp_ops.hpp"

namespace vton {

void WarpLossWeights::validate() const {
    const std::pair<const char*, double> all[] = {{"per", per}, {"ce", ce}, {"m", m},
                                                  {"adv", adv}, {"tv", tv}, {"sec", sec}};
    for (const auto& [name, v] : all) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ConfigError(std::string("warp loss weight '") + name + "' must be finite and nonnegative");
        }
    }
}

nlohmann::json LossBreakdown::to_json() const {
    nlohmann::json j = terms;
    j["total"] = total.defined() ? total.item<double>() : 0.0;
    return j;
}

torch::Tensor l1_warp(const torch::Tensor& warped, const torch::Tensor& target, const torch::Tensor& mask) {
    auto m = mask.to(warped.dtype());
    while (m.dim() < warped.dim()) m = m.unsqueeze(m.dim() == 2 ? 0 : 1);
    m = m.expand_as(warped);
    auto denom = m.sum();
    if (denom.item<double>() <= 0.0) {
        static bool warned = false;
        if (!warned) {
            std::clog << "warning: l1_warp called with an empty mask; returning 0\n";
            warned = true;
        }
        return torch::zeros({}, warped.options());
    }
    return ((warped - target).abs() * m).sum() / denom;
}

torch::Tensor perceptual(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& net) {
    auto fa = net(a);
    auto fb = net(b);
    auto total = torch::zeros({}, a.options());
    for (size_t i = 0; i < fa.size(); ++i) total = total + (fa[i] - fb[i]).abs().mean();
    return total;
}

torch::Tensor parsing_ce(const torch::Tensor& logits, const torch::Tensor& target) {
    return torch::nn::functional::cross_entropy(logits, target);
}

torch::Tensor parsing_l1(const torch::Tensor& probs, const torch::Tensor& one_hot) {
    return (probs - one_hot.to(probs.dtype())).abs().mean();
}

torch::Tensor adversarial_relativistic(const torch::Tensor& real, const torch::Tensor& fake, AdvSide side) {
    if (side == AdvSide::discriminator) {
        return torch::relu(1.0 - (real - fake.mean())).mean() + torch::relu(1.0 + (fake - real.mean())).mean();
    }
    auto r = real.detach();
    return torch::relu(1.0 + (r - fake.mean())).mean() + torch::relu(1.0 - (fake - r.mean())).mean();
}

torch::Tensor tv_loss(const torch::Tensor& flow) {
    auto f = flow.dim() == 3 ? flow.unsqueeze(0) : flow;
    auto total = torch::zeros({}, f.options());
    if (f.size(3) > 1) total = total + (f.narrow(3, 1, f.size(3) - 1) - f.narrow(3, 0, f.size(3) - 1)).abs().mean();
    if (f.size(2) > 1) total = total + (f.narrow(2, 1, f.size(2) - 1) - f.narrow(2, 0, f.size(2) - 1)).abs().mean();
    return total;
}

torch::Tensor second_order_smooth(const torch::Tensor& flow) {
    auto f = flow.dim() == 3 ? flow.unsqueeze(0) : flow;
    const int64_t h = f.size(2), w = f.size(3);
    auto charb = [](const torch::Tensor& d) {
        return (torch::sqrt(d * d + charbonnier_eps * charbonnier_eps) - charbonnier_eps).mean();
    };
    // center p, neighbours p - d and p + d for d in {(1,0), (0,1), (1,1), (1,-1)} as (dx, dy)
    auto crop = [&](int64_t dx, int64_t dy) {
        return f.narrow(2, 1 + dy, h - 2).narrow(3, 1 + dx, w - 2);
    };
    auto total = torch::zeros({}, f.options());
    if (w >= 3) {
        auto row = [&](int64_t dx) { return f.narrow(3, 1 + dx, w - 2); };
        total = total + charb(row(-1) - 2 * row(0) + row(1));
    }
    if (h >= 3) {
        auto col = [&](int64_t dy) { return f.narrow(2, 1 + dy, h - 2); };
        total = total + charb(col(-1) - 2 * col(0) + col(1));
    }
    if (h >= 3 && w >= 3) {
        total = total + charb(crop(-1, -1) - 2 * crop(0, 0) + crop(1, 1));
        total = total + charb(crop(1, -1) - 2 * crop(0, 0) + crop(-1, 1));
    }
    return total;
}

LossBreakdown total_warp_loss(const WarpLossParts& p, const WarpLossWeights& w) {
    w.validate();
    LossBreakdown b;
    const std::pair<const char*, std::pair<torch::Tensor, double>> items[] = {
        {"l1", {p.l1, 1.0}},  {"per", {p.per, w.per}}, {"ce", {p.ce, w.ce}}, {"m", {p.m, w.m}},
        {"adv", {p.adv, w.adv}}, {"tv", {p.tv, w.tv}},  {"sec", {p.sec, w.sec}}};
    torch::Tensor total;
    for (const auto& [name, tw] : items) {
        const auto& [t, weight] = tw;
        if (!t.defined()) {
            b.terms[name] = 0.0;
            continue;
        }
        b.terms[name] = t.item<double>();
        auto contrib = t * weight;
        total = total.defined() ? total + contrib : contrib;
    }
    b.total = total.defined() ? total : torch::zeros({});
    return b;
}

torch::Tensor downsample_image(const torch::Tensor& x, int64_t level) {
    if (level == 0) return x;
    const int64_t s = int64_t{1} << level;
    return torch::avg_pool2d(x, s);
}

torch::Tensor downsample_labels(const torch::Tensor& labels, int64_t level) {
    if (level == 0) return labels;
    const int64_t s = int64_t{1} << level;
    using torch::indexing::Slice;
    return labels.index({"...", Slice(s / 2, torch::indexing::None, s), Slice(s / 2, torch::indexing::None, s)});
}

torch::Tensor warped_at_level(const torch::Tensor& garment, const torch::Tensor& flow, int64_t level) {
    return warp(downsample_image(garment, level), flow);
}

WarpLossParts multiscale_warp_parts(const WarpOutput& out, const WarpTargets& t, const FeatureExtractor& net) {
    WarpLossParts p;
    auto zero = torch::zeros({}, t.gt.options());
    p.l1 = p.per = p.ce = p.m = p.adv = p.tv = p.sec = zero;
    for (size_t i = 0; i < out.flows.size(); ++i) {
        const auto level = static_cast<int64_t>(i);
        const double lw = 1.0 / static_cast<double>(int64_t{1} << level);
        auto warped = warped_at_level(t.garment, out.flows[i], level);
        auto gt = downsample_image(t.gt, level);
        auto mask = downsample_image(t.cloth_mask, level);
        p.l1 = p.l1 + lw * l1_warp(warped, gt, mask);
        if (i == 0) p.per = perceptual(warped * mask, gt * mask, net);
        auto labels = downsample_labels(t.parse7, level);
        p.ce = p.ce + lw * parsing_ce(out.logits[i], labels);
        auto one_hot = torch::one_hot(labels, parse7::count).permute({0, 3, 1, 2});
        p.m = p.m + lw * parsing_l1(torch::softmax(out.logits[i], 1), one_hot);
        p.tv = p.tv + lw * tv_loss(out.flows[i]);
        p.sec = p.sec + lw * second_order_smooth(out.flows[i]);
    }
    return p;
}

} // namespace vton
