#pragma once

// Independent oracles shared by the unit tests and the acceptance runner.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "vton/warpnet.hpp"

namespace oracle {

/// Pixel-count overlap ratio via plain loops; negative when the predicted mask is empty.
inline double overlap_ratio(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& ref) {
    long np = 0, both = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i]) {
            ++np;
            if (ref[i]) ++both;
        }
    }
    return np == 0 ? -1.0 : static_cast<double>(both) / static_cast<double>(np);
}

inline torch::Tensor to_mask(const std::vector<uint8_t>& v, int64_t h, int64_t w) {
    return torch::from_blob(const_cast<uint8_t*>(v.data()), {h, w}, torch::kUInt8).clone().to(torch::kBool);
}

/// Row-major triple loop for softmax(Q K^T / sqrt(d)) V.
inline std::vector<std::vector<double>> attention(const std::vector<std::vector<double>>& q,
                                                  const std::vector<std::vector<double>>& k,
                                                  const std::vector<std::vector<double>>& v) {
    const size_t m = q.size(), n = k.size(), d = q[0].size(), dv = v[0].size();
    std::vector<std::vector<double>> out(m, std::vector<double>(dv, 0.0));
    for (size_t i = 0; i < m; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
            s[j] = dot / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (size_t j = 0; j < n; ++j) {
            for (size_t c = 0; c < dv; ++c) out[i][c] += s[j] / z * v[j][c];
        }
    }
    return out;
}

struct GradCheck {
    double max_rel_error = 0.0;
    int probed = 0;
};

/// Central finite differences (step eps) on `probes` parameter entries of a single fusion
/// block in float64, compared with autodiff. The scalar objective is a fixed random
/// projection of the output flow and parsing logits.
inline GradCheck fusion_block_gradcheck(int probes, double eps, uint64_t seed) {
    torch::manual_seed(seed);
    vton::WarpNetConfig cfg;
    cfg.heads = 2;
    cfg.max_disp = 1;
    cfg.attention_heights = {4};
    cfg.attention_dropout = 0.0;
    const int64_t c = 8;
    vton::FusionBlock block(c, true, cfg);
    block->to(torch::kFloat64);
    block->eval();
    {
        torch::NoGradGuard g;
        for (auto& p : block->parameters()) p.normal_(0.0, 0.3);
    }
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto g = torch::randn({1, c, 4, 3}, opts);
    auto p = torch::randn({1, c, 4, 3}, opts);
    // Fractional flow keeps bilinear taps away from integer kinks.
    auto flow = torch::rand({1, 2, 4, 3}, opts) * 0.5 + 0.25;
    auto wf = torch::randn({1, 2, 4, 3}, opts);
    auto wl = torch::randn({1, 7, 4, 3}, opts);
    auto objective = [&] {
        auto o = block->forward(g, p, flow);
        return (o.flow * wf).sum() + (o.logits * wl).sum();
    };
    auto params = block->parameters();
    for (auto& q : params) q.mutable_grad() = torch::Tensor();
    objective().backward();

    std::mt19937_64 rng(seed);
    std::vector<std::pair<size_t, int64_t>> picks;
    while (static_cast<int>(picks.size()) < probes) {
        const size_t pi = std::uniform_int_distribution<size_t>(0, params.size() - 1)(rng);
        const int64_t n = params[pi].numel();
        picks.emplace_back(pi, std::uniform_int_distribution<int64_t>(0, n - 1)(rng));
    }
    GradCheck r;
    torch::NoGradGuard ng;
    for (const auto& [pi, idx] : picks) {
        auto flat = params[pi].view({-1});
        const double orig = flat[idx].item<double>();
        flat[idx] = orig + eps;
        const double up = objective().item<double>();
        flat[idx] = orig - eps;
        const double down = objective().item<double>();
        flat[idx] = orig;
        const double fd = (up - down) / (2.0 * eps);
        const double ad = params[pi].grad().view({-1})[idx].item<double>();
        const double scale = std::max({std::abs(fd), std::abs(ad), 1e-3});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(fd - ad) / scale);
        ++r.probed;
    }
    return r;
}

} // namespace oracle
