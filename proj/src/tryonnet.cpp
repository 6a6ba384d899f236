#include "vton/tryonnet.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include "vton/types.hpp"
#include "vton/warp_ops.hpp"

namespace vton {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k = 3, int64_t stride = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

template <class M>
M zeroed(M m) {
    torch::NoGradGuard g;
    for (auto& p : m->parameters()) p.zero_();
    return m;
}

nn::GroupNorm group_norm(int64_t channels) { return nn::GroupNorm(norm_groups(channels), channels); }

} // namespace

int64_t norm_groups(int64_t channels) {
    for (int64_t g = std::min<int64_t>(32, channels); g > 1; --g) {
        if (channels % g == 0) return g;
    }
    return 1;
}

ResBlockImpl::ResBlockImpl(int64_t in, int64_t out, int64_t emb_channels) {
    norm1 = register_module("norm1", group_norm(in));
    conv1 = register_module("conv1", conv(in, out));
    emb_proj = register_module("emb_proj", nn::Linear(emb_channels, out));
    norm2 = register_module("norm2", group_norm(out));
    conv2 = register_module("conv2", zeroed(conv(out, out)));
    if (in != out) skip = register_module("skip", conv(in, out, 1));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
    auto h = conv1(torch::silu(norm1(x)));
    h = h + emb_proj(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2(torch::silu(norm2(h)));
    return (skip ? skip(x) : x) + h;
}

SelfAttentionImpl::SelfAttentionImpl(int64_t channels, int64_t heads, double dropout)
    : heads_(channels % heads == 0 ? heads : 1), dropout_(dropout) {
    norm = register_module("norm", group_norm(channels));
    qkv = register_module("qkv", conv(channels, 3 * channels, 1));
    proj = register_module("proj", zeroed(conv(channels, channels, 1)));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
    const int64_t n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const int64_t d = c / heads_;
    auto qkv_t = qkv(norm(x)).reshape({n, 3, heads_, d, h * w});
    auto q = qkv_t.select(1, 0).transpose(-1, -2);
    auto k = qkv_t.select(1, 1).transpose(-1, -2);
    auto v = qkv_t.select(1, 2).transpose(-1, -2);
    auto o = scaled_dot_product_attention(q, k, v, dropout_, is_training());
    return x + proj(o.transpose(-1, -2).reshape({n, c, h, w}));
}

TryOnUNetImpl::TryOnUNetImpl(UNetConfig cfg, int64_t input_height) : cfg_(std::move(cfg)) {
    if (cfg_.channel_mult.empty()) throw ConfigError("try-on channel multiplier list is empty");
    if (cfg_.res_blocks < 1) throw ConfigError("try-on network needs at least one residual block per scale");
    const int64_t levels = static_cast<int64_t>(cfg_.channel_mult.size());
    const int64_t base = cfg_.base_channels;
    const int64_t emb_ch = 4 * base;
    global_mlp = register_module("global_mlp", nn::Sequential(nn::Linear(cfg_.embed_dim, emb_ch), nn::SiLU(),
                                                              nn::Linear(emb_ch, emb_ch)));
    if (cfg_.time_conditioned) {
        time_mlp = register_module("time_mlp",
                                   nn::Sequential(nn::Linear(base, emb_ch), nn::SiLU(), nn::Linear(emb_ch, emb_ch)));
    }
    conv_in = register_module("conv_in", conv(cfg_.in_channels, base));
    res = register_module("res", nn::ModuleList());
    attn = register_module("attn", nn::ModuleList());
    downs = register_module("downs", nn::ModuleList());
    ups = register_module("ups", nn::ModuleList());

    const AttentionGate gate{cfg_.attention_heights};
    auto add_res = [&](int64_t in, int64_t out) {
        res->push_back(ResBlock(in, out, emb_ch));
        return static_cast<int64_t>(res->size()) - 1;
    };
    auto add_attn = [&](int64_t ch) {
        attn->push_back(SelfAttention(ch, cfg_.heads, cfg_.attention_dropout));
        return static_cast<int64_t>(attn->size()) - 1;
    };

    std::vector<int64_t> skips{base};
    int64_t ch = base;
    down_stages_.resize(static_cast<size_t>(levels));
    for (int64_t l = 0; l < levels; ++l) {
        const bool use_attn = gate.allows(input_height >> l);
        attention_levels_.push_back(use_attn);
        const int64_t out = base * cfg_.channel_mult[static_cast<size_t>(l)];
        for (int64_t r = 0; r < cfg_.res_blocks; ++r) {
            Stage s{add_res(ch, out), use_attn ? add_attn(out) : -1};
            down_stages_[static_cast<size_t>(l)].push_back(s);
            ch = out;
            skips.push_back(ch);
        }
        if (l + 1 < levels) {
            downs->push_back(conv(ch, ch, 3, 2));
            skips.push_back(ch);
        }
    }
    mid1 = register_module("mid1", ResBlock(ch, ch, emb_ch));
    mid_attn = register_module("mid_attn", SelfAttention(ch, cfg_.heads, cfg_.attention_dropout));
    mid2 = register_module("mid2", ResBlock(ch, ch, emb_ch));

    up_stages_.resize(static_cast<size_t>(levels));
    for (int64_t l = levels - 1; l >= 0; --l) {
        const int64_t out = base * cfg_.channel_mult[static_cast<size_t>(l)];
        for (int64_t r = 0; r <= cfg_.res_blocks; ++r) {
            const int64_t skip_ch = skips.back();
            skips.pop_back();
            Stage s{add_res(ch + skip_ch, out), attention_levels_[static_cast<size_t>(l)] ? add_attn(out) : -1};
            up_stages_[static_cast<size_t>(l)].push_back(s);
            ch = out;
        }
        if (l > 0) ups->push_back(conv(ch, ch));
    }
    norm_out = register_module("norm_out", group_norm(ch));
    conv_out = register_module("conv_out", zeroed(conv(ch, cfg_.out_channels)));
}

int64_t TryOnUNetImpl::attention_level_count() const {
    return std::count(attention_levels_.begin(), attention_levels_.end(), true);
}

torch::Tensor TryOnUNetImpl::forward(const torch::Tensor& x, const torch::Tensor& emb, const torch::Tensor& t) {
    if (x.dim() != 4 || x.size(1) != cfg_.in_channels) {
        throw ContractError("try-on network expects N x " + std::to_string(cfg_.in_channels) + " x H x W input");
    }
    if (emb.dim() != 2 || emb.size(0) != x.size(0) || emb.size(1) != cfg_.embed_dim) {
        throw ContractError("global embedding must be N x " + std::to_string(cfg_.embed_dim));
    }
    const int64_t levels = static_cast<int64_t>(cfg_.channel_mult.size());
    const int64_t div = int64_t{1} << (levels - 1);
    if (x.size(2) % div != 0 || x.size(3) % div != 0) {
        throw ConfigError("try-on input size must be divisible by " + std::to_string(div));
    }
    ++forward_count_;
    auto e = global_mlp->forward(emb);
    if (cfg_.time_conditioned) {
        if (!t.defined()) throw ContractError("time-conditioned network called without timesteps");
        e = e + time_mlp->forward(timestep_embedding(t, cfg_.base_channels));
    }
    auto run = [&](const Stage& s, torch::Tensor h) {
        h = res[static_cast<size_t>(s.res_index)]->as<ResBlockImpl>()->forward(h, e);
        if (s.attn_index >= 0) h = attn[static_cast<size_t>(s.attn_index)]->as<SelfAttentionImpl>()->forward(h);
        return h;
    };

    std::vector<torch::Tensor> skips;
    auto h = conv_in(x);
    skips.push_back(h);
    for (int64_t l = 0; l < levels; ++l) {
        for (const auto& s : down_stages_[static_cast<size_t>(l)]) {
            h = run(s, h);
            skips.push_back(h);
        }
        if (l + 1 < levels) {
            h = downs[static_cast<size_t>(l)]->as<nn::Conv2dImpl>()->forward(h);
            skips.push_back(h);
        }
    }
    h = mid2(mid_attn(mid1(h, e)), e);
    size_t up_index = 0;
    for (int64_t l = levels - 1; l >= 0; --l) {
        for (const auto& s : up_stages_[static_cast<size_t>(l)]) {
            h = run(s, torch::cat({h, skips.back()}, 1));
            skips.pop_back();
        }
        if (l > 0) {
            h = torch::nn::functional::interpolate(
                h, torch::nn::functional::InterpolateFuncOptions()
                       .scale_factor(std::vector<double>{2.0, 2.0})
                       .mode(torch::kNearest));
            h = ups[up_index++]->as<nn::Conv2dImpl>()->forward(h);
        }
    }
    auto out = conv_out(torch::silu(norm_out(h)));
    return cfg_.tanh_head ? torch::tanh(out) : out;
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
    const int64_t half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
    auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
    auto e = torch::cat({torch::cos(args), torch::sin(args)}, 1);
    if (dim % 2 == 1) e = torch::cat({e, torch::zeros({e.size(0), 1})}, 1);
    return e;
}

torch::Generator make_generator(uint64_t seed, uint64_t stream) {
    // splitmix64 of the pair keeps neighbouring streams decorrelated
    uint64_t z = seed * 0x9E3779B97F4A7C15ull + stream + 0x632BE59BD9B4E019ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return at::make_generator<at::CPUGeneratorImpl>(z);
}

torch::Tensor add_noise(const torch::Tensor& z0, double alpha_n, torch::Generator& gen) {
    if (alpha_n == 0.0) return z0.clone();
    auto eps = torch::randn(z0.sizes(), gen, z0.options().requires_grad(false));
    return z0 + alpha_n * eps;
}

torch::Tensor predicted_labels(const torch::Tensor& logits) { return logits.argmax(logits.dim() - 3); }

torch::Tensor static_region(const torch::Tensor& preserved, const torch::Tensor& pred_labels7,
                            const torch::Tensor& ref_parsing) {
    return ((pred_labels7 == parse7::background) & (ref_parsing == label::background)) | preserved.to(torch::kBool);
}

torch::Tensor merge_static(const torch::Tensor& raw, const torch::Tensor& person, const torch::Tensor& preserved,
                           const torch::Tensor& pred_labels7, const torch::Tensor& ref_parsing) {
    if (raw.sizes() != person.sizes()) throw ContractError("merge_static: image shapes differ");
    auto m = static_region(preserved, pred_labels7, ref_parsing);
    m = m.unsqueeze(m.dim() - 2);
    return torch::where(m, person, raw);
}

EmaShadow::EmaShadow(const torch::nn::Module& m, double decay) : decay_(decay) {
    for (const auto& p : m.parameters()) shadow_.push_back(p.detach().clone());
}

void EmaShadow::update(const torch::nn::Module& m) {
    torch::NoGradGuard g;
    auto params = m.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        shadow_[i].mul_(decay_).add_(params[i].detach(), 1.0 - decay_);
    }
    ++updates_;
}

void EmaShadow::copy_to(torch::nn::Module& m) const {
    torch::NoGradGuard g;
    auto params = m.parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i].copy_(shadow_[i]);
}

void TryOnLossWeights::validate() const {
    if (!std::isfinite(per) || per < 0.0 || !std::isfinite(adv) || adv < 0.0) {
        throw ConfigError("try-on loss weights must be finite and nonnegative");
    }
}

LossBreakdown total_tryon_loss(const torch::Tensor& l1, const torch::Tensor& per, const torch::Tensor& adv,
                               const TryOnLossWeights& w) {
    w.validate();
    LossBreakdown b;
    b.total = l1 + w.per * per + w.adv * adv;
    b.terms["l1"] = l1.item<double>();
    b.terms["per"] = per.item<double>();
    b.terms["adv"] = adv.item<double>();
    return b;
}

TryOnTrainer::TryOnTrainer(TryOnUNet net, TryOnTrainOptions opt, FeatureExtractor perceptual_net)
    : unet(std::move(net)), opt_(opt), per_(std::move(perceptual_net)) {
    disc = PatchDiscriminator(6, 32);
    opt_g = std::make_unique<torch::optim::Adam>(
        unet->parameters(), torch::optim::AdamOptions(opt_.lr_g).betas({opt_.beta1, opt_.beta2}));
    opt_d = std::make_unique<torch::optim::Adam>(
        disc->parameters(), torch::optim::AdamOptions(opt_.lr_d).betas({opt_.beta1, opt_.beta2}));
    ema = EmaShadow(*unet, opt_.ema);
}

namespace {

torch::Tensor generator_input(const TryOnBatch& b, double alpha_n, torch::Generator& gen) {
    auto noisy = add_noise(b.gt, alpha_n, gen);
    return torch::cat({noisy, b.condition, b.densepose}, 1);
}

void check_finite(const torch::Tensor& t, const char* what, int64_t step) {
    if (!std::isfinite(t.item<double>())) {
        std::ostringstream os;
        os << "non-finite " << what << " loss at step " << step;
        throw NumericalError(os.str());
    }
}

} // namespace

TryOnStepResult TryOnTrainer::step(const TryOnBatch& b) {
    unet->train();
    disc->train();
    auto gen = make_generator(opt_.seed, static_cast<uint64_t>(step_count));
    auto raw = unet(generator_input(b, opt_.alpha_n, gen), b.embedding);
    auto merged = merge_static(raw, b.person, b.preserved, b.pred_labels, b.ref_parsing);

    TryOnStepResult r;
    auto real_in = torch::cat({b.gt, b.condition}, 1);
    {
        auto d_loss = adversarial_relativistic(disc(real_in), disc(torch::cat({merged.detach(), b.condition}, 1)),
                                               AdvSide::discriminator);
        check_finite(d_loss, "discriminator", step_count);
        opt_d->zero_grad();
        d_loss.backward();
        opt_d->step();
        r.discriminator = d_loss.item<double>();
    }
    auto l1 = (merged - b.gt).abs().mean();
    auto per = opt_.weights.per > 0.0 ? perceptual(merged, b.gt, per_) : torch::zeros({});
    auto adv = adversarial_relativistic(disc(real_in), disc(torch::cat({merged, b.condition}, 1)), AdvSide::generator);
    r.generator = total_tryon_loss(l1, per, adv, opt_.weights);
    check_finite(r.generator.total, "generator", step_count);
    opt_g->zero_grad();
    r.generator.total.backward();
    opt_g->step();
    ema.update(*unet);
    ++step_count;
    return r;
}

torch::Tensor TryOnTrainer::predict(const TryOnBatch& b, uint64_t stream, bool use_ema) {
    torch::NoGradGuard g;
    std::vector<torch::Tensor> saved;
    if (use_ema) {
        for (const auto& p : unet->parameters()) saved.push_back(p.detach().clone());
        ema.copy_to(*unet);
    }
    unet->eval();
    auto gen = make_generator(opt_.seed ^ 0xABCDEFull, stream);
    auto raw = unet(generator_input(b, opt_.alpha_n, gen), b.embedding);
    auto out = merge_static(raw, b.person, b.preserved, b.pred_labels, b.ref_parsing);
    if (use_ema) {
        auto params = unet->parameters();
        for (size_t i = 0; i < params.size(); ++i) params[i].copy_(saved[i]);
    }
    unet->train();
    return out;
}

} // namespace vton
