#include "vton/pipeline.hpp"

#include <cmath>

namespace vton {

Prepared prepare(const Sample& s) {
    Prepared p;
    p.name = s.name;
    p.type = s.garment_type;
    p.person = s.person;
    p.garment = s.garment;
    p.densepose = s.densepose;
    p.parsing = s.parsing;
    p.parse7 = to_parse7(s.parsing, s.garment_type);
    const auto size = spatial_size(s.person);
    p.heatmaps = rasterize_keypoints(s.keypoints, size, default_keypoint_sigma(size.height));
    const auto pm = build_preserved_mask(s.parsing, s.garment_type);
    p.preserved = pm.mask;
    p.person_input = person_input(p.heatmaps, s.densepose, preserved_person(s.person, pm));
    p.gt = s.gt_tryon;
    p.cloth_mask = s.cloth_mask.defined() ? s.cloth_mask : p.parse7 == parse7::cloth;
    p.mark_mask = s.mark_mask.defined() ? s.mark_mask : torch::zeros_like(p.preserved);
    return p;
}

std::vector<Prepared> prepare_all(const std::vector<Sample>& samples) {
    std::vector<Prepared> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(prepare(s));
    return out;
}

torch::Tensor stack(const std::vector<Prepared>& batch, torch::Tensor Prepared::*field) {
    std::vector<torch::Tensor> ts;
    ts.reserve(batch.size());
    for (const auto& p : batch) ts.push_back(p.*field);
    return torch::stack(ts);
}

torch::Tensor stack_gt(const std::vector<Prepared>& batch) {
    std::vector<torch::Tensor> ts;
    for (const auto& p : batch) {
        if (!p.gt) throw DataError("sample '" + p.name + "' has no ground truth");
        ts.push_back(*p.gt);
    }
    return torch::stack(ts);
}

WarpNetConfig warp_net_config(const PipelineConfig& cfg) {
    WarpNetConfig w;
    w.levels = cfg.warp.levels;
    w.channels = cfg.warp.channels;
    w.attention_heights = cfg.warp.attention_resolutions;
    w.attention_dropout = cfg.warp.attention_dropout;
    w.use_attention = cfg.warp.use_attention;
    w.heads = cfg.warp.heads;
    w.max_disp = cfg.warp.max_disp;
    return w;
}

UNetConfig unet_config(const PipelineConfig& cfg) {
    UNetConfig u;
    u.base_channels = cfg.tryon.base_channels;
    u.channel_mult = cfg.tryon.channel_mult;
    u.res_blocks = cfg.tryon.res_blocks;
    u.attention_heights = cfg.tryon.attention_resolutions;
    u.attention_dropout = cfg.tryon.attention_dropout;
    u.heads = cfg.tryon.heads;
    u.embed_dim = cfg.tryon.embed_dim;
    return u;
}

std::vector<Sample> load_split(const PipelineConfig& cfg, Split split, Pairing pairing) {
    if (cfg.data.source == "directory") {
        DatasetOptions opt;
        opt.size = cfg.size();
        opt.garment_type = cfg.garment_type();
        for (const auto& [k, v] : cfg.data.label_map) {
            try {
                opt.label_map.table[std::stoll(k)] = v;
            } catch (const std::exception&) {
                throw ConfigError("data.label_map key '" + k + "' is not an integer label");
            }
        }
        opt.unpaired_list = cfg.data.unpaired_list;
        return load_dataset(cfg.data.root, split, pairing, opt);
    }
    const int64_t n = split == Split::train ? cfg.data.train_count : cfg.data.test_count;
    const uint64_t base = split == Split::train ? 0 : test_seed_offset;
    SynthOptions so;
    so.pyramid_depth = static_cast<int>(cfg.warp.levels);
    std::vector<Sample> samples;
    for (int64_t i = 0; i < n; ++i) {
        samples.push_back(gen_sample(base + static_cast<uint64_t>(i), cfg.size(), cfg.garment_type(), so));
    }
    if (pairing == Pairing::unpaired) {
        std::vector<Sample> out;
        for (size_t i = 0; i < samples.size(); ++i) {
            Sample s = samples[i];
            const auto& other = samples[(i + 1) % samples.size()];
            s.garment = other.garment;
            s.name = samples[i].name + "__" + other.name;
            s.gt_tryon.reset();
            out.push_back(std::move(s));
        }
        return out;
    }
    return samples;
}

WarpBatch make_warp_batch(const std::vector<Prepared>& batch) {
    WarpBatch b;
    b.person_input = stack(batch, &Prepared::person_input);
    b.targets.garment = stack(batch, &Prepared::garment);
    b.targets.gt = stack_gt(batch);
    b.targets.cloth_mask = stack(batch, &Prepared::cloth_mask).unsqueeze(1).to(torch::kFloat32);
    b.targets.parse7 = stack(batch, &Prepared::parse7);
    return b;
}

void seed_step(uint64_t seed, int64_t step) {
    torch::manual_seed(seed * 1000003ull + static_cast<uint64_t>(step) + 17);
}

WarpTrainer::WarpTrainer(WarpNet n, const PipelineConfig& cfg, FeatureExtractor perceptual_net)
    : net(std::move(n)), per_(std::move(perceptual_net)), seed_(cfg.seed), grad_clip_(cfg.warp.grad_clip) {
    weights_ = {cfg.warp.loss.per, cfg.warp.loss.ce, cfg.warp.loss.m,
                cfg.warp.loss.adv, cfg.warp.loss.tv, cfg.warp.loss.sec};
    weights_.validate();
    disc = PatchDiscriminator(3 + parse7::count, 32);
    const auto betas = std::make_tuple(cfg.warp.beta1, cfg.warp.beta2);
    opt_g = std::make_unique<torch::optim::Adam>(net->parameters(),
                                                 torch::optim::AdamOptions(cfg.warp.lr_g).betas(betas));
    opt_d = std::make_unique<torch::optim::Adam>(disc->parameters(),
                                                 torch::optim::AdamOptions(cfg.warp.lr_d).betas(betas));
}

LossBreakdown WarpTrainer::step(const WarpBatch& b, double* d_loss) {
    seed_step(seed_, step_count);
    net->train();
    disc->train();
    auto out = net(b.person_input, b.targets.garment);
    auto parts = multiscale_warp_parts(out, b.targets, per_);

    auto warped = warp(b.targets.garment, out.flows[0]);
    auto probs = torch::softmax(out.logits[0], 1);
    auto fake = torch::cat({warped * probs.narrow(1, parse7::cloth, 1), probs}, 1);
    auto one_hot = torch::one_hot(b.targets.parse7, parse7::count).permute({0, 3, 1, 2}).to(torch::kFloat32);
    auto real = torch::cat({b.targets.gt * b.targets.cloth_mask, one_hot}, 1);
    if (weights_.adv > 0.0) {
        auto dl = adversarial_relativistic(disc(real), disc(fake.detach()), AdvSide::discriminator);
        if (!std::isfinite(dl.item<double>())) {
            throw NumericalError("non-finite warp discriminator loss at step " + std::to_string(step_count));
        }
        opt_d->zero_grad();
        dl.backward();
        opt_d->step();
        if (d_loss) *d_loss = dl.item<double>();
        parts.adv = adversarial_relativistic(disc(real), disc(fake), AdvSide::generator);
    }
    auto br = total_warp_loss(parts, weights_);
    if (!std::isfinite(br.total.item<double>())) {
        throw NumericalError("non-finite warp loss at step " + std::to_string(step_count) + ": " +
                             br.to_json().dump());
    }
    opt_g->zero_grad();
    br.total.backward();
    if (grad_clip_ > 0.0) torch::nn::utils::clip_grad_norm_(net->parameters(), grad_clip_);
    opt_g->step();
    ++step_count;
    return br;
}

double WarpTrainer::warped_l1(const WarpBatch& b) {
    torch::NoGradGuard g;
    net->eval();
    auto out = net(b.person_input, b.targets.garment);
    net->train();
    return l1_warp(warp(b.targets.garment, out.flows[0]), b.targets.gt, b.targets.cloth_mask).item<double>();
}

WarpResult run_warp(WarpNet& net, const std::vector<Prepared>& batch) {
    torch::NoGradGuard g;
    net->eval();
    auto garment = stack(batch, &Prepared::garment);
    auto out = net(stack(batch, &Prepared::person_input), garment);
    WarpResult r;
    r.flow = out.flows[0];
    r.logits = out.logits[0];
    r.pred_labels = predicted_labels(r.logits);
    r.warped = warp(garment, r.flow);
    r.cloth_mask = r.pred_labels == parse7::cloth;
    return r;
}

WarpResult oracle_warp(const std::vector<Prepared>& batch) {
    WarpResult r;
    auto gt = stack_gt(batch);
    r.cloth_mask = stack(batch, &Prepared::cloth_mask);
    r.pred_labels = stack(batch, &Prepared::parse7);
    r.warped = gt * r.cloth_mask.unsqueeze(1);
    r.logits = torch::one_hot(r.pred_labels, parse7::count).permute({0, 3, 1, 2}).to(torch::kFloat32) * 20.0;
    r.flow = torch::zeros({gt.size(0), 2, gt.size(2), gt.size(3)});
    return r;
}

Models build_models(const PipelineConfig& cfg, std::optional<ImageSize> size) {
    const auto sz = size.value_or(cfg.size());
    torch::manual_seed(cfg.seed);
    Models m;
    m.warp = WarpNet(warp_net_config(cfg), sz.height);
    m.unet = TryOnUNet(unet_config(cfg), sz.height);
    m.encoder = make_garment_encoder(cfg.tryon.encoder, cfg.seed + 99);
    if (m.encoder->dim() != cfg.tryon.embed_dim) {
        throw ConfigError("garment encoder '" + m.encoder->id() + "' produces " + std::to_string(m.encoder->dim()) +
                          "-d vectors but tryon.embed_dim is " + std::to_string(cfg.tryon.embed_dim));
    }
    return m;
}

Models load_models(const PipelineConfig& cfg, const std::filesystem::path& warp_ckpt,
                   const std::filesystem::path& tryon_ckpt, bool use_ema) {
    Models m = build_models(cfg);
    if (!std::filesystem::exists(warp_ckpt)) throw DataError("missing warp checkpoint " + warp_ckpt.string());
    if (!std::filesystem::exists(tryon_ckpt)) throw DataError("missing try-on checkpoint " + tryon_ckpt.string());
    load_checkpoint(warp_ckpt).load_module("warp.", *m.warp);
    const auto ck = load_checkpoint(tryon_ckpt);
    ck.load_module(use_ema && ck.has_prefix("ema.") ? "ema." : "unet.", *m.unet);
    return m;
}

torch::Tensor encode_global(GarmentEncoder& encoder, const std::vector<Prepared>& batch) {
    std::vector<std::string> names;
    for (const auto& p : batch) names.push_back(p.name);
    return encoder.encode(stack(batch, &Prepared::garment), names);
}

namespace {

torch::Tensor local_condition(const std::vector<Prepared>& batch, const WarpResult& w) {
    std::vector<torch::Tensor> cs;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& p = batch[i];
        const PreservedMask pm{p.preserved, p.type};
        cs.push_back(assemble_condition(p.person, w.warped[static_cast<int64_t>(i)],
                                        w.cloth_mask[static_cast<int64_t>(i)], pm, p.parsing)
                         .image);
    }
    return torch::stack(cs);
}

} // namespace

TryOnBatch make_tryon_batch(const std::vector<Prepared>& batch, const WarpResult& warp, GarmentEncoder& encoder) {
    TryOnBatch b;
    b.gt = stack_gt(batch);
    b.person = stack(batch, &Prepared::person);
    b.condition = local_condition(batch, warp);
    b.densepose = stack(batch, &Prepared::densepose);
    b.embedding = encode_global(encoder, batch);
    b.preserved = stack(batch, &Prepared::preserved);
    b.pred_labels = warp.pred_labels;
    b.ref_parsing = stack(batch, &Prepared::parsing);
    return b;
}

InferOptions infer_options(const PipelineConfig& cfg) {
    InferOptions o;
    o.post.threshold = cfg.postproc.threshold;
    o.post.equality_mode = cfg.postproc.equality_mode;
    o.unconditional_post = cfg.postproc.unconditional;
    o.conditional_post = cfg.postproc.conditional;
    o.alpha_n = cfg.tryon.alpha_n;
    o.seed = cfg.seed;
    return o;
}

uint64_t name_stream(const std::string& name) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : name) h = (h ^ c) * 1099511628211ull;
    return h;
}

namespace {

struct Staged {
    WarpResult warp;
    torch::Tensor condition, condition_post, densepose, embedding, person, preserved, ref;
    std::vector<PartMasks> pred_masks, ref_masks;
};

Staged stage(Models& m, const std::vector<Prepared>& batch, const InferOptions& opt) {
    Staged s;
    s.warp = run_warp(m.warp, batch);
    if (opt.exact_masks) {
        s.warp.pred_labels = stack(batch, &Prepared::parse7);
        s.warp.cloth_mask = s.warp.pred_labels == parse7::cloth;
    }
    s.condition = local_condition(batch, s.warp);
    s.person = stack(batch, &Prepared::person);
    s.preserved = stack(batch, &Prepared::preserved);
    s.ref = stack(batch, &Prepared::parsing);
    std::vector<torch::Tensor> posts;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto idx = static_cast<int64_t>(i);
        s.pred_masks.push_back(PartMasks::from_parse7(s.warp.pred_labels[idx]));
        s.ref_masks.push_back(PartMasks::from_parsing(batch[i].parsing));
        posts.push_back(opt.unconditional_post
                            ? unconditional_post(s.condition[idx], batch[i].person, s.pred_masks[i], s.ref_masks[i])
                            : s.condition[idx]);
    }
    s.condition_post = torch::stack(posts);
    s.densepose = stack(batch, &Prepared::densepose);
    if (opt.zero_densepose) s.densepose = torch::zeros_like(s.densepose);
    s.embedding = encode_global(*m.encoder, batch);
    if (opt.zero_embedding) s.embedding = torch::zeros_like(s.embedding);
    return s;
}

std::vector<InferResult> finish(const std::vector<Prepared>& batch, const Staged& s, const torch::Tensor& raw,
                                const InferOptions& opt) {
    auto merged = merge_static(raw, s.person, s.preserved, s.warp.pred_labels, s.ref);
    std::vector<InferResult> out;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto idx = static_cast<int64_t>(i);
        InferResult r;
        r.name = batch[i].name;
        r.raw = raw[idx];
        r.merged = merged[idx];
        r.condition = s.condition[idx];
        r.condition_post = s.condition_post[idx];
        r.warped_garment = s.warp.warped[idx];
        r.pred_labels = s.warp.pred_labels[idx];
        if (opt.conditional_post) {
            auto c = conditional_post(r.merged, batch[i].person, s.pred_masks[i], s.ref_masks[i], opt.post);
            r.output = c.image;
            r.report = c.report;
        } else {
            r.output = r.merged;
            r.report.threshold = opt.post.threshold;
            r.report.equality_mode = opt.post.equality_mode;
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace

std::vector<InferResult> infer(Models& m, const std::vector<Prepared>& batch, const InferOptions& opt) {
    torch::NoGradGuard g;
    auto s = stage(m, batch, opt);
    std::vector<torch::Tensor> noisy;
    for (size_t i = 0; i < batch.size(); ++i) {
        auto gen = make_generator(opt.seed, name_stream(batch[i].name));
        const auto& base = s.condition_post[static_cast<int64_t>(i)];
        noisy.push_back(add_noise(opt.pure_noise ? torch::zeros_like(base) : base, opt.alpha_n, gen));
    }
    m.unet->eval();
    auto raw = m.unet(torch::cat({torch::stack(noisy), s.condition_post, s.densepose}, 1), s.embedding);
    return finish(batch, s, raw, opt);
}

std::vector<InferResult> infer_ddim(Models& m, TryOnUNet& ddim_net, const DiffusionSchedule& schedule, int64_t steps,
                                    const std::vector<Prepared>& batch, const InferOptions& opt) {
    torch::NoGradGuard g;
    auto s = stage(m, batch, opt);
    ddim_net->eval();
    auto gen = make_generator(opt.seed, name_stream(batch.front().name));
    auto raw = ddim_sample(ddim_net, torch::cat({s.condition_post, s.densepose}, 1), s.embedding, steps, schedule,
                           gen);
    return finish(batch, s, raw, opt);
}

PerceptualNet make_perceptual_net(const PipelineConfig& cfg) {
    PerceptualNet net(cfg.eval.extractor_seed);
    if (!cfg.eval.extractor_weights.empty()) {
        load_checkpoint(cfg.eval.extractor_weights).load_module("extractor.", *net);
        freeze(*net);
    }
    return net;
}

} // namespace vton
