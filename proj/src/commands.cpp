#include "vton/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "vton/image_io.hpp"

namespace vton {

using nlohmann::json;

void append_jsonl(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::app);
    os << j.dump() << "\n";
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    os << text;
}

std::vector<int64_t> batch_indices(int64_t step, int64_t batch, int64_t n) {
    std::vector<int64_t> idx;
    for (int64_t j = 0; j < batch; ++j) idx.push_back((step * batch + j) % n);
    return idx;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<int64_t>& idx) {
    std::vector<T> out;
    for (auto i : idx) out.push_back(v[static_cast<size_t>(i)]);
    return out;
}

TryOnBatch select(const TryOnBatch& b, const std::vector<int64_t>& idx) {
    auto t = torch::tensor(idx, torch::kInt64);
    auto s = [&](const torch::Tensor& x) { return x.index_select(0, t); };
    return {s(b.gt), s(b.person), s(b.condition), s(b.densepose), s(b.embedding),
            s(b.preserved), s(b.pred_labels), s(b.ref_parsing)};
}

std::string num(double v, int precision = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

void note(std::ostream* os, const std::string& msg) {
    if (os) *os << msg << std::endl;
}

std::vector<std::vector<Prepared>> chunk(const std::vector<Prepared>& all, int64_t size) {
    std::vector<std::vector<Prepared>> out;
    for (size_t i = 0; i < all.size(); i += static_cast<size_t>(size)) {
        out.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(i),
                         all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), i + static_cast<size_t>(size))));
    }
    return out;
}

double mutable_l1(const torch::Tensor& out, const TryOnBatch& b) {
    return masked_l1(out, b.gt, b.preserved.logical_not());
}

void save_warp(const fs::path& path, const PipelineConfig& cfg, WarpTrainer& tr) {
    Checkpoint ck;
    ck.config = to_json(cfg);
    ck.meta = {{"kind", "warp"}, {"step", tr.step_count}};
    ck.put_module("warp.", *tr.net);
    ck.put_module("warp_d.", *tr.disc);
    ck.put_adam("adam_g.", *tr.opt_g);
    ck.put_adam("adam_d.", *tr.opt_d);
    save_checkpoint(path, ck);
}

void put_ema(Checkpoint& ck, const torch::nn::Module& m, const EmaShadow& ema) {
    const auto named = m.named_parameters(true);
    size_t i = 0;
    for (const auto& p : named) ck.tensors["ema." + p.key()] = ema.shadow()[i++].clone();
}

void load_ema(const Checkpoint& ck, const torch::nn::Module& m, EmaShadow& ema) {
    const auto named = m.named_parameters(true);
    size_t i = 0;
    for (const auto& p : named) {
        auto it = ck.tensors.find("ema." + p.key());
        if (it == ck.tensors.end()) throw DataError("checkpoint is missing EMA tensor '" + p.key() + "'");
        ema.shadow()[i++].copy_(it->second);
    }
}

void save_tryon(const fs::path& path, const PipelineConfig& cfg, TryOnTrainer& tr, uint64_t encoder_hash) {
    Checkpoint ck;
    ck.config = to_json(cfg);
    ck.meta = {{"kind", "tryon"},
               {"step", tr.step_count},
               {"ema_updates", tr.ema.updates()},
               {"encoder", cfg.tryon.encoder},
               {"encoder_hash", std::to_string(encoder_hash)}};
    ck.put_module("unet.", *tr.unet);
    put_ema(ck, *tr.unet, tr.ema);
    ck.put_module("disc.", *tr.disc);
    ck.put_adam("adam_g.", *tr.opt_g);
    ck.put_adam("adam_d.", *tr.opt_d);
    save_checkpoint(path, ck);
}

} // namespace

int64_t configured_steps(int64_t steps, int64_t epochs, int64_t batch_size, int64_t dataset_size) {
    if (steps > 0) return steps;
    const int64_t per_epoch = (dataset_size + batch_size - 1) / batch_size;
    return epochs * per_epoch;
}

TrainResult cmd_train_warp(const PipelineConfig& cfg, const fs::path& out, const TrainOptions& opt) {
    cfg.validate();
    fs::create_directories(out);
    const auto prep = prepare_all(load_split(cfg, Split::train, Pairing::paired));
    const auto n = static_cast<int64_t>(prep.size());
    const int64_t steps = opt.steps.value_or(configured_steps(cfg.warp.steps, cfg.warp.epochs, cfg.warp.batch_size, n));

    torch::manual_seed(cfg.seed);
    WarpNet net(warp_net_config(cfg), cfg.data.height);
    auto per = make_perceptual_net(cfg);
    WarpTrainer tr(net, cfg, as_extractor(per));
    const fs::path log = out / "warp_train.jsonl";
    if (opt.resume) {
        const auto ck = load_checkpoint(*opt.resume);
        ck.load_module("warp.", *tr.net);
        ck.load_module("warp_d.", *tr.disc);
        ck.load_adam("adam_g.", *tr.opt_g);
        ck.load_adam("adam_d.", *tr.opt_d);
        tr.step_count = ck.meta.at("step").get<int64_t>();
    } else {
        fs::remove(log);
    }
    const auto metric_set = pick(prep, batch_indices(0, std::min<int64_t>(n, 16), n));
    const auto metric_batch = make_warp_batch(metric_set);

    TrainResult r;
    r.initial_metric = tr.warped_l1(metric_batch);
    const int64_t every = std::max<int64_t>(cfg.log.every, 1);
    while (tr.step_count < steps) {
        const int64_t s = tr.step_count;
        const auto batch = make_warp_batch(pick(prep, batch_indices(s, cfg.warp.batch_size, n)));
        double d_loss = 0.0;
        const auto br = tr.step(batch, &d_loss);
        r.losses.push_back(br.total.item<double>());
        if (s % every == 0 || s + 1 == steps) {
            auto j = br.to_json();
            j["step"] = s;
            j["d_loss"] = d_loss;
            j["warped_l1"] = tr.warped_l1(metric_batch);
            append_jsonl(log, j);
            note(opt.progress, "warp step " + std::to_string(s) + " loss " + num(br.total.item<double>()) +
                                   " warped_l1 " + num(j["warped_l1"].get<double>()));
        }
        if (cfg.log.checkpoint_every > 0 && (s + 1) % cfg.log.checkpoint_every == 0) {
            save_warp(out / ("warp_step" + std::to_string(s + 1) + ".ckpt"), cfg, tr);
        }
    }
    r.steps = tr.step_count;
    r.final_metric = tr.warped_l1(metric_batch);
    r.checkpoint = out / "warp.ckpt";
    save_warp(r.checkpoint, cfg, tr);
    return r;
}

TrainResult cmd_train_tryon(const PipelineConfig& cfg, const fs::path& out, const TrainOptions& opt) {
    cfg.validate();
    fs::create_directories(out);
    const auto prep = prepare_all(load_split(cfg, Split::train, Pairing::paired));
    const auto n = static_cast<int64_t>(prep.size());
    const int64_t steps =
        opt.steps.value_or(configured_steps(cfg.tryon.steps, cfg.tryon.epochs, cfg.tryon.batch_size, n));

    WarpResult warp_out;
    if (opt.warp_checkpoint) {
        torch::manual_seed(cfg.seed);
        WarpNet wn(warp_net_config(cfg), cfg.data.height);
        load_checkpoint(*opt.warp_checkpoint).load_module("warp.", *wn);
        warp_out = run_warp(wn, prep);
    } else {
        warp_out = oracle_warp(prep);
    }
    auto encoder = make_garment_encoder(cfg.tryon.encoder, cfg.seed + 99);
    const uint64_t encoder_hash = encoder->parameter_hash();
    const auto full = make_tryon_batch(prep, warp_out, *encoder);

    torch::manual_seed(cfg.seed);
    TryOnUNet unet(unet_config(cfg), cfg.data.height);
    TryOnTrainOptions to;
    to.alpha_n = cfg.tryon.alpha_n;
    to.lr_g = cfg.tryon.lr_g;
    to.lr_d = cfg.tryon.lr_d;
    to.beta1 = cfg.tryon.beta1;
    to.beta2 = cfg.tryon.beta2;
    to.ema = cfg.tryon.ema.value_or(0.0);
    to.weights = {cfg.tryon.loss.per, cfg.tryon.loss.adv};
    to.seed = cfg.seed;
    auto per = make_perceptual_net(cfg);
    TryOnTrainer tr(unet, to, as_extractor(per));

    const fs::path log = out / "tryon_train.jsonl";
    if (opt.resume) {
        const auto ck = load_checkpoint(*opt.resume);
        ck.load_module("unet.", *tr.unet);
        load_ema(ck, *tr.unet, tr.ema);
        ck.load_module("disc.", *tr.disc);
        ck.load_adam("adam_g.", *tr.opt_g);
        ck.load_adam("adam_d.", *tr.opt_d);
        tr.step_count = ck.meta.at("step").get<int64_t>();
        tr.ema.set_updates(ck.meta.value("ema_updates", tr.step_count));
    } else {
        fs::remove(log);
    }
    const auto metric_batch = select(full, batch_indices(0, std::min<int64_t>(n, 16), n));
    const bool use_ema = cfg.tryon.ema.has_value();

    TrainResult r;
    r.initial_metric = mutable_l1(tr.predict(metric_batch, 0, use_ema), metric_batch);
    const int64_t every = std::max<int64_t>(cfg.log.every, 1);
    while (tr.step_count < steps) {
        const int64_t s = tr.step_count;
        seed_step(cfg.seed, s);
        const auto res = tr.step(select(full, batch_indices(s, cfg.tryon.batch_size, n)));
        r.losses.push_back(res.generator.total.item<double>());
        if (s % every == 0 || s + 1 == steps) {
            auto j = res.generator.to_json();
            j["step"] = s;
            j["d_loss"] = res.discriminator;
            append_jsonl(log, j);
            note(opt.progress, "tryon step " + std::to_string(s) + " loss " + num(res.generator.total.item<double>()));
        }
        if (cfg.log.checkpoint_every > 0 && (s + 1) % cfg.log.checkpoint_every == 0) {
            save_tryon(out / ("tryon_step" + std::to_string(s + 1) + ".ckpt"), cfg, tr, encoder_hash);
        }
    }
    if (encoder->parameter_hash() != encoder_hash) throw NumericalError("frozen garment encoder changed in training");
    r.steps = tr.step_count;
    r.final_metric = mutable_l1(tr.predict(metric_batch, 0, use_ema), metric_batch);
    append_jsonl(log, {{"final_masked_l1", r.final_metric}, {"initial_masked_l1", r.initial_metric}});
    r.checkpoint = out / "tryon.ckpt";
    save_tryon(r.checkpoint, cfg, tr, encoder_hash);
    return r;
}

void save_models(const PipelineConfig& cfg, Models& models, const fs::path& warp_ckpt, const fs::path& tryon_ckpt) {
    Checkpoint w;
    w.config = to_json(cfg);
    w.meta = {{"kind", "warp"}, {"step", 0}};
    w.put_module("warp.", *models.warp);
    save_checkpoint(warp_ckpt, w);
    Checkpoint t;
    t.config = to_json(cfg);
    t.meta = {{"kind", "tryon"}, {"step", 0}};
    t.put_module("unet.", *models.unet);
    save_checkpoint(tryon_ckpt, t);
}

std::vector<InferResult> cmd_infer(const PipelineConfig& cfg, const fs::path& out, const InferCommandOptions& opt) {
    cfg.validate();
    auto models = load_models(cfg, opt.warp_checkpoint, opt.tryon_checkpoint, cfg.tryon.ema.has_value());
    auto samples = load_split(cfg, opt.split, opt.pairing);
    if (opt.limit && static_cast<int64_t>(samples.size()) > *opt.limit) samples.resize(static_cast<size_t>(*opt.limit));
    const auto prep = prepare_all(samples);
    auto io = infer_options(cfg);
    io.exact_masks = opt.exact_masks;

    std::vector<InferResult> results;
    for (const auto& batch : chunk(prep, cfg.eval.batch_size)) {
        for (auto& r : infer(models, batch, io)) results.push_back(std::move(r));
    }
    fs::create_directories(out / "images");
    fs::create_directories(out / "reports");
    std::vector<torch::Tensor> sheet;
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        save_image(out / "images" / (r.name + ".png"), r.output);
        auto j = r.report.to_json();
        j["name"] = r.name;
        write_text(out / "reports" / (r.name + ".json"), j.dump(2) + "\n");
        sheet.push_back(prep[i].person);
        sheet.push_back(prep[i].garment);
        sheet.push_back(r.condition_post);
        sheet.push_back(r.output);
    }
    if (!sheet.empty()) save_image(out / "contact_sheet.png", contact_sheet(sheet, 4));
    return results;
}

EvalReport evaluate_images(const std::string& name, const torch::Tensor& outputs,
                           const std::optional<torch::Tensor>& gts, const torch::Tensor& reference_set,
                           PerceptualNet& extractor, const std::string& pairing) {
    EvalReport r;
    r.name = name;
    r.pairing = pairing;
    r.extractor = "perceptual-seeded";
    r.images = outputs.size(0);
    if (gts) {
        double s = 0.0, l = 0.0;
        for (int64_t i = 0; i < outputs.size(0); ++i) s += ssim(outputs[i], (*gts)[i]);
        r.ssim = s / static_cast<double>(outputs.size(0));
        l = (outputs - *gts).abs().mean().item<double>();
        r.l1 = l;
        r.lpips = lpips_proxy(outputs, *gts, extractor);
    }
    auto pooled = pooled_extractor(extractor);
    auto fa = pooled(outputs), fb = pooled(reference_set);
    r.fid = frechet_distance(fa, fb);
    r.kid = fa.size(0) >= 2 && fb.size(0) >= 2 ? kernel_distance(fa, fb) : 0.0;
    return r;
}

std::vector<EvalReport> cmd_eval(const PipelineConfig& cfg, const fs::path& out, const EvalCommandOptions& opt) {
    cfg.validate();
    fs::create_directories(out);
    auto extractor = make_perceptual_net(cfg);
    const auto paired = prepare_all(load_split(cfg, Split::test, Pairing::paired));
    const auto gts = stack_gt(paired);
    std::vector<EvalReport> reports;
    if (opt.self_check) {
        reports.push_back(evaluate_images("ground-truth", gts, gts, gts, extractor, "paired"));
        reports.push_back(evaluate_images("ground-truth", gts, std::nullopt, gts, extractor, "unpaired"));
    } else {
        auto models = load_models(cfg, opt.warp_checkpoint, opt.tryon_checkpoint, cfg.tryon.ema.has_value());
        const auto io = infer_options(cfg);
        auto run_all = [&](const std::vector<Prepared>& prep) {
            std::vector<torch::Tensor> outs;
            for (const auto& batch : chunk(prep, cfg.eval.batch_size)) {
                for (auto& r : infer(models, batch, io)) outs.push_back(r.output);
            }
            return torch::stack(outs);
        };
        auto rp = evaluate_images("ours", run_all(paired), gts, gts, extractor, "paired");
        const auto batches = chunk(paired, cfg.eval.batch_size);
        std::vector<int64_t> sizes;
        for (const auto& b : batches) sizes.push_back(static_cast<int64_t>(b.size()));
        rp.timing = timing_bench([&](size_t i) { infer(models, batches[i], io); }, sizes, cfg.eval.batch_size,
                                 cfg.eval.repeats);
        reports.push_back(rp);
        const auto unpaired = prepare_all(load_split(cfg, Split::test, Pairing::unpaired));
        reports.push_back(evaluate_images("ours", run_all(unpaired), std::nullopt, stack(paired, &Prepared::person),
                                          extractor, "unpaired"));
    }
    json j = json::array();
    for (const auto& r : reports) {
        j.push_back(r.to_json());
        append_jsonl(out / "eval.jsonl", r.to_json());
    }
    write_text(out / "eval.json", json{{"reports", j}}.dump(2) + "\n");
    write_text(out / "eval.md", render_markdown_table(reports));
    write_text(out / "eval.csv", render_csv_table(reports));
    return reports;
}

json Table::to_json() const { return {{"title", title}, {"columns", columns}, {"rows", rows}}; }

std::string Table::markdown() const {
    std::ostringstream os;
    if (!title.empty()) os << "### " << title << "\n\n";
    os << "|";
    for (const auto& c : columns) os << " " << c << " |";
    os << "\n|";
    for (size_t i = 0; i < columns.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& r : rows) {
        os << "|";
        for (const auto& v : r) os << " " << v << " |";
        os << "\n";
    }
    return os.str();
}

std::string Table::csv() const {
    std::ostringstream os;
    for (size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << "\n";
    for (const auto& r : rows) {
        for (size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << "\n";
    }
    return os.str();
}

Ablation parse_ablation(const std::string& s) {
    if (s == "attention") return Ablation::attention;
    if (s == "noise") return Ablation::noise;
    if (s == "threshold") return Ablation::threshold;
    if (s == "postproc") return Ablation::postproc;
    if (s == "ddim") return Ablation::ddim;
    if (s == "conditions") return Ablation::conditions;
    throw ConfigError("unknown ablation '" + s + "' (attention, noise, threshold, postproc, ddim, conditions)");
}

std::string to_string(Ablation a) {
    switch (a) {
    case Ablation::attention: return "attention";
    case Ablation::noise: return "noise";
    case Ablation::threshold: return "threshold";
    case Ablation::postproc: return "postproc";
    case Ablation::ddim: return "ddim";
    case Ablation::conditions: return "conditions";
    }
    return "?";
}

torch::Tensor perturbed_prediction(const torch::Tensor& parse7_labels, uint64_t seed, double strength) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 7);
    std::uniform_int_distribution<int> coin(0, 2);
    const int max_shift = static_cast<int>(std::lround(2.0 * strength));
    std::uniform_int_distribution<int> shift(-max_shift, max_shift);
    auto out = torch::zeros_like(parse7_labels);
    for (int64_t c = 1; c < parse7::count; ++c) {
        auto m = (parse7_labels == c).to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
        const int op = coin(rng);
        if (op == 1) m = torch::max_pool2d(m, 3, 1, 1);
        if (op == 2) m = -torch::max_pool2d(-m, 3, 1, 1);
        const int dx = shift(rng), dy = shift(rng);
        m = torch::roll(m, {dy, dx}, {2, 3});
        out.masked_fill_(m.squeeze(0).squeeze(0) > 0.5, c);
    }
    return out;
}

std::vector<double> threshold_sweep_rates(const std::vector<torch::Tensor>& pred7, const std::vector<torch::Tensor>& ref9,
                                          const std::vector<double>& thresholds) {
    std::vector<PartMasks> pm, rm;
    for (size_t i = 0; i < pred7.size(); ++i) {
        pm.push_back(PartMasks::from_parse7(pred7[i]));
        rm.push_back(PartMasks::from_parsing(ref9[i]));
    }
    std::vector<double> rates;
    for (double t : thresholds) {
        PostprocOptions o{t, t >= 1.0};
        std::vector<PartOverlapReport> reports;
        for (size_t i = 0; i < pm.size(); ++i) reports.push_back(overlap_report(pm[i], rm[i], o));
        rates.push_back(applying_rate(reports));
    }
    return rates;
}

Table threshold_sweep(const std::vector<torch::Tensor>& pred7, const std::vector<torch::Tensor>& ref9,
                      const std::vector<double>& thresholds) {
    Table t;
    t.title = "Overlap ratio threshold";
    t.columns = {"R_overlap", "AR(%)"};
    const auto rates = threshold_sweep_rates(pred7, ref9, thresholds);
    for (size_t i = 0; i < thresholds.size(); ++i) {
        t.rows.push_back({thresholds[i] >= 1.0 ? "= 1" : "> " + num(thresholds[i], 2), num(rates[i], 2)});
    }
    return t;
}

namespace {

struct TrainedPair {
    fs::path warp, tryon;
};

TrainedPair obtain_models(const PipelineConfig& cfg, const fs::path& dir, const AblateOptions& opt) {
    TrainedPair p;
    TrainOptions to;
    to.progress = opt.progress;
    to.steps = opt.train_steps;
    if (opt.warp_checkpoint) {
        p.warp = *opt.warp_checkpoint;
    } else {
        p.warp = cmd_train_warp(cfg, dir / "warp", to).checkpoint;
    }
    if (opt.tryon_checkpoint) {
        p.tryon = *opt.tryon_checkpoint;
    } else {
        to.warp_checkpoint = p.warp;
        p.tryon = cmd_train_tryon(cfg, dir / "tryon", to).checkpoint;
    }
    return p;
}

std::vector<Prepared> eval_set(const PipelineConfig& cfg, const AblateOptions& opt) {
    auto samples = load_split(cfg, Split::test, Pairing::paired);
    if (opt.images && static_cast<int64_t>(samples.size()) > *opt.images) samples.resize(static_cast<size_t>(*opt.images));
    return prepare_all(samples);
}

struct RunStats {
    torch::Tensor outputs;
    std::vector<PartOverlapReport> reports;
};

RunStats run_set(Models& models, const std::vector<Prepared>& prep, const InferOptions& io, int64_t batch) {
    RunStats s;
    std::vector<torch::Tensor> outs;
    for (const auto& b : chunk(prep, batch)) {
        for (auto& r : infer(models, b, io)) {
            outs.push_back(r.output);
            s.reports.push_back(r.report);
        }
    }
    s.outputs = torch::stack(outs);
    return s;
}

double mark_l1(const torch::Tensor& outputs, const std::vector<Prepared>& prep) {
    return masked_l1(outputs, stack(prep, &Prepared::person), stack(prep, &Prepared::mark_mask));
}

} // namespace

Table cmd_ablate(const PipelineConfig& cfg, const fs::path& out, Ablation which, const AblateOptions& opt) {
    cfg.validate();
    fs::create_directories(out);
    Table t;
    auto extractor = make_perceptual_net(cfg);
    const auto work = out / ("ablate_" + to_string(which));

    switch (which) {
    case Ablation::attention: {
        t.title = "Cross-attention in the warping module";
        t.columns = {"Variant", "nParam(M)", "Params", "Warped L1 (test)", "Parsing acc (test)"};
        const auto test = eval_set(cfg, opt);
        for (bool attn : {false, true}) {
            auto c = cfg;
            c.warp.use_attention = attn;
            TrainOptions to;
            to.steps = opt.train_steps;
            to.progress = opt.progress;
            const auto tr = cmd_train_warp(c, work / (attn ? "with" : "without"), to);
            torch::manual_seed(c.seed);
            WarpNet net(warp_net_config(c), c.data.height);
            load_checkpoint(tr.checkpoint).load_module("warp.", *net);
            const auto w = run_warp(net, test);
            const auto b = make_warp_batch(test);
            const double l1 = l1_warp(w.warped, b.targets.gt, b.targets.cloth_mask).item<double>();
            const double acc = (w.pred_labels == b.targets.parse7).to(torch::kFloat64).mean().item<double>();
            const auto params = count_parameters(*net);
            t.rows.push_back({attn ? "with cross-attention" : "without cross-attention",
                              num(static_cast<double>(params) / 1e6, 3), std::to_string(params), num(l1), num(acc)});
        }
        break;
    }
    case Ablation::noise: {
        t.title = "Noise level";
        t.columns = {"alpha_n", "Post-processing", "SSIM", "LPIPS", "L1", "FID", "Mark L1"};
        const auto test = eval_set(cfg, opt);
        const auto gts = stack_gt(test);
        TrainOptions to;
        to.steps = opt.train_steps;
        to.progress = opt.progress;
        const fs::path warp_ckpt =
            opt.warp_checkpoint ? *opt.warp_checkpoint : cmd_train_warp(cfg, work / "warp", to).checkpoint;
        for (double a : opt.noise_levels) {
            auto c = cfg;
            c.tryon.alpha_n = a;
            auto to2 = to;
            to2.warp_checkpoint = warp_ckpt;
            const auto tr = cmd_train_tryon(c, work / ("alpha_" + num(a, 1)), to2);
            auto models = load_models(c, warp_ckpt, tr.checkpoint, c.tryon.ema.has_value());
            for (bool post : {false, true}) {
                auto io = infer_options(c);
                io.unconditional_post = post;
                io.conditional_post = post;
                const auto rs = run_set(models, test, io, c.eval.batch_size);
                const auto r = evaluate_images("ours", rs.outputs, gts, gts, extractor, "paired");
                t.rows.push_back({num(a, 0), post ? "yes" : "no", num(*r.ssim), num(*r.lpips), num(*r.l1), num(r.fid),
                                  num(mark_l1(rs.outputs, test))});
            }
        }
        break;
    }
    case Ablation::threshold: {
        auto c = cfg;
        if (!opt.images) c.data.test_count = 200;
        auto samples = load_split(c, Split::test, Pairing::paired);
        if (opt.images && static_cast<int64_t>(samples.size()) > *opt.images) {
            samples.resize(static_cast<size_t>(*opt.images));
        }
        const auto prep = prepare_all(samples);
        std::vector<torch::Tensor> pred, ref;
        std::optional<WarpResult> w;
        if (opt.warp_checkpoint) {
            torch::manual_seed(c.seed);
            WarpNet net(warp_net_config(c), c.data.height);
            load_checkpoint(*opt.warp_checkpoint).load_module("warp.", *net);
            w = run_warp(net, prep);
        }
        for (size_t i = 0; i < prep.size(); ++i) {
            pred.push_back(w ? w->pred_labels[static_cast<int64_t>(i)]
                             : perturbed_prediction(prep[i].parse7, c.seed * 7919 + i, 0.5 * static_cast<double>(i % 5)));
            ref.push_back(prep[i].parsing);
        }
        t = threshold_sweep(pred, ref, opt.thresholds);
        break;
    }
    case Ablation::postproc: {
        t.title = "Plug-and-play post-processing";
        t.columns = {"Method", "Plug-in", "SSIM", "L1", "Mark L1", "AR(%)"};
        const auto test = eval_set(cfg, opt);
        const auto gts = stack_gt(test);
        const auto persons = stack(test, &Prepared::person);
        const auto pair = obtain_models(cfg, work, opt);
        auto models = load_models(cfg, pair.warp, pair.tryon, cfg.tryon.ema.has_value());
        auto io = infer_options(cfg);
        io.conditional_post = false;
        const auto base = run_set(models, test, io, cfg.eval.batch_size);

        torch::manual_seed(cfg.seed + 5);
        TryOnUNet ddim_net(ddim_variant(unet_config(cfg)), cfg.data.height);
        {
            torch::optim::Adam dopt(ddim_net->parameters(), torch::optim::AdamOptions(cfg.ddim.lr));
            const auto train = prepare_all(load_split(cfg, Split::train, Pairing::paired));
            const auto tb = make_tryon_batch(train, oracle_warp(train), *models.encoder);
            const auto schedule = DiffusionSchedule::linear(cfg.ddim.timesteps, cfg.ddim.beta_start, cfg.ddim.beta_end);
            auto gen = make_generator(cfg.seed, 77);
            for (int64_t s = 0; s < opt.train_steps.value_or(cfg.ddim.train_steps); ++s) {
                ddim_train_step(ddim_net, dopt, tb.gt, torch::cat({tb.condition, tb.densepose}, 1), tb.embedding,
                                schedule, gen);
            }
        }
        const auto schedule = DiffusionSchedule::linear(cfg.ddim.timesteps, cfg.ddim.beta_start, cfg.ddim.beta_end);
        std::vector<torch::Tensor> ddim_outs;
        for (const auto& b : chunk(test, cfg.eval.batch_size)) {
            for (auto& r : infer_ddim(models, ddim_net, schedule, 10, b, io)) ddim_outs.push_back(r.output);
        }
        const std::vector<std::pair<std::string, torch::Tensor>> externals{{"single-step w/o post", base.outputs},
                                                                          {"DDIM* (10 steps)", torch::stack(ddim_outs)}};
        const PostprocOptions po{cfg.postproc.threshold, cfg.postproc.equality_mode};
        for (const auto& [name, images] : externals) {
            auto before = evaluate_images(name, images, gts, gts, extractor, "paired");
            t.rows.push_back({name, "no", num(*before.ssim), num(*before.l1), num(mark_l1(images, test)), "-"});
            std::vector<torch::Tensor> fixed;
            std::vector<PartOverlapReport> reports;
            const auto w = run_warp(models.warp, test);
            for (size_t i = 0; i < test.size(); ++i) {
                const auto idx = static_cast<int64_t>(i);
                auto c = conditional_post(images[idx], persons[idx], PartMasks::from_parse7(w.pred_labels[idx]),
                                          PartMasks::from_parsing(test[i].parsing), po);
                fixed.push_back(c.image);
                reports.push_back(c.report);
            }
            auto fx = torch::stack(fixed);
            auto after = evaluate_images(name, fx, gts, gts, extractor, "paired");
            t.rows.push_back({name, "yes", num(*after.ssim), num(*after.l1), num(mark_l1(fx, test)),
                              num(applying_rate(reports), 2)});
        }
        break;
    }
    case Ablation::ddim: {
        t.title = "Single-step vs multi-step sampling";
        t.columns = {"Method", "Steps", "SSIM", "L1", "T(s)/batch"};
        const auto test = eval_set(cfg, opt);
        const auto gts = stack_gt(test);
        const auto pair = obtain_models(cfg, work, opt);
        auto models = load_models(cfg, pair.warp, pair.tryon, cfg.tryon.ema.has_value());
        const auto io = infer_options(cfg);
        const auto batches = chunk(test, cfg.eval.batch_size);
        std::vector<int64_t> sizes;
        for (const auto& b : batches) sizes.push_back(static_cast<int64_t>(b.size()));
        {
            const auto rs = run_set(models, test, io, cfg.eval.batch_size);
            const auto r = evaluate_images("ours", rs.outputs, gts, gts, extractor, "paired");
            const auto tm = timing_bench([&](size_t i) { infer(models, batches[i], io); }, sizes,
                                         cfg.eval.batch_size, 1);
            t.rows.push_back({"single-step", "1", num(*r.ssim), num(*r.l1), num(tm.mean_per_batch, 3)});
        }
        torch::manual_seed(cfg.seed + 5);
        TryOnUNet ddim_net(ddim_variant(unet_config(cfg)), cfg.data.height);
        const auto schedule = DiffusionSchedule::linear(cfg.ddim.timesteps, cfg.ddim.beta_start, cfg.ddim.beta_end);
        {
            torch::optim::Adam dopt(ddim_net->parameters(), torch::optim::AdamOptions(cfg.ddim.lr));
            const auto train = prepare_all(load_split(cfg, Split::train, Pairing::paired));
            const auto tb = make_tryon_batch(train, oracle_warp(train), *models.encoder);
            auto gen = make_generator(cfg.seed, 77);
            for (int64_t s = 0; s < opt.train_steps.value_or(cfg.ddim.train_steps); ++s) {
                ddim_train_step(ddim_net, dopt, tb.gt, torch::cat({tb.condition, tb.densepose}, 1), tb.embedding,
                                schedule, gen);
            }
        }
        for (auto steps : cfg.ddim.bench_steps) {
            std::vector<torch::Tensor> outs;
            for (const auto& b : batches) {
                for (auto& r : infer_ddim(models, ddim_net, schedule, steps, b, io)) outs.push_back(r.output);
            }
            const auto r = evaluate_images("ddim", torch::stack(outs), gts, gts, extractor, "paired");
            const auto tm = timing_bench([&](size_t i) { infer_ddim(models, ddim_net, schedule, steps, batches[i], io); },
                                         sizes, cfg.eval.batch_size, 1);
            t.rows.push_back({"DDIM*", std::to_string(steps), num(*r.ssim), num(*r.l1), num(tm.mean_per_batch, 3)});
        }
        break;
    }
    case Ablation::conditions: {
        t.title = "Conditions";
        t.columns = {"Variant", "SSIM", "LPIPS", "L1", "FID", "KIDx100"};
        const auto test = eval_set(cfg, opt);
        const auto gts = stack_gt(test);
        const auto pair = obtain_models(cfg, work, opt);
        auto models = load_models(cfg, pair.warp, pair.tryon, cfg.tryon.ema.has_value());
        struct Variant {
            std::string name;
            std::function<void(InferOptions&)> apply;
        };
        const std::vector<Variant> variants{
            {"full", [](InferOptions&) {}},
            {"w/o unconditional post-processing", [](InferOptions& o) { o.unconditional_post = false; }},
            {"w/o noise condition image", [](InferOptions& o) { o.pure_noise = true; }},
            {"w/o global condition", [](InferOptions& o) { o.zero_embedding = true; }},
            {"w/o dense pose condition", [](InferOptions& o) { o.zero_densepose = true; }}};
        for (const auto& v : variants) {
            auto io = infer_options(cfg);
            v.apply(io);
            const auto rs = run_set(models, test, io, cfg.eval.batch_size);
            const auto r = evaluate_images(v.name, rs.outputs, gts, gts, extractor, "paired");
            t.rows.push_back({v.name, num(*r.ssim), num(*r.lpips), num(*r.l1), num(r.fid), num(r.kid * 100.0)});
        }
        break;
    }
    }
    const auto stem = out / ("ablate_" + to_string(which));
    write_text(stem.string() + ".json", t.to_json().dump(2) + "\n");
    write_text(stem.string() + ".md", t.markdown());
    write_text(stem.string() + ".csv", t.csv());
    append_jsonl(out / "ablate.jsonl", t.to_json());
    return t;
}

BenchResult cmd_bench(const PipelineConfig& cfg, const fs::path& out, const BenchOptions& opt) {
    cfg.validate();
    fs::create_directories(out);
    auto c = cfg;
    c.data.height = cfg.eval.bench_height;
    c.data.width = cfg.eval.bench_width;
    // attention stays on the same pyramid levels, so the bench nets are the trained nets run larger
    if (cfg.eval.bench_height % cfg.data.height == 0) {
        const int64_t f = cfg.eval.bench_height / cfg.data.height;
        for (auto& r : c.warp.attention_resolutions) r *= f;
        for (auto& r : c.tryon.attention_resolutions) r *= f;
    }
    c.validate();
    BenchResult res;
    auto models = build_models(c);
    res.weights = "seeded";
    if (opt.warp_checkpoint && opt.tryon_checkpoint) {
        try {
            models = load_models(c, *opt.warp_checkpoint, *opt.tryon_checkpoint, c.tryon.ema.has_value());
            res.weights = "checkpoint";
        } catch (const DataError& e) {
            note(opt.progress, std::string("bench: checkpoints do not fit the bench architecture (") + e.what() +
                                   "); timing seeded weights");
        }
    }
    torch::manual_seed(c.seed + 5);
    TryOnUNet ddim_net(ddim_variant(unet_config(c)), c.data.height);
    const auto schedule = DiffusionSchedule::linear(c.ddim.timesteps, c.ddim.beta_start, c.ddim.beta_end);

    auto samples = load_split(c, Split::test, Pairing::paired);
    const int64_t images = opt.images.value_or(c.eval.batch_size);
    if (static_cast<int64_t>(samples.size()) > images) samples.resize(static_cast<size_t>(images));
    const auto prep = prepare_all(samples);
    const auto batches = chunk(prep, c.eval.batch_size);
    std::vector<int64_t> sizes;
    for (const auto& b : batches) sizes.push_back(static_cast<int64_t>(b.size()));
    const int64_t repeats = opt.repeats.value_or(c.eval.repeats);
    const auto io = infer_options(c);

    models.unet->reset_forward_count();
    infer(models, batches.front(), io);
    res.single_step_forwards_per_image = models.unet->forward_count();
    note(opt.progress, "bench: single-step");
    res.single_step = timing_bench([&](size_t i) { infer(models, batches[i], io); }, sizes, c.eval.batch_size, repeats);
    for (auto steps : opt.steps.value_or(c.ddim.bench_steps)) {
        note(opt.progress, "bench: ddim " + std::to_string(steps) + " steps");
        res.ddim[steps] = timing_bench([&](size_t i) { infer_ddim(models, ddim_net, schedule, steps, batches[i], io); },
                                       sizes, c.eval.batch_size, repeats);
    }
    res.table.title = "Inference time (" + std::to_string(c.data.height) + "x" + std::to_string(c.data.width) +
                      ", batch " + std::to_string(c.eval.batch_size) + ", repeats " + std::to_string(repeats) + ")";
    res.table.columns = {"Method", "Steps", "Mean s/batch", "Std s/batch", "s/image", "Slowdown vs single-step"};
    res.table.rows.push_back({"single-step", "1", num(res.single_step.mean_per_batch), num(res.single_step.std_per_batch),
                              num(res.single_step.mean_per_image), "1.00"});
    for (const auto& [steps, ts] : res.ddim) {
        res.table.rows.push_back({"DDIM*", std::to_string(steps), num(ts.mean_per_batch), num(ts.std_per_batch),
                                  num(ts.mean_per_image), num(ts.mean_per_batch / res.single_step.mean_per_batch, 2)});
    }
    json j{{"weights", res.weights},
           {"height", c.data.height},
           {"width", c.data.width},
           {"batch", c.eval.batch_size},
           {"repeats", repeats},
           {"images", images},
           {"single_step", res.single_step.to_json()},
           {"generator_forwards_per_batch", res.single_step_forwards_per_image},
           {"ddim", json::object()}};
    for (const auto& [steps, ts] : res.ddim) j["ddim"][std::to_string(steps)] = ts.to_json();
    write_text(out / "bench.json", j.dump(2) + "\n");
    write_text(out / "bench.md", res.table.markdown());
    write_text(out / "bench.csv", res.table.csv());
    append_jsonl(out / "bench.jsonl", j);
    return res;
}

ConditionalResult cmd_plugin(const fs::path& out, const PluginOptions& opt) {
    const auto image = load_image(opt.image);
    const auto person = load_image(opt.person);
    const auto pred = load_label_map(opt.pred_parsing);
    const auto ref = load_label_map(opt.ref_parsing);
    if (image.sizes() != person.sizes() || pred.sizes() != ref.sizes() || pred.size(0) != image.size(1) ||
        pred.size(1) != image.size(2)) {
        throw DataError("plugin inputs differ in size");
    }
    auto r = plugin_post(image, person, pred, ref, PostprocOptions{opt.threshold, opt.equality_mode});
    fs::create_directories(out);
    save_image(out / "plugin.png", r.image);
    auto j = r.report.to_json();
    j["applying_rate"] = applying_rate({r.report});
    write_text(out / "plugin.json", j.dump(2) + "\n");
    return r;
}

void cmd_gen_data(const PipelineConfig& cfg, const fs::path& root) {
    auto c = cfg;
    c.data.source = "synthetic";
    write_dataset(root, Split::train, load_split(c, Split::train, Pairing::paired));
    write_dataset(root, Split::test, load_split(c, Split::test, Pairing::paired));
}

} // namespace vton
