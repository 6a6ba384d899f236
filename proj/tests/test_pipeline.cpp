#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vton/types.hpp"
#include "vton/commands.hpp"
#include "vton/image_io.hpp"
#include "vton/metrics.hpp"

using namespace vton;

namespace {

PipelineConfig small_config() {
    auto c = preset("desk-64");
    c.data.train_count = 2;
    c.data.test_count = 2;
    c.warp.steps = 3;
    c.warp.batch_size = 2;
    c.tryon.steps = 3;
    c.tryon.batch_size = 2;
    c.eval.repeats = 1;
    c.eval.batch_size = 2;
    c.log.every = 1;
    return c;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("vton_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Seeded untrained checkpoints are enough for the mechanics tested here.
std::pair<fs::path, fs::path> seeded_checkpoints(const PipelineConfig& cfg, const fs::path& dir) {
    auto models = build_models(cfg);
    save_models(cfg, models, dir / "warp.ckpt", dir / "tryon.ckpt");
    return {dir / "warp.ckpt", dir / "tryon.ckpt"};
}

} // namespace

TEST(pipeline, prepared_sample_shapes) {
    auto p = prepare(gen_sample(0, {64, 48}, GarmentType::upper));
    EXPECT_EQ(p.person_input.size(0), 16);
    EXPECT_EQ(p.heatmaps.size(0), 10);
    EXPECT_TRUE(p.gt.has_value());
    EXPECT_EQ(p.preserved.scalar_type(), torch::kBool);
}

TEST(pipeline, infer_keeps_preserved_pixels_and_is_deterministic) {
    auto cfg = small_config();
    auto models = build_models(cfg);
    auto prep = prepare_all(load_split(cfg, Split::test, Pairing::paired));
    auto opt = infer_options(cfg);
    auto a = infer(models, prep, opt);
    auto b = infer(models, prep, opt);
    ASSERT_EQ(a.size(), prep.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].output.sizes(), prep[i].person.sizes());
        EXPECT_TRUE(torch::equal(a[i].output, b[i].output));
        auto m = prep[i].preserved.unsqueeze(0).expand_as(a[i].output);
        EXPECT_TRUE(torch::equal(a[i].output.masked_select(m), prep[i].person.masked_select(m)));
    }
}

TEST(pipeline, identity_marks_survive_with_exact_masks) {
    auto cfg = small_config();
    auto models = build_models(cfg);
    auto prep = prepare_all(load_split(cfg, Split::test, Pairing::paired));
    auto opt = infer_options(cfg);
    opt.exact_masks = true;
    auto on = infer(models, prep, opt);
    opt.conditional_post = false;
    opt.unconditional_post = false;
    auto off = infer(models, prep, opt);
    double off_l1 = 0.0;
    for (size_t i = 0; i < prep.size(); ++i) {
        auto m = prep[i].mark_mask;
        ASSERT_GT(m.sum().item<int64_t>(), 0);
        auto mm = m.unsqueeze(0).expand_as(on[i].output);
        EXPECT_TRUE(torch::equal(on[i].output.masked_select(mm), prep[i].person.masked_select(mm)));
        off_l1 += masked_l1(off[i].output, prep[i].person, m);
    }
    EXPECT_GT(off_l1, 0.0);
}

TEST(pipeline, condition_ablations_change_the_output) {
    auto cfg = small_config();
    auto models = build_models(cfg);
    {
        torch::NoGradGuard g;
        for (auto& p : models.unet->parameters()) p.add_(torch::randn_like(p) * 0.05);
    }
    auto prep = prepare_all(load_split(cfg, Split::test, Pairing::paired));
    auto base = infer(models, prep, infer_options(cfg));
    auto opt = infer_options(cfg);
    opt.zero_densepose = true;
    auto ablated = infer(models, prep, opt);
    EXPECT_FALSE(torch::equal(base[0].raw, ablated[0].raw));
}

TEST(commands, configured_steps) {
    EXPECT_EQ(configured_steps(50, 10, 4, 8), 50);
    EXPECT_EQ(configured_steps(0, 10, 4, 8), 20);
    EXPECT_EQ(configured_steps(0, 3, 4, 6), 6);
}

TEST(commands, train_warp_resume_reproduces_losses) {
    auto cfg = small_config();
    auto dir = scratch("resume");
    TrainOptions full_run;
    full_run.steps = 4;
    auto full = cmd_train_warp(cfg, dir / "full", full_run);
    ASSERT_EQ(full.losses.size(), 4u);

    TrainOptions first;
    first.steps = 2;
    auto head = cmd_train_warp(cfg, dir / "split", first);
    TrainOptions second;
    second.steps = 4;
    second.resume = head.checkpoint;
    auto tail = cmd_train_warp(cfg, dir / "split", second);
    ASSERT_EQ(tail.losses.size(), 2u);
    EXPECT_NEAR(head.losses[0], full.losses[0], 1e-6);
    EXPECT_NEAR(head.losses[1], full.losses[1], 1e-6);
    EXPECT_NEAR(tail.losses[0], full.losses[2], 1e-4 * std::abs(full.losses[2]));
    EXPECT_NEAR(tail.losses[1], full.losses[3], 1e-4 * std::abs(full.losses[3]));
    EXPECT_TRUE(fs::exists(dir / "full" / "warp_train.jsonl"));
}

TEST(commands, train_tryon_writes_ema_checkpoint) {
    auto cfg = small_config();
    auto dir = scratch("tryon");
    auto r = cmd_train_tryon(cfg, dir);
    EXPECT_EQ(r.steps, 3);
    auto ck = load_checkpoint(r.checkpoint);
    EXPECT_TRUE(ck.has_prefix("ema."));
    EXPECT_TRUE(ck.has_prefix("unet."));
    EXPECT_EQ(ck.meta["step"], 3);
    EXPECT_TRUE(std::isfinite(r.final_metric));
}

TEST(commands, infer_twice_is_byte_identical) {
    auto cfg = small_config();
    auto dir = scratch("infer");
    auto [w, t] = seeded_checkpoints(cfg, dir);
    InferCommandOptions o{w, t};
    auto a = cmd_infer(cfg, dir / "a", o);
    auto b = cmd_infer(cfg, dir / "b", o);
    ASSERT_EQ(a.size(), 2u);
    for (const auto& r : a) {
        const auto png = fs::path("images") / (r.name + ".png");
        EXPECT_EQ(slurp(dir / "a" / png), slurp(dir / "b" / png));
        EXPECT_TRUE(fs::exists(dir / "a" / "reports" / (r.name + ".json")));
    }
    EXPECT_TRUE(fs::exists(dir / "a" / "contact_sheet.png"));
    o.pairing = Pairing::unpaired;
    EXPECT_EQ(cmd_infer(cfg, dir / "u", o).size(), 2u);
}

TEST(commands, missing_checkpoint_is_data_error) {
    auto cfg = small_config();
    InferCommandOptions o{"/nonexistent/w.ckpt", "/nonexistent/t.ckpt"};
    EXPECT_THROW(cmd_infer(cfg, scratch("missing"), o), DataError);
}

TEST(commands, eval_self_check) {
    auto cfg = small_config();
    auto dir = scratch("eval");
    auto reports = cmd_eval(cfg, dir, EvalCommandOptions{{}, {}, true});
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_NEAR(*reports[0].ssim, 1.0, 1e-9);
    EXPECT_EQ(*reports[0].l1, 0.0);
    EXPECT_NEAR(reports[0].fid, 0.0, 1e-6);
    EXPECT_FALSE(reports[1].ssim.has_value());
    auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
    EXPECT_EQ(j["reports"].size(), 2u);
    EXPECT_TRUE(fs::exists(dir / "eval.md"));
    EXPECT_TRUE(fs::exists(dir / "eval.csv"));
}

TEST(commands, eval_with_models_reports_timing) {
    auto cfg = small_config();
    auto dir = scratch("eval_models");
    auto [w, t] = seeded_checkpoints(cfg, dir);
    auto reports = cmd_eval(cfg, dir, EvalCommandOptions{w, t, false});
    ASSERT_TRUE(reports[0].timing.has_value());
    EXPECT_EQ(reports[0].timing->repeats, 1);
    EXPECT_EQ(reports[0].timing->batch, 2);
}

TEST(commands, plugin_writes_image_and_report) {
    auto dir = scratch("plugin");
    auto s = gen_sample(5, {64, 48}, GarmentType::upper);
    save_image(dir / "person.png", s.person);
    save_image(dir / "ext.png", torch::zeros_like(s.person));
    save_label_map(dir / "pred.png", s.parsing);
    save_label_map(dir / "ref.png", s.parsing);
    PluginOptions o{dir / "ext.png", dir / "person.png", dir / "pred.png", dir / "ref.png"};
    auto r = cmd_plugin(dir / "out", o);
    EXPECT_TRUE(r.report.any_applied());
    EXPECT_TRUE(fs::exists(dir / "out" / "plugin.png"));
    EXPECT_TRUE(fs::exists(dir / "out" / "plugin.json"));
}

TEST(commands, ablation_names) {
    for (auto a : {Ablation::attention, Ablation::noise, Ablation::threshold, Ablation::postproc, Ablation::ddim,
                   Ablation::conditions}) {
        EXPECT_EQ(parse_ablation(to_string(a)), a);
    }
    EXPECT_THROW(parse_ablation("bogus"), ConfigError);
}

TEST(commands, attention_ablation_reports_parameter_counts) {
    auto cfg = small_config();
    AblateOptions o;
    o.train_steps = 1;
    auto t = cmd_ablate(cfg, scratch("abl_attn"), Ablation::attention, o);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_NE(t.rows[0], t.rows[1]);
}

TEST(commands, bench_reports_metadata) {
    auto cfg = small_config();
    cfg.eval.bench_height = 64;
    cfg.eval.bench_width = 48;
    cfg.ddim.train_steps = 1;
    BenchOptions o;
    o.steps = std::vector<int64_t>{1, 5};
    o.repeats = 1;
    o.images = 2;
    auto r = cmd_bench(cfg, scratch("bench"), o);
    EXPECT_EQ(r.single_step_forwards_per_image, 1);
    EXPECT_EQ(r.weights, "seeded");
    EXPECT_EQ(r.single_step.repeats, 1);
    EXPECT_LT(r.ddim.at(1).mean_per_pass, r.ddim.at(5).mean_per_pass);
}

#ifdef VTON_CLI_PATH
namespace {
int run_cli(const std::string& args) {
    const int rc = std::system((std::string(VTON_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
} // namespace

TEST(cli, exit_codes) {
    auto dir = scratch("cli");
    EXPECT_EQ(run_cli("eval --self-check --out " + (dir / "ok").string()), 0);
    EXPECT_EQ(run_cli("eval --self-check --preset nope"), 2);
    EXPECT_EQ(run_cli("eval --self-check --device gpu"), 2);
    EXPECT_EQ(run_cli("bogus-command"), 2);
    EXPECT_EQ(run_cli("infer --warp-checkpoint /nonexistent --tryon-checkpoint /nonexistent --out " + (dir / "x").string()), 3);
    std::ofstream(dir / "bad.json") << R"({"warp": {"sek": 1}})";
    EXPECT_EQ(run_cli("eval --self-check --config " + (dir / "bad.json").string()), 2);
}
#endif
