#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vton/commands.hpp"

using namespace vton;

namespace {

struct Common {
    std::optional<std::string> config_file;
    std::optional<std::string> preset_name;
    std::optional<uint64_t> seed;
    std::optional<std::string> device;
    std::string out = "runs";

    void add_to(CLI::App* app) {
        app->add_option("--config", config_file, "JSON config file (merged over the preset)");
        app->add_option("--preset", preset_name, "Preset name: viton-hd-256, viton-hd-512, dresscode-512, desk-64");
        app->add_option("--seed", seed, "Global seed");
        app->add_option("--device", device, "Device (cpu)");
        app->add_option("--out", out, "Output directory");
    }

    PipelineConfig load() const {
        auto cfg = load_config(preset_name, config_file ? std::optional<fs::path>(*config_file) : std::nullopt,
                               environment_overrides());
        if (seed) cfg.seed = *seed;
        if (device) cfg.device = *device;
        if (cfg.device != "cpu") throw ConfigError("only the cpu device is supported, got '" + cfg.device + "'");
        cfg.validate();
        return cfg;
    }
};

Pairing parse_pairing(const std::string& s) {
    if (s == "paired") return Pairing::paired;
    if (s == "unpaired") return Pairing::unpaired;
    throw ConfigError("pairing must be 'paired' or 'unpaired', got '" + s + "'");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ConfigError("split must be 'train' or 'test', got '" + s + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-step virtual try-on pipeline"};
    app.require_subcommand(1);

    Common c_warp, c_tryon, c_infer, c_eval, c_ablate, c_bench, c_gen;

    auto* train_warp = app.add_subcommand("train-warp", "Train the garment warping module");
    c_warp.add_to(train_warp);
    std::optional<std::string> warp_resume;
    std::optional<int64_t> warp_steps;
    train_warp->add_option("--resume", warp_resume, "Checkpoint to resume from");
    train_warp->add_option("--steps", warp_steps, "Override the number of steps");

    auto* train_tryon = app.add_subcommand("train-tryon", "Train the try-on generator");
    c_tryon.add_to(train_tryon);
    std::optional<std::string> tryon_resume, tryon_warp;
    std::optional<int64_t> tryon_steps;
    train_tryon->add_option("--resume", tryon_resume, "Checkpoint to resume from");
    train_tryon->add_option("--steps", tryon_steps, "Override the number of steps");
    train_tryon->add_option("--warp-checkpoint", tryon_warp, "Warp checkpoint (ground-truth warp when omitted)");

    auto* infer_cmd = app.add_subcommand("infer", "Run single-step inference");
    c_infer.add_to(infer_cmd);
    InferCommandOptions infer_opt;
    std::string infer_split = "test", infer_pairing = "paired";
    std::optional<int64_t> infer_limit;
    infer_cmd->add_option("--warp-checkpoint", infer_opt.warp_checkpoint)->required();
    infer_cmd->add_option("--tryon-checkpoint", infer_opt.tryon_checkpoint)->required();
    infer_cmd->add_option("--split", infer_split);
    infer_cmd->add_option("--pairing", infer_pairing);
    infer_cmd->add_option("--limit", infer_limit);
    infer_cmd->add_flag("--exact-masks", infer_opt.exact_masks, "Use reference parsing as the prediction");

    auto* eval_cmd = app.add_subcommand("eval", "Paired and unpaired evaluation");
    c_eval.add_to(eval_cmd);
    EvalCommandOptions eval_opt;
    eval_cmd->add_option("--warp-checkpoint", eval_opt.warp_checkpoint);
    eval_cmd->add_option("--tryon-checkpoint", eval_opt.tryon_checkpoint);
    eval_cmd->add_flag("--self-check", eval_opt.self_check, "Evaluate ground truth against itself");

    auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation sweep");
    c_ablate.add_to(ablate_cmd);
    std::string which;
    AblateOptions ablate_opt;
    std::optional<std::string> ab_warp, ab_tryon;
    ablate_cmd->add_option("which", which, "attention | noise | threshold | postproc | ddim | conditions")->required();
    ablate_cmd->add_option("--warp-checkpoint", ab_warp);
    ablate_cmd->add_option("--tryon-checkpoint", ab_tryon);
    ablate_cmd->add_option("--train-steps", ablate_opt.train_steps);
    ablate_cmd->add_option("--images", ablate_opt.images);
    ablate_cmd->add_option("--thresholds", ablate_opt.thresholds);
    ablate_cmd->add_option("--noise-levels", ablate_opt.noise_levels);

    auto* bench_cmd = app.add_subcommand("bench", "Time single-step inference against multi-step sampling");
    c_bench.add_to(bench_cmd);
    BenchOptions bench_opt;
    std::optional<std::string> b_warp, b_tryon;
    std::vector<int64_t> b_steps;
    bench_cmd->add_option("--warp-checkpoint", b_warp);
    bench_cmd->add_option("--tryon-checkpoint", b_tryon);
    bench_cmd->add_option("--steps", b_steps);
    bench_cmd->add_option("--images", bench_opt.images);
    bench_cmd->add_option("--repeats", bench_opt.repeats);

    auto* plugin_cmd = app.add_subcommand("plugin", "Conditional post-processing of an external result");
    PluginOptions plugin_opt;
    std::string plugin_out = "runs";
    plugin_cmd->add_option("--image", plugin_opt.image)->required();
    plugin_cmd->add_option("--person", plugin_opt.person)->required();
    plugin_cmd->add_option("--pred-parsing", plugin_opt.pred_parsing)->required();
    plugin_cmd->add_option("--ref-parsing", plugin_opt.ref_parsing)->required();
    plugin_cmd->add_option("--threshold", plugin_opt.threshold);
    plugin_cmd->add_flag("--equality-mode", plugin_opt.equality_mode);
    plugin_cmd->add_option("--out", plugin_out);

    auto* gen_cmd = app.add_subcommand("gen-data", "Write the synthetic dataset in directory layout");
    c_gen.add_to(gen_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train_warp) {
            TrainOptions o;
            if (warp_resume) o.resume = *warp_resume;
            o.steps = warp_steps;
            o.progress = &std::cout;
            const auto r = cmd_train_warp(c_warp.load(), c_warp.out, o);
            std::cout << "warp: " << r.steps << " steps, warped L1 " << r.initial_metric << " -> " << r.final_metric
                      << ", checkpoint " << r.checkpoint.string() << "\n";
        } else if (*train_tryon) {
            TrainOptions o;
            if (tryon_resume) o.resume = *tryon_resume;
            if (tryon_warp) o.warp_checkpoint = *tryon_warp;
            o.steps = tryon_steps;
            o.progress = &std::cout;
            const auto r = cmd_train_tryon(c_tryon.load(), c_tryon.out, o);
            std::cout << "tryon: " << r.steps << " steps, masked L1 " << r.initial_metric << " -> " << r.final_metric
                      << ", checkpoint " << r.checkpoint.string() << "\n";
        } else if (*infer_cmd) {
            infer_opt.split = parse_split(infer_split);
            infer_opt.pairing = parse_pairing(infer_pairing);
            infer_opt.limit = infer_limit;
            const auto r = cmd_infer(c_infer.load(), c_infer.out, infer_opt);
            std::cout << "wrote " << r.size() << " images to " << c_infer.out << "\n";
        } else if (*eval_cmd) {
            const auto cfg = c_eval.load();
            if (!eval_opt.self_check && (eval_opt.warp_checkpoint.empty() || eval_opt.tryon_checkpoint.empty())) {
                throw ConfigError("eval needs --warp-checkpoint and --tryon-checkpoint unless --self-check is given");
            }
            const auto reports = cmd_eval(cfg, c_eval.out, eval_opt);
            std::cout << render_markdown_table(reports);
        } else if (*ablate_cmd) {
            if (ab_warp) ablate_opt.warp_checkpoint = *ab_warp;
            if (ab_tryon) ablate_opt.tryon_checkpoint = *ab_tryon;
            ablate_opt.progress = &std::cout;
            const auto which_enum = parse_ablation(which);
            std::cout << cmd_ablate(c_ablate.load(), c_ablate.out, which_enum, ablate_opt).markdown();
        } else if (*bench_cmd) {
            if (b_warp) bench_opt.warp_checkpoint = *b_warp;
            if (b_tryon) bench_opt.tryon_checkpoint = *b_tryon;
            if (!b_steps.empty()) bench_opt.steps = b_steps;
            bench_opt.progress = &std::cout;
            std::cout << cmd_bench(c_bench.load(), c_bench.out, bench_opt).table.markdown();
        } else if (*plugin_cmd) {
            const auto r = cmd_plugin(plugin_out, plugin_opt);
            std::cout << r.report.to_json().dump(2) << "\n";
        } else if (*gen_cmd) {
            cmd_gen_data(c_gen.load(), c_gen.out);
            std::cout << "wrote dataset to " << c_gen.out << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
