#include "vton/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

extern char** environ;

namespace vton {

using nlohmann::json;

namespace {

const std::set<std::string> free_form_keys{"data.label_map"};

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void merge_strict(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ConfigError("config section '" + path + "' must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + full + "'");
        auto& slot = base[key];
        if (slot.is_object() && !free_form_keys.contains(full)) {
            merge_strict(slot, value, full);
        } else {
            slot = value;
        }
    }
}

template <class T>
T get(const json& j, const std::string& section, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + section + "." + key + "' has the wrong type: " + e.what());
    }
}

std::optional<double> get_opt(const json& j, const std::string& section, const char* key) {
    if (j.at(key).is_null()) return std::nullopt;
    return get<double>(j, section, key);
}

} // namespace

json to_json(const PipelineConfig& c) {
    json j;
    j["preset"] = c.preset;
    j["seed"] = c.seed;
    j["device"] = c.device;
    j["data"] = {{"height", c.data.height},
                 {"width", c.data.width},
                 {"garment_type", c.data.garment_type},
                 {"source", c.data.source},
                 {"root", c.data.root},
                 {"train_count", c.data.train_count},
                 {"test_count", c.data.test_count},
                 {"label_map", c.data.label_map},
                 {"unpaired_list", c.data.unpaired_list}};
    j["warp"] = {{"levels", c.warp.levels},
                 {"channels", c.warp.channels},
                 {"attention_resolutions", c.warp.attention_resolutions},
                 {"attention_dropout", c.warp.attention_dropout},
                 {"use_attention", c.warp.use_attention},
                 {"heads", c.warp.heads},
                 {"max_disp", c.warp.max_disp},
                 {"lr_g", c.warp.lr_g},
                 {"lr_d", c.warp.lr_d},
                 {"beta1", c.warp.beta1},
                 {"beta2", c.warp.beta2},
                 {"grad_clip", c.warp.grad_clip},
                 {"batch_size", c.warp.batch_size},
                 {"epochs", c.warp.epochs},
                 {"steps", c.warp.steps},
                 {"ema", opt_json(c.warp.ema)},
                 {"loss",
                  {{"per", c.warp.loss.per},
                   {"ce", c.warp.loss.ce},
                   {"m", c.warp.loss.m},
                   {"adv", c.warp.loss.adv},
                   {"tv", c.warp.loss.tv},
                   {"sec", c.warp.loss.sec}}}};
    j["tryon"] = {{"base_channels", c.tryon.base_channels},
                  {"channel_mult", c.tryon.channel_mult},
                  {"attention_resolutions", c.tryon.attention_resolutions},
                  {"res_blocks", c.tryon.res_blocks},
                  {"attention_dropout", c.tryon.attention_dropout},
                  {"heads", c.tryon.heads},
                  {"clip_version", c.tryon.clip_version},
                  {"encoder", c.tryon.encoder},
                  {"embed_dim", c.tryon.embed_dim},
                  {"alpha_n", c.tryon.alpha_n},
                  {"lr_g", c.tryon.lr_g},
                  {"lr_d", c.tryon.lr_d},
                  {"beta1", c.tryon.beta1},
                  {"beta2", c.tryon.beta2},
                  {"batch_size", c.tryon.batch_size},
                  {"epochs", c.tryon.epochs},
                  {"steps", c.tryon.steps},
                  {"ema", opt_json(c.tryon.ema)},
                  {"loss", {{"per", c.tryon.loss.per}, {"adv", c.tryon.loss.adv}}}};
    j["postproc"] = {{"threshold", c.postproc.threshold},
                     {"equality_mode", c.postproc.equality_mode},
                     {"unconditional", c.postproc.unconditional},
                     {"conditional", c.postproc.conditional}};
    j["ddim"] = {{"timesteps", c.ddim.timesteps},     {"beta_start", c.ddim.beta_start},
                 {"beta_end", c.ddim.beta_end},       {"bench_steps", c.ddim.bench_steps},
                 {"train_steps", c.ddim.train_steps}, {"lr", c.ddim.lr}};
    j["eval"] = {{"batch_size", c.eval.batch_size},     {"repeats", c.eval.repeats},
                 {"bench_height", c.eval.bench_height}, {"bench_width", c.eval.bench_width},
                 {"extractor_weights", c.eval.extractor_weights}, {"extractor_seed", c.eval.extractor_seed}};
    j["log"] = {{"every", c.log.every}, {"checkpoint_every", c.log.checkpoint_every}};
    return j;
}

PipelineConfig from_json(const json& patch, const PipelineConfig& base) {
    json m = to_json(base);
    merge_strict(m, patch, "");
    PipelineConfig c;
    c.preset = get<std::string>(m, "", "preset");
    c.seed = get<uint64_t>(m, "", "seed");
    c.device = get<std::string>(m, "", "device");

    const auto& d = m["data"];
    c.data.height = get<int64_t>(d, "data", "height");
    c.data.width = get<int64_t>(d, "data", "width");
    c.data.garment_type = get<std::string>(d, "data", "garment_type");
    c.data.source = get<std::string>(d, "data", "source");
    c.data.root = get<std::string>(d, "data", "root");
    c.data.train_count = get<int64_t>(d, "data", "train_count");
    c.data.test_count = get<int64_t>(d, "data", "test_count");
    c.data.label_map = get<std::map<std::string, int64_t>>(d, "data", "label_map");
    c.data.unpaired_list = get<std::string>(d, "data", "unpaired_list");

    const auto& w = m["warp"];
    c.warp.levels = get<int64_t>(w, "warp", "levels");
    c.warp.channels = get<std::vector<int64_t>>(w, "warp", "channels");
    c.warp.attention_resolutions = get<std::vector<int64_t>>(w, "warp", "attention_resolutions");
    c.warp.attention_dropout = get<double>(w, "warp", "attention_dropout");
    c.warp.use_attention = get<bool>(w, "warp", "use_attention");
    c.warp.heads = get<int64_t>(w, "warp", "heads");
    c.warp.max_disp = get<int64_t>(w, "warp", "max_disp");
    c.warp.lr_g = get<double>(w, "warp", "lr_g");
    c.warp.lr_d = get<double>(w, "warp", "lr_d");
    c.warp.beta1 = get<double>(w, "warp", "beta1");
    c.warp.beta2 = get<double>(w, "warp", "beta2");
    c.warp.grad_clip = get<double>(w, "warp", "grad_clip");
    c.warp.batch_size = get<int64_t>(w, "warp", "batch_size");
    c.warp.epochs = get<int64_t>(w, "warp", "epochs");
    c.warp.steps = get<int64_t>(w, "warp", "steps");
    c.warp.ema = get_opt(w, "warp", "ema");
    const auto& wl = w["loss"];
    c.warp.loss.per = get<double>(wl, "warp.loss", "per");
    c.warp.loss.ce = get<double>(wl, "warp.loss", "ce");
    c.warp.loss.m = get<double>(wl, "warp.loss", "m");
    c.warp.loss.adv = get<double>(wl, "warp.loss", "adv");
    c.warp.loss.tv = get<double>(wl, "warp.loss", "tv");
    c.warp.loss.sec = get<double>(wl, "warp.loss", "sec");

    const auto& t = m["tryon"];
    c.tryon.base_channels = get<int64_t>(t, "tryon", "base_channels");
    c.tryon.channel_mult = get<std::vector<int64_t>>(t, "tryon", "channel_mult");
    c.tryon.attention_resolutions = get<std::vector<int64_t>>(t, "tryon", "attention_resolutions");
    c.tryon.res_blocks = get<int64_t>(t, "tryon", "res_blocks");
    c.tryon.attention_dropout = get<double>(t, "tryon", "attention_dropout");
    c.tryon.heads = get<int64_t>(t, "tryon", "heads");
    c.tryon.clip_version = get<std::string>(t, "tryon", "clip_version");
    c.tryon.encoder = get<std::string>(t, "tryon", "encoder");
    c.tryon.embed_dim = get<int64_t>(t, "tryon", "embed_dim");
    c.tryon.alpha_n = get<double>(t, "tryon", "alpha_n");
    c.tryon.lr_g = get<double>(t, "tryon", "lr_g");
    c.tryon.lr_d = get<double>(t, "tryon", "lr_d");
    c.tryon.beta1 = get<double>(t, "tryon", "beta1");
    c.tryon.beta2 = get<double>(t, "tryon", "beta2");
    c.tryon.batch_size = get<int64_t>(t, "tryon", "batch_size");
    c.tryon.epochs = get<int64_t>(t, "tryon", "epochs");
    c.tryon.steps = get<int64_t>(t, "tryon", "steps");
    c.tryon.ema = get_opt(t, "tryon", "ema");
    c.tryon.loss.per = get<double>(t["loss"], "tryon.loss", "per");
    c.tryon.loss.adv = get<double>(t["loss"], "tryon.loss", "adv");

    const auto& p = m["postproc"];
    c.postproc.threshold = get<double>(p, "postproc", "threshold");
    c.postproc.equality_mode = get<bool>(p, "postproc", "equality_mode");
    c.postproc.unconditional = get<bool>(p, "postproc", "unconditional");
    c.postproc.conditional = get<bool>(p, "postproc", "conditional");

    const auto& dd = m["ddim"];
    c.ddim.timesteps = get<int64_t>(dd, "ddim", "timesteps");
    c.ddim.beta_start = get<double>(dd, "ddim", "beta_start");
    c.ddim.beta_end = get<double>(dd, "ddim", "beta_end");
    c.ddim.bench_steps = get<std::vector<int64_t>>(dd, "ddim", "bench_steps");
    c.ddim.train_steps = get<int64_t>(dd, "ddim", "train_steps");
    c.ddim.lr = get<double>(dd, "ddim", "lr");

    const auto& e = m["eval"];
    c.eval.batch_size = get<int64_t>(e, "eval", "batch_size");
    c.eval.repeats = get<int64_t>(e, "eval", "repeats");
    c.eval.bench_height = get<int64_t>(e, "eval", "bench_height");
    c.eval.bench_width = get<int64_t>(e, "eval", "bench_width");
    c.eval.extractor_weights = get<std::string>(e, "eval", "extractor_weights");
    c.eval.extractor_seed = get<uint64_t>(e, "eval", "extractor_seed");

    c.log.every = get<int64_t>(m["log"], "log", "every");
    c.log.checkpoint_every = get<int64_t>(m["log"], "log", "checkpoint_every");
    return c;
}

void PipelineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (device != "cpu" && device != "gpu") fail("device must be 'cpu' or 'gpu'");
    parse_garment_type(data.garment_type);
    if (data.source != "synthetic" && data.source != "directory") fail("data.source must be synthetic or directory");
    if (data.source == "directory" && data.root.empty()) fail("data.root is required for directory datasets");
    if (data.height <= 0 || data.width <= 0) fail("data.height and data.width must be positive");
    if (warp.levels < 1) fail("warp.levels must be at least 1");
    const int64_t div = int64_t{1} << (warp.levels - 1);
    if (data.height % div != 0 || data.width % div != 0) {
        fail("data size " + std::to_string(data.height) + "x" + std::to_string(data.width) +
             " is not divisible by 2^(warp.levels-1)");
    }
    if (!warp.channels.empty() && static_cast<int64_t>(warp.channels.size()) < warp.levels) {
        fail("warp.channels must list one width per level");
    }
    for (auto ch : warp.channels) {
        if (ch % warp.heads != 0) fail("warp.channels must be divisible by warp.heads");
    }
    auto check_rate = [&](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0 || v >= 1.0) fail(std::string(name) + " must lie in [0, 1)");
    };
    check_rate(warp.attention_dropout, "warp.attention_dropout");
    check_rate(tryon.attention_dropout, "tryon.attention_dropout");
    for (double v : {warp.lr_g, warp.lr_d, tryon.lr_g, tryon.lr_d, ddim.lr}) {
        if (!std::isfinite(v) || v <= 0.0) fail("learning rates must be positive");
    }
    for (double v : {warp.beta1, warp.beta2, tryon.beta1, tryon.beta2}) check_rate(v, "Adam betas");
    if (!(warp.grad_clip >= 0.0)) throw ConfigError("warp.grad_clip must be non-negative");
    for (double v : {warp.loss.per, warp.loss.ce, warp.loss.m, warp.loss.adv, warp.loss.tv, warp.loss.sec,
                     tryon.loss.per, tryon.loss.adv}) {
        if (!std::isfinite(v) || v < 0.0) fail("loss weights must be finite and nonnegative");
    }
    if (!std::isfinite(tryon.alpha_n) || tryon.alpha_n < 0.0) fail("tryon.alpha_n must be finite and nonnegative");
    for (const auto& ema : {warp.ema, tryon.ema}) {
        if (ema && (!std::isfinite(*ema) || *ema < 0.0 || *ema >= 1.0)) fail("ema decay must lie in [0, 1)");
    }
    if (tryon.channel_mult.empty()) fail("tryon.channel_mult must not be empty");
    const int64_t tdiv = int64_t{1} << (tryon.channel_mult.size() - 1);
    if (data.height % tdiv != 0 || data.width % tdiv != 0) {
        fail("data size is not divisible by the try-on network's downsampling factor");
    }
    if (tryon.base_channels < 1 || tryon.res_blocks < 1) fail("tryon.base_channels and res_blocks must be positive");
    if (postproc.threshold < 0.0 || postproc.threshold > 1.0) fail("postproc.threshold must lie in [0, 1]");
    if (ddim.timesteps < 1) fail("ddim.timesteps must be positive");
    for (auto s : ddim.bench_steps) {
        if (s < 1 || s > ddim.timesteps) fail("ddim.bench_steps must lie in [1, ddim.timesteps]");
    }
    if (eval.batch_size < 1 || eval.repeats < 1) fail("eval.batch_size and eval.repeats must be positive");
    if (warp.batch_size < 1 || tryon.batch_size < 1) fail("batch sizes must be positive");
    if (data.train_count < 1 || data.test_count < 1) fail("data counts must be positive");
}

std::vector<std::string> preset_names() { return {"viton-hd-256", "viton-hd-512", "dresscode-512", "desk-64"}; }

PipelineConfig preset(const std::string& name) {
    PipelineConfig c;
    c.preset = name;
    if (name == "viton-hd-256") {
        c.data.height = 256;
        c.data.width = 192;
        c.warp.levels = 5;
        c.warp.batch_size = 8;
        c.warp.epochs = 500;
        c.tryon.base_channels = 256;
        c.tryon.channel_mult = {1, 2, 2, 2, 4};
        c.tryon.attention_resolutions = {64, 32};
    } else if (name == "viton-hd-512" || name == "dresscode-512") {
        c.data.height = 512;
        c.data.width = 384;
        c.warp.levels = 6;
        c.warp.batch_size = 4;
        c.warp.epochs = 250;
        c.tryon.base_channels = 128;
        c.tryon.channel_mult = {1, 1, 2, 2, 4};
        c.tryon.attention_resolutions = {64, 32, 16};
    } else if (name == "desk-64") {
        c.data.height = 64;
        c.data.width = 48;
        c.data.train_count = 8;
        c.data.test_count = 8;
        c.warp.levels = 5;
        c.warp.attention_resolutions = {16, 8, 4};
        c.warp.channels = {16, 32, 64, 64, 64};
        c.warp.grad_clip = 1.0;
        c.warp.lr_g = 1e-3;
        c.warp.lr_d = 1e-3;
        c.warp.batch_size = 8;
        c.warp.epochs = 300;
        c.warp.steps = 300;
        c.tryon.base_channels = 16;
        c.tryon.channel_mult = {1, 2, 2};
        c.tryon.attention_resolutions = {16};
        c.tryon.res_blocks = 1;
        c.tryon.lr_g = 1e-3;
        c.tryon.lr_d = 1e-4; // a faster critic saturates the hinge and drowns the L1 signal
        c.tryon.batch_size = 8;
        c.tryon.epochs = 2000;
        c.tryon.steps = 2000;
        c.tryon.ema = 0.995;
        c.ddim.train_steps = 100;
        c.ddim.lr = 1e-3;
        c.eval.repeats = 10;
    } else {
        std::string known;
        for (const auto& n : preset_names()) known += " " + n;
        throw ConfigError("unknown preset '" + name + "' (known:" + known + ")");
    }
    return c;
}

void apply_env_overrides(json& j, const std::map<std::string, std::string>& env) {
    const std::string prefix = "VTON_";
    for (const auto& [key, value] : env) {
        if (key.rfind(prefix, 0) != 0) continue;
        std::vector<std::string> parts;
        std::string rest = key.substr(prefix.size());
        for (size_t pos; (pos = rest.find("__")) != std::string::npos; rest = rest.substr(pos + 2)) {
            parts.push_back(rest.substr(0, pos));
        }
        parts.push_back(rest);
        json* node = &j;
        std::string path;
        for (size_t i = 0; i < parts.size(); ++i) {
            std::string k = parts[i];
            for (auto& ch : k) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            path += (path.empty() ? "" : ".") + k;
            if (i + 1 == parts.size()) {
                json v;
                try {
                    v = json::parse(value);
                } catch (const json::exception&) {
                    v = value;
                }
                (*node)[k] = v;
            } else {
                if (!node->contains(k)) (*node)[k] = json::object();
                node = &(*node)[k];
                if (!node->is_object()) throw ConfigError("environment override " + key + " targets a non-section");
            }
        }
    }
}

std::map<std::string, std::string> environment_overrides() {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string s(*e);
        if (s.rfind("VTON_", 0) != 0) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) continue;
        env[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return env;
}

PipelineConfig load_config(const std::optional<std::string>& preset_name,
                           const std::optional<std::filesystem::path>& file,
                           const std::map<std::string, std::string>& env) {
    json patch = json::object();
    if (file) {
        std::ifstream is(*file);
        if (!is) throw ConfigError("cannot open config file " + file->string());
        try {
            patch = json::parse(is);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
        }
    }
    std::string name = preset_name.value_or("");
    if (name.empty() && patch.contains("preset") && patch["preset"].is_string()) name = patch["preset"];
    const PipelineConfig base = name.empty() ? preset("desk-64") : preset(name);
    apply_env_overrides(patch, env);
    auto cfg = from_json(patch, base);
    if (preset_name) cfg.preset = *preset_name;
    cfg.validate();
    return cfg;
}

} // namespace vton
