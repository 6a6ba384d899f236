#include <gtest/gtest.h>

#include <fstream>

#include "vton/types.hpp"
#include "vton/config.hpp"

using namespace vton;

namespace {

void expect_published_common(const PipelineConfig& c) {
    EXPECT_EQ(c.warp.attention_resolutions, (std::vector<int64_t>{64, 32, 16, 8}));
    EXPECT_EQ(c.warp.attention_dropout, 0.2);
    EXPECT_EQ(c.warp.lr_g, 5e-6);
    EXPECT_EQ(c.warp.lr_d, 5e-6);
    EXPECT_EQ(c.warp.beta1, 0.5);
    EXPECT_EQ(c.warp.beta2, 0.999);
    EXPECT_FALSE(c.warp.ema.has_value());
    EXPECT_EQ(c.warp.loss.per, 0.2);
    EXPECT_EQ(c.warp.loss.ce, 3.0);
    EXPECT_EQ(c.warp.loss.m, 0.3);
    EXPECT_EQ(c.warp.loss.adv, 0.1);
    EXPECT_EQ(c.warp.loss.tv, 0.1);
    EXPECT_EQ(c.warp.loss.sec, 6.0);
    EXPECT_EQ(c.tryon.lr_g, 5e-5);
    EXPECT_EQ(c.tryon.lr_d, 5e-5);
    EXPECT_EQ(c.tryon.beta1, 0.9);
    EXPECT_EQ(c.tryon.beta2, 0.999);
    EXPECT_EQ(c.tryon.batch_size, 3);
    EXPECT_EQ(c.tryon.epochs, 500);
    EXPECT_EQ(c.tryon.ema, 0.9999);
    EXPECT_EQ(c.tryon.attention_dropout, 0.1);
    EXPECT_EQ(c.tryon.res_blocks, 2);
    EXPECT_EQ(c.tryon.clip_version, "ViT-B/32");
    EXPECT_EQ(c.tryon.loss.per, 1.0);
    EXPECT_EQ(c.tryon.loss.adv, 0.1);
    EXPECT_EQ(c.tryon.alpha_n, 5.0);
    EXPECT_EQ(c.postproc.threshold, 0.8);
}

} // namespace

TEST(config, viton_hd_256_values) {
    auto c = preset("viton-hd-256");
    expect_published_common(c);
    EXPECT_EQ(c.size(), (ImageSize{256, 192}));
    EXPECT_EQ(c.warp.levels, 5);
    EXPECT_EQ(c.warp.batch_size, 8);
    EXPECT_EQ(c.warp.epochs, 500);
    EXPECT_EQ(c.tryon.base_channels, 256);
    EXPECT_EQ(c.tryon.channel_mult, (std::vector<int64_t>{1, 2, 2, 2, 4}));
    EXPECT_EQ(c.tryon.attention_resolutions, (std::vector<int64_t>{64, 32}));
}

TEST(config, viton_hd_512_and_dresscode_values) {
    for (const auto* name : {"viton-hd-512", "dresscode-512"}) {
        auto c = preset(name);
        expect_published_common(c);
        EXPECT_EQ(c.size(), (ImageSize{512, 384}));
        EXPECT_EQ(c.warp.levels, 6);
        EXPECT_EQ(c.warp.batch_size, 4);
        EXPECT_EQ(c.warp.epochs, 250);
        EXPECT_EQ(c.tryon.base_channels, 128);
        EXPECT_EQ(c.tryon.channel_mult, (std::vector<int64_t>{1, 1, 2, 2, 4}));
        EXPECT_EQ(c.tryon.attention_resolutions, (std::vector<int64_t>{64, 32, 16}));
    }
}

TEST(config, presets_round_trip) {
    for (const auto& name : preset_names()) {
        auto c = preset(name);
        c.validate();
        auto j = to_json(c);
        auto back = from_json(j);
        EXPECT_EQ(to_json(back), j) << name;
        EXPECT_EQ(to_json(from_json(nlohmann::json::parse(j.dump()))), j) << name;
    }
}

TEST(config, unknown_preset_lists_known_names) {
    try {
        preset("nope");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("desk-64"), std::string::npos);
    }
}

TEST(config, unknown_key_names_its_path) {
    nlohmann::json j = {{"warp", {{"loss", {{"sek", 1.0}}}}}};
    try {
        from_json(j);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("warp.loss.sek"), std::string::npos) << e.what();
    }
}

TEST(config, wrong_type_rejected) {
    EXPECT_THROW(from_json(nlohmann::json{{"warp", {{"levels", "five"}}}}), ConfigError);
}

TEST(config, partial_file_keeps_base_values) {
    auto base = preset("desk-64");
    auto c = from_json(nlohmann::json{{"seed", 9}, {"postproc", {{"threshold", 0.9}}}}, base);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.postproc.threshold, 0.9);
    EXPECT_EQ(c.tryon.base_channels, base.tryon.base_channels);
}

TEST(config, validation_failures) {
    auto c = preset("desk-64");
    c.postproc.threshold = 1.2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = preset("desk-64");
    c.warp.grad_clip = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = preset("desk-64");
    c.ddim.bench_steps = {0};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(config, env_overrides_nested_keys) {
    nlohmann::json j = to_json(preset("desk-64"));
    apply_env_overrides(j, {{"VTON_WARP__CHANNELS", "[8,8,8,8,8]"},
                            {"VTON_WARP__LOSS__ADV", "0"},
                            {"VTON_DATA__GARMENT_TYPE", "dress"},
                            {"HOME", "/root"}});
    auto c = from_json(j);
    EXPECT_EQ(c.warp.channels, (std::vector<int64_t>{8, 8, 8, 8, 8}));
    EXPECT_EQ(c.warp.loss.adv, 0.0);
    EXPECT_EQ(c.data.garment_type, "dress");
}

TEST(config, env_override_unknown_key_rejected) {
    nlohmann::json j = to_json(preset("desk-64"));
    EXPECT_THROW(
        {
            apply_env_overrides(j, {{"VTON_WARP__NOPE", "1"}});
            from_json(j);
        },
        ConfigError);
}

TEST(config, load_layers_preset_file_and_env) {
    const auto path = std::filesystem::temp_directory_path() / "vton_config_test.json";
    std::ofstream(path) << R"({"seed": 4, "eval": {"repeats": 3}})";
    auto c = load_config("desk-64", path, {{"VTON_EVAL__REPEATS", "2"}});
    EXPECT_EQ(c.seed, 4u);
    EXPECT_EQ(c.eval.repeats, 2);
    EXPECT_EQ(c.data.height, 64);
    std::filesystem::remove(path);
    EXPECT_THROW(load_config(std::nullopt, path, {}), ConfigError);
}
