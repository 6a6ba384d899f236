#include <gtest/gtest.h>

#include <chrono>

#include "vton/types.hpp"
#include "vton/ddim.hpp"
#include "vton/tryonnet.hpp"

using namespace vton;

namespace {

UNetConfig tiny_unet() {
    UNetConfig c;
    c.base_channels = 16;
    c.channel_mult = {1, 2};
    c.res_blocks = 1;
    c.attention_heights = {8};
    c.embed_dim = 32;
    c.heads = 2;
    return c;
}

} // namespace

TEST(tryon_noise, zero_level_is_exact_copy) {
    auto z0 = torch::randn({2, 3, 8, 8});
    auto gen = make_generator(3);
    EXPECT_TRUE(torch::equal(add_noise(z0, 0.0, gen), z0));
}

TEST(tryon_noise, statistics_at_level_five) {
    auto z0 = torch::rand({1000000}) * 2 - 1;
    auto gen = make_generator(11);
    auto d = (add_noise(z0, 5.0, gen) - z0).to(torch::kFloat64);
    const double sd = d.std().item<double>(), mean = d.mean().item<double>();
    EXPECT_GE(sd, 4.99);
    EXPECT_LE(sd, 5.01);
    EXPECT_LT(std::abs(mean), 0.05);
}

TEST(tryon_noise, same_seed_same_noise) {
    auto z0 = torch::randn({3, 4, 4});
    auto g1 = make_generator(5, 2), g2 = make_generator(5, 2), g3 = make_generator(5, 3);
    auto a = add_noise(z0, 5.0, g1);
    EXPECT_TRUE(torch::equal(a, add_noise(z0, 5.0, g2)));
    EXPECT_FALSE(torch::equal(a, add_noise(z0, 5.0, g3)));
}

TEST(merge_static, all_preserved_returns_person) {
    auto raw = torch::randn({3, 4, 4}), person = torch::randn({3, 4, 4});
    auto pred = torch::full({4, 4}, parse7::cloth, torch::kInt64);
    auto ref = torch::full({4, 4}, label::torso_cloth, torch::kInt64);
    EXPECT_TRUE(torch::equal(merge_static(raw, person, torch::ones({4, 4}, torch::kBool), pred, ref), person));
}

TEST(merge_static, nothing_static_returns_raw) {
    auto raw = torch::randn({3, 4, 4}), person = torch::randn({3, 4, 4});
    auto pred = torch::full({4, 4}, parse7::cloth, torch::kInt64);
    auto ref = torch::full({4, 4}, label::torso_cloth, torch::kInt64);
    EXPECT_TRUE(torch::equal(merge_static(raw, person, torch::zeros({4, 4}, torch::kBool), pred, ref), raw));
}

TEST(merge_static, four_by_four_enumeration) {
    // every combination of (pred bg, ref bg, preserved, spare bit) appears once
    auto raw = torch::randn({3, 4, 4}), person = torch::randn({3, 4, 4});
    auto pred = torch::zeros({4, 4}, torch::kInt64);
    auto ref = torch::zeros({4, 4}, torch::kInt64);
    auto keep = torch::zeros({4, 4}, torch::kBool);
    for (int i = 0; i < 16; ++i) {
        const int y = i / 4, x = i % 4;
        pred[y][x] = (i & 1) ? parse7::background : parse7::left_arm;
        ref[y][x] = (i & 2) ? label::background : label::head;
        keep[y][x] = static_cast<bool>(i & 4);
    }
    auto out = merge_static(raw, person, keep, pred, ref);
    for (int i = 0; i < 16; ++i) {
        const int y = i / 4, x = i % 4;
        const bool from_person = ((i & 1) && (i & 2)) || (i & 4);
        auto expected = from_person ? person.index({torch::indexing::Slice(), y, x})
                                    : raw.index({torch::indexing::Slice(), y, x});
        EXPECT_TRUE(torch::equal(out.index({torch::indexing::Slice(), y, x}), expected)) << "pixel " << i;
    }
}

TEST(merge_static, shape_mismatch_throws) {
    auto p = torch::zeros({4, 4}, torch::kInt64);
    EXPECT_THROW(merge_static(torch::zeros({3, 4, 4}), torch::zeros({3, 4, 5}), p.to(torch::kBool), p, p),
                 ContractError);
}

TEST(tryon_unet, shape_range_and_channels) {
    torch::manual_seed(0);
    TryOnUNet net(tiny_unet(), 16);
    net->eval();
    auto y = net(torch::randn({2, 9, 16, 12}), torch::randn({2, 32}));
    EXPECT_EQ(y.sizes(), (std::vector<int64_t>{2, 3, 16, 12}));
    EXPECT_LE(y.abs().max().item<float>(), 1.0f);
    EXPECT_THROW(net(torch::randn({1, 8, 16, 12}), torch::randn({1, 32})), std::exception);
}

TEST(tryon_unet, eval_mode_is_deterministic) {
    torch::manual_seed(1);
    TryOnUNet net(tiny_unet(), 16);
    net->eval();
    auto x = torch::randn({1, 9, 16, 12}), e = torch::randn({1, 32});
    torch::NoGradGuard g;
    EXPECT_TRUE(torch::equal(net(x, e), net(x, e)));
}

TEST(tryon_unet, embedding_receives_gradient) {
    torch::manual_seed(2);
    TryOnUNet net(tiny_unet(), 16);
    // perturb every parameter so zero-initialized heads do not hide the path
    {
        torch::NoGradGuard g;
        for (auto& p : net->parameters()) p.add_(torch::randn_like(p) * 0.05);
    }
    net->eval();
    auto e = torch::randn({1, 32}).requires_grad_();
    net(torch::randn({1, 9, 16, 12}), e).abs().mean().backward();
    EXPECT_GT(e.grad().norm().item<double>(), 0.0);
}

TEST(tryon_unet, attention_levels_follow_heights) {
    auto c = tiny_unet();
    c.attention_heights = {16, 8};
    EXPECT_EQ(TryOnUNet(c, 16)->attention_level_count(), 2);
    c.attention_heights = {};
    EXPECT_EQ(TryOnUNet(c, 16)->attention_level_count(), 0);
}

TEST(tryon_unet, counts_forward_passes) {
    TryOnUNet net(tiny_unet(), 16);
    net->eval();
    torch::NoGradGuard g;
    net(torch::randn({1, 9, 16, 12}), torch::randn({1, 32}));
    EXPECT_EQ(net->forward_count(), 1);
    net->reset_forward_count();
    EXPECT_EQ(net->forward_count(), 0);
}

TEST(ema, shadow_equals_weights_before_updates) {
    TryOnUNet net(tiny_unet(), 16);
    EmaShadow ema(*net, 0.9999);
    auto params = net->parameters();
    ASSERT_EQ(ema.shadow().size(), params.size());
    for (size_t i = 0; i < params.size(); ++i) EXPECT_TRUE(torch::equal(ema.shadow()[i], params[i]));
    EXPECT_EQ(ema.updates(), 0);
}

TEST(ema, update_moves_towards_weights) {
    torch::nn::Linear lin(2, 2);
    EmaShadow ema(*lin, 0.9);
    auto before = ema.shadow()[0].clone();
    {
        torch::NoGradGuard g;
        lin->weight.add_(1.0);
    }
    ema.update(*lin);
    EXPECT_TRUE(torch::allclose(ema.shadow()[0], before + 0.1, 1e-6, 1e-6));
    EXPECT_EQ(ema.updates(), 1);
}

TEST(tryon_loss, weighted_sum) {
    auto b = total_tryon_loss(torch::full({}, 0.5), torch::full({}, 2.0), torch::full({}, 3.0), TryOnLossWeights{});
    EXPECT_NEAR(b.total.item<double>(), 0.5 + 1.0 * 2.0 + 0.1 * 3.0, 1e-6);
    auto z = torch::zeros({});
    EXPECT_EQ(total_tryon_loss(z, z, z, TryOnLossWeights{}).total.item<float>(), 0.0f);
    TryOnLossWeights bad;
    bad.adv = -0.1;
    EXPECT_THROW(bad.validate(), ConfigError);
}

namespace {

TryOnBatch random_batch(int64_t n, int64_t h, int64_t w, int64_t e) {
    TryOnBatch b;
    b.gt = torch::rand({n, 3, h, w}) * 2 - 1;
    b.person = b.gt.clone();
    b.condition = torch::rand({n, 3, h, w}) * 2 - 1;
    b.densepose = torch::rand({n, 3, h, w}) * 2 - 1;
    b.embedding = torch::randn({n, e});
    b.preserved = torch::rand({n, h, w}) > 0.7;
    b.pred_labels = torch::randint(0, 7, {n, h, w}, torch::kInt64);
    b.ref_parsing = torch::randint(0, 9, {n, h, w}, torch::kInt64);
    return b;
}

} // namespace

TEST(tryon_trainer, first_step_finite_for_several_seeds) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        torch::manual_seed(seed);
        TryOnTrainOptions opt;
        opt.seed = seed;
        FeatureExtractor id = [](const torch::Tensor& x) { return std::vector<torch::Tensor>{x}; };
        TryOnTrainer tr(TryOnUNet(tiny_unet(), 16), opt, id);
        auto r = tr.step(random_batch(2, 16, 12, 32));
        EXPECT_TRUE(std::isfinite(r.generator.total.item<double>())) << seed;
        EXPECT_TRUE(std::isfinite(r.discriminator)) << seed;
        EXPECT_EQ(tr.ema.updates(), 1);
    }
}

TEST(tryon_trainer, predict_keeps_static_pixels) {
    torch::manual_seed(4);
    FeatureExtractor id = [](const torch::Tensor& x) { return std::vector<torch::Tensor>{x}; };
    TryOnTrainer tr(TryOnUNet(tiny_unet(), 16), TryOnTrainOptions{}, id);
    auto b = random_batch(2, 16, 12, 32);
    torch::NoGradGuard g;
    auto out = tr.predict(b, 0, true);
    auto m = static_region(b.preserved, b.pred_labels, b.ref_parsing).unsqueeze(1).expand_as(out);
    EXPECT_TRUE(torch::equal(out.masked_select(m), b.person.masked_select(m)));
}

TEST(ddim, timesteps_trailing_and_descending) {
    EXPECT_EQ(ddim_timesteps(1, 1000), (std::vector<int64_t>{999}));
    auto ts = ddim_timesteps(10, 1000);
    ASSERT_EQ(ts.size(), 10u);
    EXPECT_EQ(ts.front(), 999);
    EXPECT_EQ(ts.back(), 99);
    for (size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
    EXPECT_EQ(ddim_timesteps(1000, 1000).back(), 0);
    EXPECT_THROW(ddim_timesteps(0, 1000), ConfigError);
    EXPECT_THROW(ddim_timesteps(1001, 1000), ConfigError);
}

TEST(ddim, schedule_is_decreasing) {
    auto s = DiffusionSchedule::linear();
    EXPECT_NEAR(s.alpha_bar(0), 1.0 - 1e-4, 1e-12);
    EXPECT_EQ(s.alpha_bar(-1), 1.0);
    for (int64_t t = 1; t < 1000; ++t) ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
}

TEST(ddim, one_step_is_one_forward_pass) {
    TryOnUNet net(ddim_variant(tiny_unet()), 16);
    net->eval();
    auto gen = make_generator(0);
    auto x = ddim_sample(net, torch::randn({1, 6, 16, 12}), torch::randn({1, 32}), 1,
                         DiffusionSchedule::linear(1), gen);
    EXPECT_EQ(net->forward_count(), 1);
    EXPECT_EQ(x.sizes(), (std::vector<int64_t>{1, 3, 16, 12}));
    EXPECT_TRUE(torch::isfinite(x).all().item<bool>());
    net->reset_forward_count();
    auto gen2 = make_generator(0);
    ddim_sample(net, torch::randn({1, 6, 16, 12}), torch::randn({1, 32}), 10, DiffusionSchedule::linear(), gen2);
    EXPECT_EQ(net->forward_count(), 10);
}

TEST(ddim, wall_time_grows_with_steps) {
    TryOnUNet net(ddim_variant(tiny_unet()), 16);
    net->eval();
    auto cond = torch::randn({1, 6, 16, 12}), emb = torch::randn({1, 32});
    auto schedule = DiffusionSchedule::linear();
    auto timed = [&](int64_t steps) {
        auto gen = make_generator(1);
        const auto t0 = std::chrono::steady_clock::now();
        ddim_sample(net, cond, emb, steps, schedule, gen);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    timed(1);
    const double t1 = timed(1), t10 = timed(10), t40 = timed(40);
    EXPECT_LT(t1, t10);
    EXPECT_LT(t10, t40);
}

TEST(ddim, training_step_is_finite) {
    torch::manual_seed(0);
    TryOnUNet net(ddim_variant(tiny_unet()), 16);
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-3));
    auto gen = make_generator(2);
    const double mse = ddim_train_step(net, opt, torch::rand({2, 3, 16, 12}) * 2 - 1, torch::randn({2, 6, 16, 12}),
                                       torch::randn({2, 32}), DiffusionSchedule::linear(), gen);
    EXPECT_TRUE(std::isfinite(mse));
    EXPECT_GT(mse, 0.0);
}
