#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "vton/types.hpp"
#include "vton/metrics.hpp"

using namespace vton;

TEST(ssim, identical_images_score_one) {
    auto x = torch::rand({2, 3, 24, 20}) * 2 - 1;
    EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
}

TEST(ssim, inverted_structure_is_negative) {
    // mirrored about a shared mean so luminance agrees and only structure flips
    auto n = (torch::rand({1, 3, 24, 20}) * 2 - 1) * 0.3;
    EXPECT_LT(ssim(0.4 + n, 0.4 - n), 0.0);
}

TEST(ssim, symmetric) {
    auto a = torch::rand({1, 3, 16, 16}) * 2 - 1, b = torch::rand({1, 3, 16, 16}) * 2 - 1;
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
}

TEST(ssim, constant_patches_closed_form) {
    // 11x11 constants on [-1, 1] with dynamic range 2: variances vanish, only luminance remains
    const double ma = 0.3, mb = -0.2, l = 2.0;
    const double c1 = std::pow(0.01 * l, 2), c2 = std::pow(0.03 * l, 2);
    const double expected = (2 * ma * mb + c1) * c2 / ((ma * ma + mb * mb + c1) * c2);
    auto a = torch::full({1, 1, 11, 11}, ma, torch::kFloat64), b = torch::full({1, 1, 11, 11}, mb, torch::kFloat64);
    EXPECT_NEAR(ssim_gray(a, b, l), expected, 1e-12);
}

TEST(ssim, colour_score_is_channel_mean) {
    auto a = torch::rand({1, 3, 16, 16}) * 2 - 1, b = torch::rand({1, 3, 16, 16}) * 2 - 1;
    double mean = 0.0;
    for (int64_t c = 0; c < 3; ++c) mean += ssim_gray(a.narrow(1, c, 1), b.narrow(1, c, 1), 2.0) / 3.0;
    EXPECT_NEAR(ssim(a, b), mean, 1e-9);
}

TEST(ssim, small_images_rejected) {
    EXPECT_THROW(ssim(torch::zeros({1, 3, 8, 8}), torch::zeros({1, 3, 8, 8})), ContractError);
}

TEST(masked_l1, hand_values) {
    auto a = torch::ones({1, 3, 2, 2}), b = torch::zeros({1, 3, 2, 2});
    auto m = torch::tensor({1, 0, 0, 0}, torch::kBool).view({1, 2, 2});
    b[0][0][0][0] = 0.5;
    EXPECT_NEAR(masked_l1(a, b, m), (0.5 + 1 + 1) / 3.0, 1e-12);
    EXPECT_EQ(masked_l1(a, b, torch::zeros({1, 2, 2}, torch::kBool)), 0.0);
}

TEST(frechet, identical_sets_zero) {
    auto f = torch::randn({50, 6}, torch::kFloat64);
    EXPECT_NEAR(frechet_distance(f, f), 0.0, 1e-6);
}

TEST(frechet, mean_shift_closed_form) {
    auto f = torch::randn({80, 5}, torch::kFloat64);
    auto delta = torch::tensor({0.5, -1.0, 0.0, 2.0, 0.25}, torch::kFloat64);
    EXPECT_NEAR(frechet_distance(f, f + delta), delta.pow(2).sum().item<double>(), 1e-6);
}

TEST(frechet, permutation_invariant) {
    auto a = torch::randn({40, 4}, torch::kFloat64), b = torch::randn({30, 4}, torch::kFloat64) + 0.3;
    const double d = frechet_distance(a, b);
    EXPECT_NEAR(frechet_distance(a.index_select(0, torch::randperm(40)), b.index_select(0, torch::randperm(30))), d,
                1e-9);
    EXPECT_GE(d, 0.0);
}

TEST(kernel_distance, identical_sets_and_shift) {
    auto a = torch::randn({40, 4}, torch::kFloat64);
    EXPECT_NEAR(kernel_distance(a, a), kernel_distance(a, a.index_select(0, torch::randperm(40))), 1e-9);
    EXPECT_GT(kernel_distance(a, a + 3.0), kernel_distance(a, a + 0.1));
    EXPECT_THROW(kernel_distance(a.slice(0, 0, 1), a), ContractError);
}

TEST(feature_distance, seeded_extractor) {
    auto imgs = torch::rand({6, 3, 16, 12}) * 2 - 1;
    auto ex = pooled_extractor(PerceptualNet(1234));
    EXPECT_NEAR(feature_distance(imgs, imgs, ex), 0.0, 1e-6);
    PerceptualNet net(1234);
    EXPECT_NEAR(lpips_proxy(imgs, imgs, net), 0.0, 1e-9);
    EXPECT_GT(lpips_proxy(imgs, -imgs, net), 0.0);
}

TEST(timing, single_repeat_has_zero_spread) {
    int calls = 0;
    auto s = timing_bench([&](size_t) { ++calls; }, {4, 4, 2}, 4, 1);
    EXPECT_EQ(calls, 6); // warm-up pass plus one timed pass
    EXPECT_EQ(s.repeats, 1);
    EXPECT_EQ(s.images, 10);
    EXPECT_EQ(s.std_per_pass, 0.0);
    EXPECT_EQ(s.to_json()["batch"], 4);
}

TEST(timing, doubling_the_set_doubles_wall_time) {
    auto work = [](size_t) { std::this_thread::sleep_for(std::chrono::milliseconds(5)); };
    auto one = timing_bench(work, {4, 4}, 4, 3);
    auto two = timing_bench(work, {4, 4, 4, 4}, 4, 3);
    const double ratio = two.mean_per_pass / one.mean_per_pass;
    EXPECT_GE(ratio, 1.7);
    EXPECT_LE(ratio, 2.3);
}

TEST(timing, invalid_arguments) {
    EXPECT_THROW(timing_bench([](size_t) {}, {4}, 4, 0), ConfigError);
    EXPECT_THROW(timing_bench([](size_t) {}, {}, 4, 1), DataError);
}

TEST(report, json_and_tables) {
    EvalReport paired{"ours", "paired", "seeded", 4, 0.9, 0.05, 0.1, 1.5, 0.02, std::nullopt};
    EvalReport unpaired{"ours", "unpaired", "seeded", 4, std::nullopt, std::nullopt, std::nullopt, 2.0, 0.03, std::nullopt};
    auto j = unpaired.to_json();
    EXPECT_FALSE(j.contains("ssim"));
    EXPECT_FALSE(j.contains("lpips"));
    EXPECT_TRUE(paired.to_json().contains("ssim"));
    auto md = render_markdown_table({paired, unpaired});
    EXPECT_NE(md.find("| ours | paired |"), std::string::npos);
    auto csv = render_csv_table({paired});
    EXPECT_EQ(csv.rfind("method,pairing", 0), 0u);
}
