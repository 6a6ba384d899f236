#include <gtest/gtest.h>

#include <set>

#include "vton/types.hpp"
#include "vton/preprocess.hpp"
#include "vton/synthdata.hpp"
#include "vton/warp_ops.hpp"
#include "vton/warploss.hpp"

using namespace vton;

namespace {

bool same_bytes(const torch::Tensor& a, const torch::Tensor& b) {
    return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

// Flood fill from every pixel of the label; 4-connected means one component.
int components(const torch::Tensor& mask) {
    const int64_t h = mask.size(0), w = mask.size(1);
    auto m = mask.to(torch::kBool).contiguous();
    std::vector<int> seen(static_cast<size_t>(h * w), 0);
    const bool* p = m.data_ptr<bool>();
    int count = 0;
    for (int64_t i = 0; i < h * w; ++i) {
        if (!p[i] || seen[static_cast<size_t>(i)]) continue;
        ++count;
        std::vector<int64_t> stack{i};
        seen[static_cast<size_t>(i)] = 1;
        while (!stack.empty()) {
            const int64_t c = stack.back();
            stack.pop_back();
            const int64_t y = c / w, x = c % w;
            const int64_t nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (const auto& n : nb) {
                if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
                const int64_t j = n[0] * w + n[1];
                if (p[j] && !seen[static_cast<size_t>(j)]) {
                    seen[static_cast<size_t>(j)] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return count;
}

} // namespace

TEST(synthdata, same_seed_gives_identical_bytes) {
    const auto a = gen_sample(0, {64, 48}, GarmentType::upper);
    const auto b = gen_sample(0, {64, 48}, GarmentType::upper);
    EXPECT_TRUE(same_bytes(a.person, b.person));
    EXPECT_TRUE(same_bytes(a.garment, b.garment));
    EXPECT_TRUE(same_bytes(a.parsing, b.parsing));
    EXPECT_TRUE(same_bytes(a.densepose, b.densepose));
    EXPECT_TRUE(same_bytes(*a.gt_tryon, *b.gt_tryon));
    EXPECT_TRUE(same_bytes(a.cloth_mask, b.cloth_mask));
    EXPECT_TRUE(same_bytes(a.mark_mask, b.mark_mask));
    ASSERT_EQ(a.keypoints.size(), b.keypoints.size());
    for (size_t i = 0; i < a.keypoints.size(); ++i) {
        EXPECT_EQ(a.keypoints[i].x, b.keypoints[i].x);
        EXPECT_EQ(a.keypoints[i].y, b.keypoints[i].y);
    }
}

TEST(synthdata, different_seeds_differ) {
    const auto a = gen_sample(1, {64, 48}, GarmentType::upper);
    const auto b = gen_sample(2, {64, 48}, GarmentType::upper);
    EXPECT_FALSE(torch::equal(a.person, b.person));
}

TEST(synthdata, gt_equals_person_on_lower_body_for_upper_swap) {
    const auto s = gen_sample(7, {64, 48}, GarmentType::upper);
    auto lower = (s.parsing == label::lower_cloth) | (s.parsing == label::left_leg) | (s.parsing == label::right_leg);
    ASSERT_GT(lower.sum().item<int64_t>(), 0);
    auto m = lower.unsqueeze(0).expand_as(s.person);
    EXPECT_TRUE(torch::equal(s.person.masked_select(m), s.gt_tryon->masked_select(m)));
}

TEST(synthdata, gt_equals_person_outside_mutable_region_all_types) {
    for (auto type : {GarmentType::upper, GarmentType::lower, GarmentType::dress}) {
        for (uint64_t seed = 0; seed < 20; ++seed) {
            const auto s = gen_sample(seed, {64, 48}, type);
            const auto pm = build_preserved_mask(s.parsing, type);
            auto m = pm.mask.unsqueeze(0).expand_as(s.person);
            EXPECT_TRUE(torch::equal(s.person.masked_select(m), s.gt_tryon->masked_select(m)))
                << to_string(type) << " seed " << seed;
        }
    }
}

TEST(synthdata, parsing_partitions_pixels_for_100_seeds) {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = gen_sample(seed, {64, 48}, GarmentType::upper);
        ASSERT_EQ(s.parsing.dtype(), torch::kInt64);
        // Every pixel carries exactly one label: count label memberships per pixel.
        auto membership = torch::zeros({64, 48}, torch::kInt64);
        for (int64_t l = 0; l < label::count; ++l) membership += (s.parsing == l).to(torch::kInt64);
        EXPECT_TRUE(torch::all(membership == 1).item<bool>()) << "seed " << seed;
    }
}

TEST(synthdata, limb_masks_are_four_connected) {
    for (uint64_t seed = 0; seed < 30; ++seed) {
        const auto s = gen_sample(seed, {64, 48}, GarmentType::upper);
        for (int64_t l : {label::left_arm, label::right_arm, label::left_leg, label::right_leg}) {
            auto m = s.parsing == l;
            if (m.sum().item<int64_t>() == 0) continue;
            EXPECT_EQ(components(m), 1) << "seed " << seed << " label " << l;
        }
    }
}

TEST(synthdata, identity_marks_lie_on_arm_skin) {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = gen_sample(seed, {64, 48}, GarmentType::upper);
        ASSERT_GT(s.mark_mask.sum().item<int64_t>(), 0) << "seed " << seed;
        auto arms = (s.parsing == label::left_arm) | (s.parsing == label::right_arm);
        EXPECT_TRUE(torch::all(arms.masked_select(s.mark_mask)).item<bool>()) << "seed " << seed;
    }
}

TEST(synthdata, oracle_flow_reconstructs_garment_region) {
    for (auto type : {GarmentType::upper, GarmentType::lower, GarmentType::dress}) {
        for (uint64_t seed = 0; seed < 20; ++seed) {
            const auto s = gen_sample(seed, {64, 48}, type);
            const auto warped = warp(s.garment, oracle_flow(s));
            const double l1 = l1_warp(warped, *s.gt_tryon, s.cloth_mask).item<double>();
            EXPECT_LT(l1, 1.0 / 255.0) << to_string(type) << " seed " << seed;
        }
    }
}

TEST(synthdata, identity_pose_has_zero_oracle_flow) {
    SynthOptions opt;
    opt.deformation = Deformation::identity;
    const auto s = gen_sample(3, {64, 48}, GarmentType::upper, opt);
    EXPECT_EQ(oracle_flow(s).abs().max().item<float>(), 0.0f);
}

TEST(synthdata, translation_gives_constant_flow) {
    SynthOptions opt;
    opt.deformation = Deformation::translation;
    opt.translate_x = 3.0;
    const auto s = gen_sample(3, {64, 48}, GarmentType::upper, opt);
    const auto f = oracle_flow(s);
    EXPECT_NEAR(f[0].min().item<double>(), 3.0, 1e-4);
    EXPECT_NEAR(f[0].max().item<double>(), 3.0, 1e-4);
    EXPECT_NEAR(f[1].abs().max().item<double>(), 0.0, 1e-4);
}

TEST(synthdata, indivisible_size_is_a_config_error) {
    EXPECT_THROW(gen_sample(0, {60, 48}, GarmentType::upper), ConfigError);
    SynthOptions deep;
    deep.pyramid_depth = 6;
    EXPECT_THROW(gen_sample(0, {64, 48}, GarmentType::upper, deep), ConfigError);
}

TEST(synthdata, keypoints_are_ten_joints_inside_canvas) {
    const auto s = gen_sample(11, {64, 48}, GarmentType::upper);
    ASSERT_EQ(s.keypoints.size(), static_cast<size_t>(num_joints));
    for (const auto& k : s.keypoints) {
        if (!k.visible) continue;
        EXPECT_GE(k.x, 0.0);
        EXPECT_LE(k.x, 47.0);
        EXPECT_GE(k.y, 0.0);
        EXPECT_LE(k.y, 63.0);
    }
}

TEST(synthdata, images_in_unit_range) {
    const auto s = gen_sample(5, {128, 96}, GarmentType::dress);
    for (const auto& t : {s.person, s.garment, *s.gt_tryon, s.densepose}) {
        EXPECT_GE(t.min().item<float>(), -1.0f);
        EXPECT_LE(t.max().item<float>(), 1.0f);
    }
}
