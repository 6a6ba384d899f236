#include <gtest/gtest.h>

#include <set>

#include "vton/types.hpp"
#include "vton/preprocess.hpp"
#include "vton/synthdata.hpp"

using namespace vton;

namespace {

torch::Tensor all_labels_map() {
    // 3 x 3 map holding every label once (label 8 twice at the end).
    return torch::tensor({0, 1, 2, 3, 4, 5, 6, 7, 8}, torch::kInt64).view({3, 3});
}

std::set<int64_t> kept(const PreservedMask& pm, const torch::Tensor& parsing) {
    std::set<int64_t> out;
    auto flat = parsing.flatten();
    auto m = pm.mask.flatten();
    for (int64_t i = 0; i < flat.size(0); ++i) {
        if (m[i].item<bool>()) out.insert(flat[i].item<int64_t>());
    }
    return out;
}

} // namespace

TEST(preprocess, upper_garment_mask_labels) {
    const auto p = all_labels_map();
    EXPECT_EQ(kept(build_preserved_mask(p, GarmentType::upper), p), (std::set<int64_t>{0, 1, 3, 6, 7}));
}

TEST(preprocess, lower_garment_mask_labels) {
    const auto p = all_labels_map();
    EXPECT_EQ(kept(build_preserved_mask(p, GarmentType::lower), p), (std::set<int64_t>{0, 1, 2, 4, 5}));
}

TEST(preprocess, dress_keeps_only_background_and_head) {
    const auto p = all_labels_map();
    EXPECT_EQ(kept(build_preserved_mask(p, GarmentType::dress), p), (std::set<int64_t>{0, 1}));
}

TEST(preprocess, all_background_is_fully_preserved) {
    const auto p = torch::zeros({8, 6}, torch::kInt64);
    for (auto t : {GarmentType::upper, GarmentType::lower, GarmentType::dress}) {
        EXPECT_TRUE(torch::all(build_preserved_mask(p, t).mask).item<bool>());
    }
}

TEST(preprocess, preserved_mask_is_idempotent) {
    const auto s = gen_sample(4, {64, 48}, GarmentType::upper);
    const auto once = build_preserved_mask(s.parsing, GarmentType::upper);
    // Re-deriving from the parsing restricted to the preserved pixels keeps the same mask.
    auto restricted = torch::where(once.mask, s.parsing, torch::full_like(s.parsing, label::torso_cloth));
    const auto twice = build_preserved_mask(restricted, GarmentType::upper);
    EXPECT_TRUE(torch::equal(once.mask, twice.mask));
}

TEST(preprocess, parse_garment_type_rejects_unknown) {
    EXPECT_EQ(parse_garment_type("upper"), GarmentType::upper);
    EXPECT_EQ(parse_garment_type("dress"), GarmentType::dress);
    EXPECT_THROW(parse_garment_type("hat"), ConfigError);
}

TEST(preprocess, single_joint_peak_at_joint) {
    std::vector<Keypoint> joints(num_joints);
    joints[0] = {10.0, 10.0, true};
    const auto hm = rasterize_keypoints(joints, {32, 24}, 2.0);
    ASSERT_EQ(hm.size(0), num_joints);
    const auto c = hm[0];
    EXPECT_FLOAT_EQ(c.max().item<float>(), 1.0f);
    const auto idx = c.flatten().argmax().item<int64_t>();
    EXPECT_EQ(idx / 24, 10);
    EXPECT_EQ(idx % 24, 10);
}

TEST(preprocess, invisible_joint_is_zero_channel) {
    std::vector<Keypoint> joints(num_joints);
    joints[3] = {5.0, 5.0, false};
    const auto hm = rasterize_keypoints(joints, {32, 24}, 2.0);
    EXPECT_EQ(hm[3].abs().sum().item<float>(), 0.0f);
}

TEST(preprocess, two_joints_are_independent_channels) {
    std::vector<Keypoint> joints(num_joints);
    joints[1] = {4.0, 6.0, true};
    joints[2] = {5.0, 6.0, true};
    const auto hm = rasterize_keypoints(joints, {32, 24}, 2.0);
    double total = 0.0;
    for (int64_t c = 0; c < num_joints; ++c) total += hm[c].max().item<double>();
    EXPECT_DOUBLE_EQ(total, 2.0);
    EXPECT_EQ(hm[1].flatten().argmax().item<int64_t>(), 6 * 24 + 4);
    EXPECT_EQ(hm[2].flatten().argmax().item<int64_t>(), 6 * 24 + 5);
}

TEST(preprocess, keypoint_sigma_scales_with_height) {
    EXPECT_DOUBLE_EQ(default_keypoint_sigma(64), 3.0);
    EXPECT_DOUBLE_EQ(default_keypoint_sigma(512), 24.0);
}

TEST(preprocess, condition_from_oracle_equals_gt_off_holes) {
    const auto s = gen_sample(9, {64, 48}, GarmentType::upper);
    const auto pm = build_preserved_mask(s.parsing, GarmentType::upper);
    const auto ci = assemble_condition(s.person, *s.gt_tryon, s.cloth_mask, pm, s.parsing);
    auto filled = (ci.provenance != static_cast<uint8_t>(Provenance::hole)).unsqueeze(0).expand_as(s.person);
    EXPECT_TRUE(torch::equal(ci.image.masked_select(filled), s.gt_tryon->masked_select(filled)));
    auto holes = (ci.provenance == static_cast<uint8_t>(Provenance::hole)).unsqueeze(0).expand_as(s.person);
    EXPECT_TRUE(torch::all(ci.image.masked_select(holes) == hole_fill).item<bool>());
}

TEST(preprocess, empty_cloth_mask_leaves_preserved_person) {
    const auto s = gen_sample(2, {64, 48}, GarmentType::upper);
    const auto pm = build_preserved_mask(s.parsing, GarmentType::upper);
    const auto empty = torch::zeros({64, 48}, torch::kBool);
    const auto ci = assemble_condition(s.person, s.garment, empty, pm, s.parsing);
    EXPECT_FALSE(torch::any(ci.provenance == static_cast<uint8_t>(Provenance::warped_garment)).item<bool>());
    auto m = pm.mask.unsqueeze(0).expand_as(s.person);
    EXPECT_TRUE(torch::equal(ci.image.masked_select(m), s.person.masked_select(m)));
}

TEST(preprocess, full_preserved_mask_gives_person) {
    const auto s = gen_sample(2, {64, 48}, GarmentType::upper);
    PreservedMask pm{torch::ones({64, 48}, torch::kBool), GarmentType::upper};
    const auto ci = assemble_condition(s.person, s.garment, torch::zeros({64, 48}, torch::kBool), pm, s.parsing);
    EXPECT_TRUE(torch::equal(ci.image, s.person));
}

TEST(preprocess, every_pixel_copied_from_its_provenance_source) {
    const auto s = gen_sample(12, {64, 48}, GarmentType::lower);
    const auto pm = build_preserved_mask(s.parsing, GarmentType::lower);
    auto cloth = torch::rand({64, 48}) > 0.7;
    auto warped = torch::rand({3, 64, 48}) * 2 - 1;
    const auto ci = assemble_condition(s.person, warped, cloth, pm, s.parsing);
    for (int64_t y = 0; y < 64; y += 3) {
        for (int64_t x = 0; x < 48; x += 3) {
            const auto src = static_cast<Provenance>(ci.provenance[y][x].item<uint8_t>());
            auto px = ci.image.index({torch::indexing::Slice(), y, x});
            switch (src) {
            case Provenance::warped_garment:
                EXPECT_TRUE(cloth[y][x].item<bool>());
                EXPECT_TRUE(torch::equal(px, warped.index({torch::indexing::Slice(), y, x})));
                break;
            case Provenance::preserved:
            case Provenance::background:
                EXPECT_TRUE(torch::equal(px, s.person.index({torch::indexing::Slice(), y, x})));
                break;
            case Provenance::hole: EXPECT_TRUE(torch::all(px == hole_fill).item<bool>()); break;
            }
        }
    }
}

TEST(preprocess, shape_mismatch_throws) {
    const auto s = gen_sample(2, {64, 48}, GarmentType::upper);
    const auto pm = build_preserved_mask(s.parsing, GarmentType::upper);
    EXPECT_ANY_THROW(assemble_condition(s.person, torch::zeros({3, 32, 24}), torch::zeros({64, 48}, torch::kBool), pm,
                                        s.parsing));
}
