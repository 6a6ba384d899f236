#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "vton/types.hpp"

namespace vton {

/// 2-D affine map  p -> M p + t  on (x, y) points.
struct Affine2 {
    double a = 1, b = 0, c = 0, d = 1; // row-major [[a b] [c d]]
    double tx = 0, ty = 0;

    static Affine2 identity() { return {}; }
    static Affine2 translation(double dx, double dy) { return {1, 0, 0, 1, dx, dy}; }
    /// Rotation by `angle` radians (y axis points down) about `(cx, cy)`.
    static Affine2 rotation_about(double angle, double cx, double cy);
    /// Uniform scale + rotation about a center, followed by a translation.
    static Affine2 similarity(double scale, double angle, double cx, double cy, double dx,
                              double dy);

    std::array<double, 2> apply(double x, double y) const {
        return {a * x + b * y + tx, c * x + d * y + ty};
    }
    Affine2 inverse() const;
    /// (*this) o rhs, i.e. rhs is applied first.
    Affine2 then_after(const Affine2& rhs) const;
};

enum class Pattern : int { plain = 0, h_stripes = 1, v_stripes = 2, checker = 3, dots = 4 };
enum class EmblemShape : int { square = 0, disc = 1, triangle = 2 };

struct Rgb {
    float r = 0, g = 0, b = 0;
};

struct Emblem {
    EmblemShape shape = EmblemShape::square;
    Rgb color;
    double cx = 0, cy = 0, radius = 0; // design units, garment canonical frame
};

struct GarmentParams {
    GarmentType type = GarmentType::upper;
    Rgb base;
    Pattern pattern = Pattern::plain;
    std::optional<Emblem> emblem;
};

/// Limb pose relative to the canonical layout the flat garments are drawn in.
struct BodyParams {
    double torso_scale = 1.0;
    double torso_angle = 0.0;
    double shift_x = 0.0, shift_y = 0.0; // design units
    double left_shoulder = 0.0, right_shoulder = 0.0; // outward rotation, radians
    double left_elbow = 0.0, right_elbow = 0.0;
    double left_hip = 0.0, right_hip = 0.0;
};

struct IdentityMark {
    bool left_arm = true;
    double along = 0.5;  // fraction of forearm length
    double radius = 0.9; // design units
    EmblemShape shape = EmblemShape::disc;
    Rgb color;
};

struct SynthScene {
    uint64_t seed = 0;
    ImageSize canvas;
    BodyParams body;
    Rgb skin, hair, bg_top, bg_bottom;
    GarmentType swapped = GarmentType::upper;
    GarmentParams target;   // the in-shop garment, worn in gt_tryon
    GarmentParams original; // worn by the person in place of `target`
    GarmentParams other;    // the complementary piece, worn in both images (unused for dress)
    std::vector<IdentityMark> identity_marks;
};

struct Keypoint {
    double x = 0, y = 0;
    bool visible = false;
};

inline constexpr int num_joints = 10;
enum class Joint : int {
    head = 0, neck, left_shoulder, right_shoulder, left_elbow, right_elbow,
    left_wrist, right_wrist, left_hip, right_hip
};

/// One paired try-on example. Images are CHW float in [-1, 1].
struct Sample {
    std::string name;
    torch::Tensor person;
    torch::Tensor garment;
    torch::Tensor parsing;   // H x W int64, internal 9-label scheme
    std::vector<Keypoint> keypoints;
    torch::Tensor densepose; // 3 x H x W
    std::optional<torch::Tensor> gt_tryon;
    GarmentType garment_type = GarmentType::upper;
    torch::Tensor cloth_mask; // H x W bool, visible swapped garment in gt
    torch::Tensor mark_mask;  // H x W bool, identity-mark pixels (synthetic only)
    std::optional<SynthScene> scene;
};

enum class Deformation { random, identity, translation };

struct SynthOptions {
    int pyramid_depth = 5;
    Deformation deformation = Deformation::random;
    double translate_x = 0.0, translate_y = 0.0; // pixels, Deformation::translation only
};

SynthScene make_scene(uint64_t seed, ImageSize size, GarmentType type, const SynthOptions& opt = {});
Sample render_scene(const SynthScene& scene);

/// Deterministic synthetic sample; throws ConfigError when the size is not divisible by
/// 2^(pyramid_depth - 1).
Sample gen_sample(uint64_t seed, ImageSize size, GarmentType type, const SynthOptions& opt = {});

/// Backward flow (2 x H x W, pixels; channel 0 = x) such that sampling the flat garment at
/// p - flow(p) reproduces the worn garment. Exact by construction.
torch::Tensor oracle_flow(const Sample& sample);

/// Keypoints of the synthetic body in pixel coordinates.
std::vector<Keypoint> scene_keypoints(const SynthScene& scene);

} // namespace vton
