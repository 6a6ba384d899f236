#pragma once

#include <vector>

#include <torch/torch.h>

#include "vton/synthdata.hpp"
#include "vton/types.hpp"

namespace vton {

/// Pixels guaranteed unchanged by the try-on for a given garment type.
struct PreservedMask {
    torch::Tensor mask; // H x W bool
    GarmentType garment_type = GarmentType::upper;
};

enum class Provenance : uint8_t { hole = 0, background = 1, preserved = 2, warped_garment = 3 };

struct ConditionImage {
    torch::Tensor image;      // 3 x H x W
    torch::Tensor provenance; // H x W uint8, values of Provenance
};

inline constexpr float hole_fill = 0.0f;

/// Labels kept for a garment type; background is always kept.
std::vector<int64_t> preserved_labels(GarmentType type);

PreservedMask build_preserved_mask(const torch::Tensor& parsing, GarmentType type);

/// Keypoint sigma at a given image height (3 px at height 64, proportional otherwise).
double default_keypoint_sigma(int64_t height);

/// One Gaussian heatmap per joint (10 x H x W), peak 1 at the joint, zero when invisible.
torch::Tensor rasterize_keypoints(const std::vector<Keypoint>& joints, ImageSize size, double sigma);

/// Composites the local condition image. Precedence: warped garment > preserved > background
/// > hole. Every output pixel is copied from exactly one source.
ConditionImage assemble_condition(const torch::Tensor& person, const torch::Tensor& warped_garment,
                                  const torch::Tensor& warped_cloth_mask, const PreservedMask& preserved,
                                  const torch::Tensor& parsing);

/// Person input of the warping module: preserved pixels of the person, holes elsewhere.
torch::Tensor preserved_person(const torch::Tensor& person, const PreservedMask& preserved);

} // namespace vton
