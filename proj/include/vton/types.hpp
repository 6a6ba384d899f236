#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <torch/torch.h>

namespace vton {

// Error categories map onto the CLI exit codes (2, 3, 4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

enum class GarmentType { upper, lower, dress };

GarmentType parse_garment_type(std::string_view s);
std::string to_string(GarmentType t);

struct ImageSize {
    int64_t height = 0;
    int64_t width = 0;
    bool operator==(const ImageSize&) const = default;
};

// Internal 9-label human parsing scheme.
namespace label {
inline constexpr int64_t background = 0;
inline constexpr int64_t head = 1;
inline constexpr int64_t torso_cloth = 2;
inline constexpr int64_t lower_cloth = 3;
inline constexpr int64_t left_arm = 4;
inline constexpr int64_t right_arm = 5;
inline constexpr int64_t left_leg = 6;
inline constexpr int64_t right_leg = 7;
inline constexpr int64_t center_body = 8;
inline constexpr int64_t count = 9;
} // namespace label

// Classes predicted by the global parsing block.
namespace parse7 {
inline constexpr int64_t background = 0;
inline constexpr int64_t cloth = 1;
inline constexpr int64_t left_arm = 2;
inline constexpr int64_t right_arm = 3;
inline constexpr int64_t center_body = 4;
inline constexpr int64_t left_leg = 5;
inline constexpr int64_t right_leg = 6;
inline constexpr int64_t count = 7;
} // namespace parse7

/// The five body parts the conditional post-processing gates independently.
enum class BodyPart { left_arm, right_arm, left_leg, right_leg, center_body };
inline constexpr std::array<BodyPart, 5> all_body_parts{
    BodyPart::left_arm, BodyPart::right_arm, BodyPart::left_leg, BodyPart::right_leg,
    BodyPart::center_body};

std::string to_string(BodyPart p);
int64_t parse7_channel(BodyPart p);
int64_t internal_label(BodyPart p);

/// Image tensors are CHW (or NCHW), float32, values in [-1, 1].
inline ImageSize spatial_size(const torch::Tensor& t) {
    return {t.size(-2), t.size(-1)};
}

/// Maps 9-label parsing (H x W, int64) to 7-class targets for a garment type:
/// the swapped garment becomes "cloth", non-body labels become background.
torch::Tensor to_parse7(const torch::Tensor& parsing, GarmentType type);

/// Binary (bool) mask of one body part from a 9-label parsing map.
torch::Tensor body_part_mask(const torch::Tensor& parsing, BodyPart part);

/// Binary (bool) mask of one body part from 7-class logits or labels.
torch::Tensor body_part_mask_from_parse7(const torch::Tensor& labels7, BodyPart part);

} // namespace vton
