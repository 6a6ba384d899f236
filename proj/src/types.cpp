#include "vton/types.hpp"

namespace vton {

GarmentType parse_garment_type(std::string_view s) {
    if (s == "upper") return GarmentType::upper;
    if (s == "lower") return GarmentType::lower;
    if (s == "dress") return GarmentType::dress;
    throw ConfigError("unknown garment type '" + std::string(s) + "'");
}

std::string to_string(GarmentType t) {
    switch (t) {
    case GarmentType::upper: return "upper";
    case GarmentType::lower: return "lower";
    case GarmentType::dress: return "dress";
    }
    return "?";
}

std::string to_string(BodyPart p) {
    switch (p) {
    case BodyPart::left_arm: return "left_arm";
    case BodyPart::right_arm: return "right_arm";
    case BodyPart::left_leg: return "left_leg";
    case BodyPart::right_leg: return "right_leg";
    case BodyPart::center_body: return "center_body";
    }
    return "?";
}

int64_t parse7_channel(BodyPart p) {
    switch (p) {
    case BodyPart::left_arm: return parse7::left_arm;
    case BodyPart::right_arm: return parse7::right_arm;
    case BodyPart::left_leg: return parse7::left_leg;
    case BodyPart::right_leg: return parse7::right_leg;
    case BodyPart::center_body: return parse7::center_body;
    }
    return parse7::background;
}

int64_t internal_label(BodyPart p) {
    switch (p) {
    case BodyPart::left_arm: return label::left_arm;
    case BodyPart::right_arm: return label::right_arm;
    case BodyPart::left_leg: return label::left_leg;
    case BodyPart::right_leg: return label::right_leg;
    case BodyPart::center_body: return label::center_body;
    }
    return label::background;
}

torch::Tensor to_parse7(const torch::Tensor& parsing, GarmentType type) {
    // lookup indexed by internal label
    std::array<int64_t, label::count> lut{};
    lut[label::background] = parse7::background;
    lut[label::head] = parse7::background;
    lut[label::torso_cloth] = type == GarmentType::lower ? parse7::background : parse7::cloth;
    lut[label::lower_cloth] = type == GarmentType::upper ? parse7::background : parse7::cloth;
    lut[label::left_arm] = parse7::left_arm;
    lut[label::right_arm] = parse7::right_arm;
    lut[label::left_leg] = parse7::left_leg;
    lut[label::right_leg] = parse7::right_leg;
    lut[label::center_body] = parse7::center_body;
    auto table = torch::tensor(std::vector<int64_t>(lut.begin(), lut.end()), torch::kInt64);
    return table.index({parsing.to(torch::kInt64)});
}

torch::Tensor body_part_mask(const torch::Tensor& parsing, BodyPart part) {
    return parsing == internal_label(part);
}

torch::Tensor body_part_mask_from_parse7(const torch::Tensor& labels7, BodyPart part) {
    return labels7 == parse7_channel(part);
}

} // namespace vton
