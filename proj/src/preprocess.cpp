#include "vton/preprocess.hpp"

#include <cmath>

namespace vton {

std::vector<int64_t> preserved_labels(GarmentType type) {
    switch (type) {
    case GarmentType::upper:
        return {label::background, label::head, label::lower_cloth, label::left_leg, label::right_leg};
    case GarmentType::lower:
        return {label::background, label::head, label::torso_cloth, label::left_arm, label::right_arm};
    case GarmentType::dress:
        return {label::background, label::head};
    }
    throw ConfigError("unknown garment type");
}

PreservedMask build_preserved_mask(const torch::Tensor& parsing, GarmentType type) {
    auto mask = torch::zeros(parsing.sizes(), torch::kBool);
    for (int64_t l : preserved_labels(type)) mask |= parsing == l;
    return {mask, type};
}

double default_keypoint_sigma(int64_t height) { return 3.0 * static_cast<double>(height) / 64.0; }

torch::Tensor rasterize_keypoints(const std::vector<Keypoint>& joints, ImageSize size, double sigma) {
    auto out = torch::zeros({static_cast<int64_t>(num_joints), size.height, size.width});
    auto ys = torch::arange(size.height, torch::kFloat32).view({-1, 1});
    auto xs = torch::arange(size.width, torch::kFloat32).view({1, -1});
    for (size_t k = 0; k < joints.size() && k < num_joints; ++k) {
        const auto& j = joints[k];
        if (!j.visible) continue;
        // centred on the nearest pixel so the peak is exactly 1
        const double jx = std::round(j.x), jy = std::round(j.y);
        if (jx < 0 || jy < 0 || jx >= static_cast<double>(size.width) ||
            jy >= static_cast<double>(size.height)) {
            continue;
        }
        auto d2 = (xs - jx).pow(2) + (ys - jy).pow(2);
        out[static_cast<int64_t>(k)] = torch::exp(-d2 / (2.0 * sigma * sigma));
    }
    return out;
}

ConditionImage assemble_condition(const torch::Tensor& person, const torch::Tensor& warped_garment,
                                  const torch::Tensor& warped_cloth_mask, const PreservedMask& preserved,
                                  const torch::Tensor& parsing) {
    const auto size = spatial_size(person);
    if (spatial_size(warped_garment) != size || spatial_size(warped_cloth_mask) != size ||
        spatial_size(preserved.mask) != size || spatial_size(parsing) != size ||
        person.size(0) != warped_garment.size(0)) {
        throw ContractError("assemble_condition: input shapes disagree");
    }
    auto prov = torch::full({size.height, size.width}, static_cast<int64_t>(Provenance::hole), torch::kUInt8);
    prov.masked_fill_(parsing == label::background, static_cast<int64_t>(Provenance::background));
    prov.masked_fill_(preserved.mask, static_cast<int64_t>(Provenance::preserved));
    prov.masked_fill_(warped_cloth_mask.to(torch::kBool), static_cast<int64_t>(Provenance::warped_garment));

    auto img = torch::full_like(person, hole_fill);
    auto from_person = (prov == static_cast<int64_t>(Provenance::preserved)) |
                       (prov == static_cast<int64_t>(Provenance::background));
    img = torch::where(from_person.unsqueeze(0), person, img);
    img = torch::where((prov == static_cast<int64_t>(Provenance::warped_garment)).unsqueeze(0),
                       warped_garment, img);
    return {img, prov};
}

torch::Tensor preserved_person(const torch::Tensor& person, const PreservedMask& preserved) {
    return torch::where(preserved.mask.unsqueeze(0), person, torch::full_like(person, hole_fill));
}

} // namespace vton
