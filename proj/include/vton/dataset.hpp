#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vton/synthdata.hpp"

namespace vton {

/// Dataset parse-palette value -> internal label. There is no default: the palette of a
/// real dataset has to be declared explicitly.
struct LabelMap {
    std::map<int64_t, int64_t> table;

    torch::Tensor apply(const torch::Tensor& raw) const;
    static LabelMap identity();
    static LabelMap from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

enum class Split { train, test };
enum class Pairing { paired, unpaired };

struct DatasetOptions {
    ImageSize size{64, 48};
    GarmentType garment_type = GarmentType::upper;
    LabelMap label_map;
    /// Lines of "person_basename garment_basename"; used in unpaired mode.
    std::filesystem::path unpaired_list;
};

/// Loads root/<split>/{image,cloth,image-parse,openpose-json,densepose}.
std::vector<Sample> load_dataset(const std::filesystem::path& root, Split split, Pairing pairing,
                                 const DatasetOptions& opt);

/// Writes samples in the same layout (parsing stored with internal labels) plus an
/// unpaired list pairing each person with the next sample's garment.
void write_dataset(const std::filesystem::path& root, Split split, const std::vector<Sample>& samples);

/// OpenPose JSON (COCO-18 or BODY-25) reduced to the 10 internal joints. Frontal view:
/// the person's right side appears on the image left.
std::vector<Keypoint> parse_openpose(const nlohmann::json& j);
nlohmann::json to_openpose(const std::vector<Keypoint>& joints);

std::string to_string(Split s);

} // namespace vton
