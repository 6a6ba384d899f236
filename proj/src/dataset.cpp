#include "vton/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "vton/image_io.hpp"

namespace vton {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

torch::Tensor LabelMap::apply(const torch::Tensor& raw) const {
    auto flat = raw.to(torch::kInt64).contiguous();
    auto out = torch::empty_like(flat);
    const int64_t* src = flat.data_ptr<int64_t>();
    int64_t* dst = out.data_ptr<int64_t>();
    std::set<int64_t> unknown;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        auto it = table.find(src[i]);
        if (it == table.end()) {
            unknown.insert(src[i]);
            continue;
        }
        dst[i] = it->second;
    }
    if (!unknown.empty()) {
        std::ostringstream msg;
        msg << "unknown parse label(s):";
        for (int64_t v : unknown) msg << ' ' << v;
        throw DataError(msg.str());
    }
    return out;
}

LabelMap LabelMap::identity() {
    LabelMap m;
    for (int64_t i = 0; i < label::count; ++i) m.table[i] = i;
    return m;
}

LabelMap LabelMap::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("label_map must be an object of \"raw\": internal pairs");
    LabelMap m;
    for (const auto& [k, v] : j.items()) {
        int64_t raw = 0;
        try {
            raw = std::stoll(k);
        } catch (const std::exception&) {
            throw ConfigError("label_map key '" + k + "' is not an integer");
        }
        if (!v.is_number_integer() || v.get<int64_t>() < 0 || v.get<int64_t>() >= label::count) {
            throw ConfigError("label_map value for '" + k + "' must be an internal label 0..8");
        }
        m.table[raw] = v.get<int64_t>();
    }
    return m;
}

nlohmann::json LabelMap::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : table) j[std::to_string(k)] = v;
    return j;
}

namespace {

// 10 internal joints -> COCO-18 / BODY-25 indices (frontal: person-right is image-left).
constexpr std::array<int, num_joints> coco18{0, 1, 2, 5, 3, 6, 4, 7, 8, 11};
constexpr std::array<int, num_joints> body25{0, 1, 2, 5, 3, 6, 4, 7, 9, 12};

std::optional<fs::path> find_with_stem(const fs::path& dir, const std::string& stem) {
    if (!fs::is_directory(dir)) return std::nullopt;
    for (const auto& ext : {".png", ".jpg", ".jpeg", ".json"}) {
        fs::path p = dir / (stem + ext);
        if (fs::exists(p)) return p;
    }
    return std::nullopt;
}

std::string stem_of(const std::string& name) { return fs::path(name).stem().string(); }

std::vector<Keypoint> scale_keypoints(std::vector<Keypoint> kps, ImageSize from, ImageSize to) {
    const double sx = static_cast<double>(to.width) / static_cast<double>(from.width);
    const double sy = static_cast<double>(to.height) / static_cast<double>(from.height);
    for (auto& k : kps) {
        k.x *= sx;
        k.y *= sy;
    }
    return kps;
}

struct Item {
    torch::Tensor person, parsing_raw, densepose;
    std::vector<Keypoint> keypoints;
};

Item load_person(const fs::path& dir, const std::string& stem, const DatasetOptions& opt) {
    auto require = [&](const char* sub, const std::string& s) {
        auto p = find_with_stem(dir / sub, s);
        if (!p && std::string(sub) == "openpose-json") p = find_with_stem(dir / sub, s + "_keypoints");
        if (!p) throw DataError(std::string("missing ") + sub + " file for item \"" + s + "\"");
        return *p;
    };
    Item it;
    it.person = load_image(require("image", stem));
    const ImageSize native = spatial_size(it.person);
    it.parsing_raw = load_label_map(require("image-parse", stem));
    it.densepose = load_image(require("densepose", stem));
    std::ifstream js(require("openpose-json", stem));
    nlohmann::json j;
    try {
        js >> j;
    } catch (const std::exception& e) {
        throw DataError("malformed keypoint JSON for item \"" + stem + "\": " + e.what());
    }
    it.keypoints = scale_keypoints(parse_openpose(j), native, opt.size);
    it.person = resize_image(it.person, opt.size);
    it.parsing_raw = resize_labels(it.parsing_raw, opt.size);
    it.densepose = resize_image(it.densepose, opt.size);
    return it;
}

Sample assemble(const std::string& person_stem, const std::string& cloth_stem, Item it,
                torch::Tensor garment, bool paired, const DatasetOptions& opt) {
    Sample s;
    s.name = paired ? person_stem : person_stem + "__" + cloth_stem;
    s.garment_type = opt.garment_type;
    try {
        s.parsing = opt.label_map.apply(it.parsing_raw);
    } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + " in item \"" + person_stem + "\"");
    }
    s.person = it.person;
    s.garment = resize_image(garment, opt.size);
    s.densepose = it.densepose;
    s.keypoints = std::move(it.keypoints);
    if (paired) s.gt_tryon = s.person;
    s.cloth_mask = to_parse7(s.parsing, opt.garment_type) == parse7::cloth;
    s.mark_mask = torch::zeros({opt.size.height, opt.size.width}, torch::kBool);
    return s;
}

} // namespace

std::vector<Keypoint> parse_openpose(const nlohmann::json& j) {
    std::vector<Keypoint> out(num_joints);
    if (!j.contains("people") || j["people"].empty()) return out; // all invisible
    const auto& flat = j["people"][0].at("pose_keypoints_2d");
    const size_t n = flat.size() / 3;
    const auto& index = n >= 25 ? body25 : coco18;
    for (size_t k = 0; k < num_joints; ++k) {
        const size_t src = static_cast<size_t>(index[k]);
        if (src >= n) continue;
        const double conf = flat[src * 3 + 2].get<double>();
        out[k] = {flat[src * 3].get<double>(), flat[src * 3 + 1].get<double>(), conf > 0.0};
    }
    return out;
}

nlohmann::json to_openpose(const std::vector<Keypoint>& joints) {
    std::vector<double> flat(18 * 3, 0.0);
    for (size_t k = 0; k < joints.size() && k < num_joints; ++k) {
        const size_t dst = static_cast<size_t>(coco18[k]);
        flat[dst * 3] = joints[k].x;
        flat[dst * 3 + 1] = joints[k].y;
        flat[dst * 3 + 2] = joints[k].visible ? 1.0 : 0.0;
    }
    return {{"version", 1.3}, {"people", {{{"pose_keypoints_2d", flat}}}}};
}

std::vector<Sample> load_dataset(const fs::path& root, Split split, Pairing pairing,
                                 const DatasetOptions& opt) {
    const fs::path dir = root / to_string(split);
    if (!fs::is_directory(dir / "image")) throw DataError("no image/ directory under " + dir.string());
    if (opt.label_map.table.empty()) throw ConfigError("dataset loading requires an explicit label_map");

    std::vector<Sample> out;
    if (pairing == Pairing::paired) {
        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(dir / "image")) {
            if (e.is_regular_file()) stems.push_back(e.path().stem().string());
        }
        std::sort(stems.begin(), stems.end());
        for (const auto& stem : stems) {
            auto cloth = find_with_stem(dir / "cloth", stem);
            if (!cloth) throw DataError("missing cloth file for item \"" + stem + "\"");
            Item it = load_person(dir, stem, opt);
            out.push_back(assemble(stem, stem, std::move(it), load_image(*cloth), true, opt));
        }
        return out;
    }

    fs::path list = opt.unpaired_list.empty() ? root / (to_string(split) + "_pairs.txt") : opt.unpaired_list;
    std::ifstream in(list);
    if (!in) throw DataError("cannot open unpaired list " + list.string());
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string person, cloth;
        if (!(ls >> person >> cloth)) continue;
        const std::string ps = stem_of(person), cs = stem_of(cloth);
        auto cloth_path = find_with_stem(dir / "cloth", cs);
        if (!cloth_path) throw DataError("missing cloth file for item \"" + cs + "\"");
        Item it = load_person(dir, ps, opt);
        out.push_back(assemble(ps, cs, std::move(it), load_image(*cloth_path), false, opt));
    }
    return out;
}

void write_dataset(const fs::path& root, Split split, const std::vector<Sample>& samples) {
    const fs::path dir = root / to_string(split);
    for (const char* sub : {"image", "cloth", "image-parse", "openpose-json", "densepose"}) {
        fs::create_directories(dir / sub);
    }
    std::ofstream pairs(root / (to_string(split) + "_pairs.txt"));
    for (size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        // paired layout: the person wears the in-shop garment
        const torch::Tensor& wearer = s.gt_tryon ? *s.gt_tryon : s.person;
        save_image(dir / "image" / (s.name + ".png"), wearer);
        save_image(dir / "cloth" / (s.name + ".png"), s.garment);
        save_label_map(dir / "image-parse" / (s.name + ".png"), s.parsing);
        save_image(dir / "densepose" / (s.name + ".png"), s.densepose);
        std::ofstream js(dir / "openpose-json" / (s.name + "_keypoints.json"));
        js << to_openpose(s.keypoints).dump();
        pairs << s.name << ".png " << samples[(i + 1) % samples.size()].name << ".png\n";
    }
}

} // namespace vton
