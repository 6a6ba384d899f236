#include "vton/postproc.hpp"

#include <cmath>

namespace vton {

PartMasks PartMasks::from_parse7(const torch::Tensor& labels7) {
    PartMasks m;
    for (auto p : all_body_parts) m.masks[static_cast<size_t>(p)] = body_part_mask_from_parse7(labels7, p);
    return m;
}

PartMasks PartMasks::from_parsing(const torch::Tensor& parsing9) {
    PartMasks m;
    for (auto p : all_body_parts) m.masks[static_cast<size_t>(p)] = body_part_mask(parsing9, p);
    return m;
}

std::optional<double> overlap_ratio(const torch::Tensor& pred, const torch::Tensor& ref) {
    if (pred.sizes() != ref.sizes()) throw ContractError("overlap_ratio: mask shapes differ");
    auto p = pred.to(torch::kBool);
    const int64_t np = p.sum().item<int64_t>();
    if (np == 0) return std::nullopt;
    const int64_t both = (p & ref.to(torch::kBool)).sum().item<int64_t>();
    return static_cast<double>(both) / static_cast<double>(np);
}

bool PartOverlapReport::any_applied() const {
    for (const auto& p : parts) {
        if (p.applied) return true;
    }
    return false;
}

nlohmann::json PartOverlapReport::to_json() const {
    nlohmann::json j;
    j["threshold"] = threshold;
    j["equality_mode"] = equality_mode;
    j["any_applied"] = any_applied();
    j["parts"] = nlohmann::json::array();
    for (const auto& p : parts) {
        j["parts"].push_back({{"part", to_string(p.part)},
                              {"ratio", p.ratio ? nlohmann::json(*p.ratio) : nlohmann::json(nullptr)},
                              {"applied", p.applied},
                              {"pred_pixels", p.pred_pixels},
                              {"ref_pixels", p.ref_pixels},
                              {"overlap_pixels", p.overlap_pixels}});
    }
    return j;
}

void PostprocOptions::validate() const {
    if (!std::isfinite(threshold) || threshold < 0.0 || threshold > 1.0) {
        throw ConfigError("post-processing threshold must lie in [0, 1]");
    }
}

bool PostprocOptions::passes(double ratio) const { return equality_mode ? ratio >= threshold : ratio > threshold; }

namespace {

torch::Tensor copy_where(const torch::Tensor& dst, const torch::Tensor& src, const torch::Tensor& mask) {
    if (dst.sizes() != src.sizes()) throw ContractError("post-processing: image shapes differ");
    return torch::where(mask.unsqueeze(mask.dim() - 2), src, dst);
}

} // namespace

torch::Tensor unconditional_post(const torch::Tensor& condition, const torch::Tensor& person, const PartMasks& pred,
                                 const PartMasks& ref) {
    auto keep = torch::zeros_like(pred.masks[0], torch::kBool);
    for (auto p : all_body_parts) keep = keep | (pred[p] & ref[p]);
    return copy_where(condition, person, keep);
}

PartOverlapReport overlap_report(const PartMasks& pred, const PartMasks& ref, const PostprocOptions& opt) {
    opt.validate();
    PartOverlapReport report;
    report.threshold = opt.threshold;
    report.equality_mode = opt.equality_mode;
    for (auto p : all_body_parts) {
        PartOverlap po;
        po.part = p;
        po.pred_pixels = pred[p].sum().item<int64_t>();
        po.ref_pixels = ref[p].sum().item<int64_t>();
        po.overlap_pixels = (pred[p] & ref[p]).sum().item<int64_t>();
        if (po.pred_pixels > 0) {
            po.ratio = static_cast<double>(po.overlap_pixels) / static_cast<double>(po.pred_pixels);
            po.applied = opt.passes(*po.ratio);
        }
        report.parts.push_back(po);
    }
    return report;
}

ConditionalResult conditional_post(const torch::Tensor& output, const torch::Tensor& person, const PartMasks& pred,
                                   const PartMasks& ref, const PostprocOptions& opt) {
    ConditionalResult r;
    r.report = overlap_report(pred, ref, opt);
    auto apply = torch::zeros_like(pred.masks[0], torch::kBool);
    for (const auto& po : r.report.parts) {
        if (po.applied) apply = apply | (pred[po.part] & ref[po.part]);
    }
    r.image = copy_where(output, person, apply);
    return r;
}

double applying_rate(const std::vector<PartOverlapReport>& reports) {
    if (reports.empty()) return 0.0;
    int64_t n = 0;
    for (const auto& r : reports) n += r.any_applied() ? 1 : 0;
    return 100.0 * static_cast<double>(n) / static_cast<double>(reports.size());
}

ConditionalResult plugin_post(const torch::Tensor& external_image, const torch::Tensor& person,
                              const torch::Tensor& pred_parsing9, const torch::Tensor& ref_parsing9,
                              const PostprocOptions& opt) {
    return conditional_post(external_image, person, PartMasks::from_parsing(pred_parsing9),
                            PartMasks::from_parsing(ref_parsing9), opt);
}

} // namespace vton
