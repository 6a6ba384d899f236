#pragma once

#include <array>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "vton/types.hpp"

namespace vton {

/// One bool H x W mask per body part, in all_body_parts order.
struct PartMasks {
    std::array<torch::Tensor, 5> masks;
    const torch::Tensor& operator[](BodyPart p) const { return masks[static_cast<size_t>(p)]; }

    static PartMasks from_parse7(const torch::Tensor& labels7);
    static PartMasks from_parsing(const torch::Tensor& parsing9);
};

/// |pred AND ref| / |pred|; nullopt when pred is empty.
std::optional<double> overlap_ratio(const torch::Tensor& pred, const torch::Tensor& ref);

struct PartOverlap {
    BodyPart part = BodyPart::left_arm;
    std::optional<double> ratio;
    bool applied = false;
    int64_t pred_pixels = 0; // |S1_bp|
    int64_t ref_pixels = 0;  // |S_bp|
    int64_t overlap_pixels = 0; // |S'_bp|
};

struct PartOverlapReport {
    std::vector<PartOverlap> parts;
    double threshold = 0.8;
    bool equality_mode = false;

    bool any_applied() const;
    nlohmann::json to_json() const;
};

struct PostprocOptions {
    double threshold = 0.8;
    /// Compare with >= instead of >, so threshold 1 means "exact overlap only".
    bool equality_mode = false;
    void validate() const;
    bool passes(double ratio) const;
};

/// I'_c: I_c with the union over parts of (pred part AND ref part) copied from the person.
torch::Tensor unconditional_post(const torch::Tensor& condition, const torch::Tensor& person, const PartMasks& pred,
                                 const PartMasks& ref);

/// Per-part ratios and gate decisions without touching any image.
PartOverlapReport overlap_report(const PartMasks& pred, const PartMasks& ref, const PostprocOptions& opt);

struct ConditionalResult {
    torch::Tensor image;
    PartOverlapReport report;
};

/// Per part: when the overlap ratio passes the threshold, the overlap pixels are copied from
/// the person into the output; other parts leave the output untouched.
ConditionalResult conditional_post(const torch::Tensor& output, const torch::Tensor& person, const PartMasks& pred,
                                   const PartMasks& ref, const PostprocOptions& opt);

/// Percentage of reports with at least one applied part.
double applying_rate(const std::vector<PartOverlapReport>& reports);

/// Conditional post-processing of an image produced by any external method.
ConditionalResult plugin_post(const torch::Tensor& external_image, const torch::Tensor& person,
                              const torch::Tensor& pred_parsing9, const torch::Tensor& ref_parsing9,
                              const PostprocOptions& opt);

} // namespace vton
