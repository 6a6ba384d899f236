#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "vton/feature_nets.hpp"

namespace vton {

/// Gaussian-window SSIM (11x11, sigma 1.5, valid region) with dynamic range 2. Images are
/// [N x] C x H x W in [-1, 1]; the map is averaged over channels and the batch.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// SSIM of single-channel maps (N x 1 x H x W) with an explicit dynamic range.
double ssim_gray(const torch::Tensor& a, const torch::Tensor& b, double dynamic_range);

torch::Tensor gaussian_window(int64_t size = 11, double sigma = 1.5);

/// Mean absolute error over masked pixels (mask broadcast over channels); empty mask gives 0.
double masked_l1(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask);

/// Frechet distance between Gaussian fits of two feature sets (rows are samples).
double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

/// Unbiased squared MMD with the cubic polynomial kernel (k(x,y) = (x.y/d + 1)^3).
double kernel_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

/// Image-set embedding used for distributional metrics.
using PooledExtractor = std::function<torch::Tensor(const torch::Tensor&)>;

PooledExtractor pooled_extractor(PerceptualNet net);

double feature_distance(const torch::Tensor& set_a, const torch::Tensor& set_b, const PooledExtractor& extractor);

/// Perceptual distance: per stage, channel-normalized features, squared difference averaged,
/// summed over stages. Batch mean.
double lpips_proxy(const torch::Tensor& a, const torch::Tensor& b, PerceptualNet& net);

struct TimingStats {
    int64_t batch = 0;
    int64_t repeats = 0;
    int64_t images = 0;
    double mean_per_batch = 0.0; // seconds
    double std_per_batch = 0.0;
    double mean_per_image = 0.0;
    double mean_per_pass = 0.0;
    double std_per_pass = 0.0;
    nlohmann::json to_json() const;
};

/// Runs one untimed warm-up pass over the pre-staged batches, then `repeats` timed passes.
/// run(i) processes batch i; batch_images[i] is its size. batch_size is the nominal size reported.
TimingStats timing_bench(const std::function<void(size_t)>& run, const std::vector<int64_t>& batch_images,
                         int64_t batch_size, int64_t repeats);

struct EvalReport {
    std::string name;
    std::string pairing;
    std::string extractor;
    int64_t images = 0;
    std::optional<double> ssim, l1, lpips; // paired only
    double fid = 0.0;
    double kid = 0.0;
    std::optional<TimingStats> timing;
    nlohmann::json to_json() const;
};

/// Rows laid out as method | LPIPS | SSIM | FID | KID (x100) | T(s).
std::string render_markdown_table(const std::vector<EvalReport>& rows);
std::string render_csv_table(const std::vector<EvalReport>& rows);

} // namespace vton
