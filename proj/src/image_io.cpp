#include "vton/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace vton {

torch::Tensor load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

torch::Tensor load_label_map(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DataError("cannot read label map " + path.string());
    if (m.channels() != 1) {
        // palette PNGs decode to color; labels must be stored as indices
        throw DataError("label map " + path.string() + " is not single-channel");
    }
    cv::Mat m32;
    m.convertTo(m32, CV_32S);
    return torch::from_blob(m32.data, {m32.rows, m32.cols}, torch::kInt32).to(torch::kInt64).clone();
}

torch::Tensor quantize_u8(const torch::Tensor& image) {
    return image.clamp(-1.0, 1.0).add(1.0).mul(127.5).round().div(127.5).sub(1.0);
}

void save_image(const std::filesystem::path& path, const torch::Tensor& image) {
    auto u8 = image.detach().cpu().clamp(-1.0, 1.0).add(1.0).mul(127.5).round().to(torch::kUInt8);
    u8 = u8.permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC3, u8.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

void save_label_map(const std::filesystem::path& path, const torch::Tensor& labels) {
    auto u8 = labels.detach().cpu().to(torch::kUInt8).contiguous();
    cv::Mat m(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw DataError("cannot write label map " + path.string());
}

torch::Tensor contact_sheet(const std::vector<torch::Tensor>& images, int64_t cols) {
    if (images.empty()) return torch::zeros({3, 1, 1});
    const int64_t h = images.front().size(1), w = images.front().size(2);
    const int64_t n = static_cast<int64_t>(images.size());
    cols = std::max<int64_t>(1, std::min(cols, n));
    const int64_t rows = (n + cols - 1) / cols;
    auto sheet = torch::full({3, rows * h, cols * w}, -1.0f);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t r = i / cols, c = i % cols;
        sheet.slice(1, r * h, (r + 1) * h).slice(2, c * w, (c + 1) * w).copy_(images[static_cast<size_t>(i)]);
    }
    return sheet;
}

torch::Tensor resize_image(const torch::Tensor& image, ImageSize size) {
    if (spatial_size(image) == size) return image;
    namespace F = torch::nn::functional;
    return F::interpolate(image.unsqueeze(0), F::InterpolateFuncOptions()
                                                  .size(std::vector<int64_t>{size.height, size.width})
                                                  .mode(torch::kBilinear)
                                                  .align_corners(false))
        .squeeze(0);
}

torch::Tensor resize_labels(const torch::Tensor& labels, ImageSize size) {
    if (spatial_size(labels) == size) return labels;
    namespace F = torch::nn::functional;
    auto f = labels.to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
    return F::interpolate(f, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{size.height, size.width})
                                 .mode(torch::kNearest))
        .squeeze(0)
        .squeeze(0)
        .to(labels.scalar_type());
}

} // namespace vton
