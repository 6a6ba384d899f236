#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "vton/types.hpp"

namespace vton {

/// Reads a PNG/JPEG as a 3 x H x W float tensor in [-1, 1] (RGB order).
torch::Tensor load_image(const std::filesystem::path& path);

/// Reads a single-channel label image (PNG) as H x W int64.
torch::Tensor load_label_map(const std::filesystem::path& path);

/// Writes a 3 x H x W tensor in [-1, 1] as an 8-bit PNG.
void save_image(const std::filesystem::path& path, const torch::Tensor& image);

/// Writes an H x W integer tensor as an 8-bit single-channel PNG.
void save_label_map(const std::filesystem::path& path, const torch::Tensor& labels);

/// Quantizes [-1, 1] to the 8-bit grid PNG would store (round trip of save/load).
torch::Tensor quantize_u8(const torch::Tensor& image);

/// Tiles equally-sized 3 x H x W images into a grid with `cols` columns.
torch::Tensor contact_sheet(const std::vector<torch::Tensor>& images, int64_t cols);

/// Resizes a 3 x H x W image (bilinear) or label map (nearest) to `size`.
torch::Tensor resize_image(const torch::Tensor& image, ImageSize size);
torch::Tensor resize_labels(const torch::Tensor& labels, ImageSize size);

} // namespace vton
