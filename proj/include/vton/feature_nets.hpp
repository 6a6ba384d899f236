#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace vton {

/// Multi-stage feature extractor used by perceptual losses and feature metrics.
using FeatureExtractor = std::function<std::vector<torch::Tensor>(const torch::Tensor&)>;

/// Fixed, seed-pinned 4-stage conv extractor standing in for VGG. Weights are drawn from
/// a private generator, so construction does not touch the global RNG; parameters are frozen.
class PerceptualNetImpl : public torch::nn::Module {
public:
    explicit PerceptualNetImpl(uint64_t seed = 1234, std::vector<int64_t> widths = {16, 32, 64, 64});
    std::vector<torch::Tensor> forward(const torch::Tensor& x);
    /// Global-average pooled concatenation of all stages (N x sum(widths)).
    torch::Tensor pooled(const torch::Tensor& x);
    int64_t feature_dim() const;

    torch::nn::ModuleList stages{nullptr};

private:
    std::vector<int64_t> widths_;
};
TORCH_MODULE(PerceptualNet);

FeatureExtractor as_extractor(PerceptualNet net);

/// Strided patch discriminator: four 4x4 conv layers (three of stride 2) and a 1-channel head.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    PatchDiscriminatorImpl(int64_t in_channels, int64_t base = 32);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Frozen garment image encoder producing the global condition vector.
class GarmentEncoder {
public:
    virtual ~GarmentEncoder() = default;
    virtual std::string id() const = 0;
    virtual int64_t dim() const = 0;
    /// garments: N x 3 x H x W; names identify items for file-backed encoders.
    virtual torch::Tensor encode(const torch::Tensor& garments, const std::vector<std::string>& names) = 0;
    /// Hash of all encoder parameters (frozen-encoder contract checks).
    virtual uint64_t parameter_hash() const = 0;
};

class ConvEncoderImpl : public torch::nn::Module {
public:
    ConvEncoderImpl(int64_t dim, uint64_t seed);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Sequential body{nullptr};
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ConvEncoder);

/// Seed-pinned random conv encoder ("conv<dim>").
class ConvGarmentEncoder final : public GarmentEncoder {
public:
    ConvGarmentEncoder(int64_t dim, uint64_t seed);
    std::string id() const override;
    int64_t dim() const override { return dim_; }
    torch::Tensor encode(const torch::Tensor& garments, const std::vector<std::string>& names) override;
    uint64_t parameter_hash() const override;

private:
    int64_t dim_;
    uint64_t seed_;
    ConvEncoder net_{nullptr};
};

/// Precomputed embeddings (e.g. from a real CLIP encoder) read from a JSON object
/// mapping item name to a vector.
class FileGarmentEncoder final : public GarmentEncoder {
public:
    explicit FileGarmentEncoder(const std::filesystem::path& path);
    std::string id() const override { return "file:" + path_.string(); }
    int64_t dim() const override { return dim_; }
    torch::Tensor encode(const torch::Tensor& garments, const std::vector<std::string>& names) override;
    uint64_t parameter_hash() const override;

private:
    std::filesystem::path path_;
    int64_t dim_ = 0;
    std::map<std::string, std::vector<float>> table_;
};

/// "conv512" style ids build the seeded conv encoder; "file:<path>" loads embeddings.
/// Unknown ids throw ConfigError naming the id.
std::shared_ptr<GarmentEncoder> make_garment_encoder(const std::string& id, uint64_t seed);

/// FNV-1a over the raw bytes of all parameters and buffers.
uint64_t parameter_hash(const torch::nn::Module& m);

/// Overwrites every conv/linear weight with He-normal draws from a private generator
/// and zeroes biases.
void seeded_init(torch::nn::Module& m, uint64_t seed);

void freeze(torch::nn::Module& m);

} // namespace vton
