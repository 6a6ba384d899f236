#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace vton {

/// Versioned parameter container shared by the warping and try-on modules.
///
/// Layout: 8-byte magic "VTONCKPT", uint32 format version, uint64 manifest length,
/// the JSON manifest (config echo, metadata, tensor names/shapes/offsets), then the
/// tensor blobs as little-endian float32 in row-major order.
struct Checkpoint {
    static constexpr uint32_t format_version = 1;

    nlohmann::json config = nlohmann::json::object();
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, torch::Tensor> tensors;

    void put_module(const std::string& prefix, const torch::nn::Module& m);
    /// Copies stored tensors into the module; throws DataError on missing names or shape
    /// mismatches.
    void load_module(const std::string& prefix, torch::nn::Module& m) const;
    bool has_prefix(const std::string& prefix) const;

    void put_adam(const std::string& prefix, torch::optim::Adam& opt);
    void load_adam(const std::string& prefix, torch::optim::Adam& opt) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace vton
