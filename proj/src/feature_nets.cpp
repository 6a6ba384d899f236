#include "vton/feature_nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <ATen/CPUGeneratorImpl.h>
#include <nlohmann/json.hpp>

#include "vton/types.hpp"

namespace vton {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride, int64_t pad) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

} // namespace

void seeded_init(torch::nn::Module& m, uint64_t seed) {
    torch::NoGradGuard g;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    for (auto& p : m.named_parameters(true)) {
        auto& t = p.value();
        if (p.key().ends_with("bias")) {
            t.zero_();
        } else if (t.dim() >= 2) {
            const double fan_in = static_cast<double>(t.numel() / t.size(0));
            t.copy_(torch::randn(t.sizes(), gen, t.options()) * std::sqrt(2.0 / fan_in));
        }
    }
}

void freeze(torch::nn::Module& m) {
    for (auto& p : m.parameters(true)) p.set_requires_grad(false);
    m.eval();
}

uint64_t parameter_hash(const torch::nn::Module& m) {
    uint64_t h = 1469598103934665603ull;
    auto feed = [&](const torch::Tensor& t) {
        auto c = t.detach().to(torch::kCPU).contiguous();
        const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
        const size_t n = static_cast<size_t>(c.numel()) * c.element_size();
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& p : m.parameters(true)) feed(p);
    for (const auto& b : m.buffers(true)) feed(b);
    return h;
}

PerceptualNetImpl::PerceptualNetImpl(uint64_t seed, std::vector<int64_t> widths) : widths_(std::move(widths)) {
    stages = register_module("stages", nn::ModuleList());
    int64_t prev = 3;
    for (size_t i = 0; i < widths_.size(); ++i) {
        const int64_t c = widths_[i];
        stages->push_back(nn::Sequential(conv(prev, c, 3, i == 0 ? 1 : 2, 1), nn::ReLU(), conv(c, c, 3, 1, 1),
                                         nn::ReLU()));
        prev = c;
    }
    seeded_init(*this, seed);
    freeze(*this);
}

std::vector<torch::Tensor> PerceptualNetImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> out;
    auto h = x;
    for (auto& s : *stages) {
        h = s->as<nn::Sequential>()->forward(h);
        out.push_back(h);
    }
    return out;
}

torch::Tensor PerceptualNetImpl::pooled(const torch::Tensor& x) {
    std::vector<torch::Tensor> parts;
    for (auto& f : forward(x)) parts.push_back(f.mean({2, 3}));
    return torch::cat(parts, 1);
}

int64_t PerceptualNetImpl::feature_dim() const {
    int64_t d = 0;
    for (auto w : widths_) d += w;
    return d;
}

FeatureExtractor as_extractor(PerceptualNet net) {
    return [net](const torch::Tensor& x) mutable { return net->forward(x); };
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int64_t in_channels, int64_t base) {
    auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
    body = register_module(
        "body", nn::Sequential(conv(in_channels, base, 4, 2, 1), lrelu(), conv(base, 2 * base, 4, 2, 1), lrelu(),
                               conv(2 * base, 4 * base, 4, 2, 1), lrelu(), conv(4 * base, 4 * base, 3, 1, 1),
                               lrelu(), conv(4 * base, 1, 3, 1, 1)));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return body->forward(x); }

ConvEncoderImpl::ConvEncoderImpl(int64_t dim, uint64_t seed) {
    body = register_module("body", nn::Sequential(conv(3, 32, 3, 2, 1), nn::ReLU(), conv(32, 64, 3, 2, 1), nn::ReLU(),
                                                  conv(64, 128, 3, 2, 1), nn::ReLU(),
                                                  nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({2, 2}))));
    head = register_module("head", nn::Linear(128 * 4, dim));
    seeded_init(*this, seed);
    freeze(*this);
}

torch::Tensor ConvEncoderImpl::forward(const torch::Tensor& x) {
    auto f = body->forward(x).flatten(1);
    auto e = head(f);
    return e / (e.norm(2, 1, true) + 1e-6) * std::sqrt(static_cast<double>(e.size(1)));
}

ConvGarmentEncoder::ConvGarmentEncoder(int64_t dim, uint64_t seed) : dim_(dim), seed_(seed), net_(dim, seed) {}

std::string ConvGarmentEncoder::id() const { return "conv" + std::to_string(dim_); }

torch::Tensor ConvGarmentEncoder::encode(const torch::Tensor& garments, const std::vector<std::string>&) {
    torch::NoGradGuard g;
    auto x = garments.dim() == 3 ? garments.unsqueeze(0) : garments;
    return net_->forward(x).detach();
}

uint64_t ConvGarmentEncoder::parameter_hash() const { return vton::parameter_hash(*net_); }

FileGarmentEncoder::FileGarmentEncoder(const std::filesystem::path& path) : path_(path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("garment encoder 'file:" + path.string() + "' not found");
    const auto j = nlohmann::json::parse(is);
    for (const auto& [name, v] : j.items()) {
        auto vec = v.get<std::vector<float>>();
        if (dim_ == 0) dim_ = static_cast<int64_t>(vec.size());
        if (static_cast<int64_t>(vec.size()) != dim_) {
            throw DataError("embedding for '" + name + "' has inconsistent dimension");
        }
        table_[name] = std::move(vec);
    }
    if (table_.empty()) throw DataError("embedding file " + path.string() + " is empty");
}

torch::Tensor FileGarmentEncoder::encode(const torch::Tensor&, const std::vector<std::string>& names) {
    std::vector<torch::Tensor> rows;
    for (const auto& n : names) {
        auto it = table_.find(n);
        if (it == table_.end()) throw DataError("no embedding for '" + n + "' in " + path_.string());
        rows.push_back(torch::tensor(it->second));
    }
    return torch::stack(rows);
}

uint64_t FileGarmentEncoder::parameter_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : table_) {
        for (unsigned char c : k) h = (h ^ c) * 1099511628211ull;
        for (float f : v) {
            uint32_t bits;
            std::memcpy(&bits, &f, sizeof(bits));
            h = (h ^ bits) * 1099511628211ull;
        }
    }
    return h;
}

std::shared_ptr<GarmentEncoder> make_garment_encoder(const std::string& id, uint64_t seed) {
    if (id.rfind("file:", 0) == 0) return std::make_shared<FileGarmentEncoder>(id.substr(5));
    if (id.rfind("conv", 0) == 0 && id.size() > 4) {
        try {
            size_t used = 0;
            const auto dim = std::stoll(id.substr(4), &used);
            if (used == id.size() - 4 && dim > 0) return std::make_shared<ConvGarmentEncoder>(dim, seed);
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("unknown garment encoder '" + id + "'");
}

} // namespace vton
