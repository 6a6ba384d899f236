#include "vton/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vton/types.hpp"

namespace vton {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char magic[8] = {'V', 'T', 'O', 'N', 'C', 'K', 'P', 'T'};

template <class T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("truncated checkpoint header");
    return v;
}

} // namespace

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters(true)) tensors[prefix + p.key()] = p.value().detach().clone();
    for (const auto& b : m.named_buffers(true)) tensors[prefix + b.key()] = b.value().detach().clone();
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& m) const {
    torch::NoGradGuard guard;
    auto assign = [&](const std::string& name, torch::Tensor& dst) {
        auto it = tensors.find(prefix + name);
        if (it == tensors.end()) throw DataError("checkpoint is missing tensor '" + prefix + name + "'");
        if (it->second.sizes() != dst.sizes()) {
            throw DataError("checkpoint tensor '" + prefix + name + "' has a different shape");
        }
        dst.copy_(it->second);
    };
    for (auto& p : m.named_parameters(true)) assign(p.key(), p.value());
    for (auto& b : m.named_buffers(true)) assign(b.key(), b.value());
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    auto it = tensors.lower_bound(prefix);
    return it != tensors.end() && it->first.rfind(prefix, 0) == 0;
}

void Checkpoint::put_adam(const std::string& prefix, torch::optim::Adam& opt) {
    auto& state = opt.state();
    size_t k = 0;
    for (auto& group : opt.param_groups()) {
        for (auto& p : group.params()) {
            auto it = state.find(p.unsafeGetTensorImpl());
            const std::string base = prefix + std::to_string(k++) + ".";
            if (it == state.end()) continue;
            auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
            tensors[base + "exp_avg"] = s.exp_avg().clone();
            tensors[base + "exp_avg_sq"] = s.exp_avg_sq().clone();
            tensors[base + "step"] = torch::tensor({static_cast<float>(s.step())});
        }
    }
}

void Checkpoint::load_adam(const std::string& prefix, torch::optim::Adam& opt) const {
    auto& state = opt.state();
    size_t k = 0;
    for (auto& group : opt.param_groups()) {
        for (auto& p : group.params()) {
            const std::string base = prefix + std::to_string(k++) + ".";
            auto avg = tensors.find(base + "exp_avg");
            if (avg == tensors.end()) continue;
            auto s = std::make_unique<torch::optim::AdamParamState>();
            s->exp_avg(avg->second.clone());
            s->exp_avg_sq(tensors.at(base + "exp_avg_sq").clone());
            s->step(static_cast<int64_t>(tensors.at(base + "step").item<float>()));
            state[p.unsafeGetTensorImpl()] = std::move(s);
        }
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json manifest;
    manifest["format_version"] = Checkpoint::format_version;
    manifest["config"] = ckpt.config;
    manifest["meta"] = ckpt.meta;
    manifest["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    std::vector<torch::Tensor> blobs;
    for (const auto& [name, t] : ckpt.tensors) {
        auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
        const uint64_t nbytes = static_cast<uint64_t>(c.numel()) * sizeof(float);
        manifest["tensors"].push_back(
            {{"name", name}, {"shape", c.sizes().vec()}, {"dtype", "float32"}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
        blobs.push_back(c);
    }
    const std::string text = manifest.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(magic, sizeof(magic));
    write_pod<uint32_t>(os, Checkpoint::format_version);
    write_pod<uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) {
        os.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.numel() * sizeof(float)));
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char m[8];
    is.read(m, sizeof(m));
    if (!is || std::memcmp(m, magic, sizeof(m)) != 0) throw DataError(path.string() + " is not a checkpoint");
    const auto version = read_pod<uint32_t>(is);
    if (version != Checkpoint::format_version) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = read_pod<uint64_t>(is);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    const auto manifest = nlohmann::json::parse(text);
    const auto data_start = is.tellg();

    Checkpoint ck;
    ck.config = manifest.value("config", nlohmann::json::object());
    ck.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& e : manifest.at("tensors")) {
        auto shape = e.at("shape").get<std::vector<int64_t>>();
        auto t = torch::empty(shape, torch::kFloat32);
        const auto nbytes = e.at("nbytes").get<uint64_t>();
        if (nbytes != static_cast<uint64_t>(t.numel()) * sizeof(float)) {
            throw DataError("checkpoint entry '" + e.at("name").get<std::string>() + "' has inconsistent size");
        }
        is.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
        is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
        if (!is) throw DataError("truncated checkpoint blob for '" + e.at("name").get<std::string>() + "'");
        ck.tensors[e.at("name").get<std::string>()] = t;
    }
    return ck;
}

} // namespace vton
