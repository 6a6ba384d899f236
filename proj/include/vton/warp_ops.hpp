#pragma once

#include <vector>

#include <torch/torch.h>

namespace vton {

/// Backward warp: out(p) = bilinear(input, p - flow(p)), border-clamped.
/// input is N x C x H x W (or C x H x W), flow N x 2 x H x W (or 2 x H x W), channel 0 = x.
/// Zero flow returns the input bit-exactly; differentiable in both arguments.
torch::Tensor warp(const torch::Tensor& input, const torch::Tensor& flow);

/// FlowNet-style cost volume with zero padding: channel (dy, dx), dy-major over
/// [-max_disp, max_disp]^2, value = <a(p), b(p + d)> / C.
torch::Tensor correlate(const torch::Tensor& a, const torch::Tensor& b, int64_t max_disp);

/// Doubles spatial size and flow magnitude (pixel units follow the resolution).
torch::Tensor upsample_flow(const torch::Tensor& flow);

/// Halves a full-resolution flow to a coarser level (average pooled, values halved).
torch::Tensor downsample_flow(const torch::Tensor& flow, int64_t levels);

/// Heights at which the fine flow block may use attention.
struct AttentionGate {
    std::vector<int64_t> heights;
    bool allows(int64_t height) const;
};

/// softmax(Q K^T / sqrt(d)) V over the last two dims; Q: ... x M x d, K/V: ... x N x d.
torch::Tensor scaled_dot_product_attention(const torch::Tensor& q, const torch::Tensor& k,
                                           const torch::Tensor& v, double dropout = 0.0,
                                           bool training = false, torch::Tensor* weights = nullptr);

/// Multi-head cross attention between a warped-garment query stream and person keys/values
/// on flattened spatial positions, with a residual connection on the query stream.
class CrossAttentionImpl : public torch::nn::Module {
public:
    CrossAttentionImpl(int64_t channels, int64_t heads, double dropout, AttentionGate gate);

    torch::Tensor forward(const torch::Tensor& query_feat, const torch::Tensor& person_feat);

    /// Attention weights of the last forward pass: N x heads x M x M.
    const torch::Tensor& last_weights() const { return last_weights_; }
    int64_t heads() const { return heads_; }

    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

private:
    int64_t channels_, heads_;
    double dropout_;
    AttentionGate gate_;
    torch::Tensor last_weights_;
};
TORCH_MODULE(CrossAttention);

} // namespace vton
