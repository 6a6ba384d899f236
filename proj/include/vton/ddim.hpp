#pragma once

#include <vector>

#include <torch/torch.h>

#include "vton/tryonnet.hpp"

namespace vton {

/// Linear beta schedule of a vanilla diffusion model.
struct DiffusionSchedule {
    int64_t timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::vector<double> alphas_cumprod;

    static DiffusionSchedule linear(int64_t timesteps = 1000, double beta_start = 1e-4, double beta_end = 0.02);
    double alpha_bar(int64_t t) const;
};

/// Evenly spaced timesteps ending at T-1, in descending order.
std::vector<int64_t> ddim_timesteps(int64_t steps, int64_t total);

/// Deterministic DDIM sampling (eta = 0) with a noise-predicting time-conditioned network.
/// condition: N x 6 x H x W (local condition + dense pose); the final step uses alpha_bar = 1.
torch::Tensor ddim_sample(TryOnUNet& net, const torch::Tensor& condition, const torch::Tensor& embedding,
                          int64_t steps, const DiffusionSchedule& schedule, torch::Generator& gen);

/// One epsilon-prediction training step of the baseline; returns the MSE.
double ddim_train_step(TryOnUNet& net, torch::optim::Optimizer& opt, const torch::Tensor& x0,
                       const torch::Tensor& condition, const torch::Tensor& embedding,
                       const DiffusionSchedule& schedule, torch::Generator& gen);

/// Baseline network config derived from the try-on config: timestep embedding, linear head.
UNetConfig ddim_variant(UNetConfig cfg);

} // namespace vton
