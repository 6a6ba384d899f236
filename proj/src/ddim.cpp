#include "vton/ddim.hpp"

#include <cmath>

#include "vton/types.hpp"

namespace vton {

DiffusionSchedule DiffusionSchedule::linear(int64_t timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) throw ConfigError("diffusion schedule needs at least one timestep");
    DiffusionSchedule s;
    s.timesteps = timesteps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    double prod = 1.0;
    for (int64_t t = 0; t < timesteps; ++t) {
        const double beta = timesteps == 1 ? beta_start
                                           : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                                              static_cast<double>(timesteps - 1);
        prod *= 1.0 - beta;
        s.alphas_cumprod.push_back(prod);
    }
    return s;
}

double DiffusionSchedule::alpha_bar(int64_t t) const {
    return t < 0 ? 1.0 : alphas_cumprod.at(static_cast<size_t>(t));
}

std::vector<int64_t> ddim_timesteps(int64_t steps, int64_t total) {
    if (steps < 1) throw ConfigError("ddim needs at least one step");
    if (steps > total) throw ConfigError("ddim steps exceed the schedule length");
    std::vector<int64_t> ts;
    for (int64_t i = 0; i < steps; ++i) {
        const double v = static_cast<double>(total) - static_cast<double>(i) * static_cast<double>(total) /
                                                          static_cast<double>(steps);
        ts.push_back(static_cast<int64_t>(std::llround(v)) - 1);
    }
    return ts;
}

torch::Tensor ddim_sample(TryOnUNet& net, const torch::Tensor& condition, const torch::Tensor& embedding,
                          int64_t steps, const DiffusionSchedule& schedule, torch::Generator& gen) {
    torch::NoGradGuard g;
    const auto ts = ddim_timesteps(steps, schedule.timesteps);
    const int64_t n = condition.size(0);
    auto x = torch::randn({n, 3, condition.size(2), condition.size(3)}, gen, condition.options());
    for (size_t i = 0; i < ts.size(); ++i) {
        const int64_t t = ts[i];
        const int64_t t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        const double a = schedule.alpha_bar(t), a_prev = schedule.alpha_bar(t_prev);
        auto eps = net(torch::cat({x, condition}, 1), embedding, torch::full({n}, t, torch::kInt64));
        auto x0 = ((x - std::sqrt(1.0 - a) * eps) / std::sqrt(a)).clamp(-1.0, 1.0);
        x = std::sqrt(a_prev) * x0 + std::sqrt(1.0 - a_prev) * eps;
    }
    return x;
}

double ddim_train_step(TryOnUNet& net, torch::optim::Optimizer& opt, const torch::Tensor& x0,
                       const torch::Tensor& condition, const torch::Tensor& embedding,
                       const DiffusionSchedule& schedule, torch::Generator& gen) {
    net->train();
    const int64_t n = x0.size(0);
    auto t = torch::randint(0, schedule.timesteps, {n}, gen, torch::kInt64);
    auto ab = torch::tensor(schedule.alphas_cumprod, torch::kFloat64).index_select(0, t).to(torch::kFloat32);
    ab = ab.view({n, 1, 1, 1});
    auto eps = torch::randn(x0.sizes(), gen, x0.options());
    auto xt = ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps;
    auto loss = torch::mse_loss(net(torch::cat({xt, condition}, 1), embedding, t), eps);
    if (!std::isfinite(loss.item<double>())) throw NumericalError("non-finite baseline diffusion loss");
    opt.zero_grad();
    loss.backward();
    opt.step();
    return loss.item<double>();
}

UNetConfig ddim_variant(UNetConfig cfg) {
    cfg.time_conditioned = true;
    cfg.tanh_head = false;
    return cfg;
}

} // namespace vton
