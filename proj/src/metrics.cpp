#include "vton/metrics.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "vton/types.hpp"

namespace vton {

torch::Tensor gaussian_window(int64_t size, double sigma) {
    auto x = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
    auto g = torch::exp(-(x * x) / (2.0 * sigma * sigma));
    g = g / g.sum();
    return torch::outer(g, g);
}

double ssim_gray(const torch::Tensor& a, const torch::Tensor& b, double dynamic_range) {
    if (a.sizes() != b.sizes()) throw ContractError("ssim: image shapes differ");
    auto x = a.to(torch::kFloat64);
    auto y = b.to(torch::kFloat64);
    auto w = gaussian_window().view({1, 1, 11, 11});
    if (x.size(2) < 11 || x.size(3) < 11) throw ContractError("ssim: images must be at least 11x11");
    auto filt = [&](const torch::Tensor& t) { return torch::conv2d(t, w); };
    const double c1 = std::pow(0.01 * dynamic_range, 2), c2 = std::pow(0.03 * dynamic_range, 2);
    auto mx = filt(x), my = filt(y);
    auto sxx = filt(x * x) - mx * mx;
    auto syy = filt(y * y) - my * my;
    auto sxy = filt(x * y) - mx * my;
    auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    return map.mean().item<double>();
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ContractError("ssim: image shapes differ");
    // every colour channel is scored as its own gray image, then averaged
    auto planes = [](const torch::Tensor& x) {
        auto t = x.dim() == 3 ? x.unsqueeze(0) : x;
        return t.reshape({t.size(0) * t.size(1), 1, t.size(2), t.size(3)});
    };
    return ssim_gray(planes(a), planes(b), 2.0);
}

double masked_l1(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask) {
    auto m = mask.to(torch::kFloat64);
    auto d = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs();
    while (m.dim() < d.dim()) m = m.unsqueeze(m.dim() - 2);
    m = m.expand_as(d);
    const double denom = m.sum().item<double>();
    return denom > 0.0 ? (d * m).sum().item<double>() / denom : 0.0;
}

namespace {

std::pair<torch::Tensor, torch::Tensor> gaussian_fit(const torch::Tensor& f) {
    auto x = f.to(torch::kFloat64);
    auto mu = x.mean(0);
    auto c = x - mu;
    const int64_t n = x.size(0);
    auto cov = n > 1 ? torch::matmul(c.t(), c) / static_cast<double>(n - 1)
                     : torch::zeros({x.size(1), x.size(1)}, torch::kFloat64);
    return {mu, cov};
}

torch::Tensor psd_sqrt(const torch::Tensor& m) {
    auto sym = (m + m.t()) * 0.5;
    auto [vals, vecs] = torch::linalg_eigh(sym);
    return torch::matmul(vecs * vals.clamp_min(0.0).sqrt().unsqueeze(0), vecs.t());
}

} // namespace

double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
    auto [mu_a, cov_a] = gaussian_fit(feats_a);
    auto [mu_b, cov_b] = gaussian_fit(feats_b);
    auto s = psd_sqrt(cov_a);
    auto inner = torch::matmul(torch::matmul(s, cov_b), s);
    auto vals = torch::linalg_eigvalsh((inner + inner.t()) * 0.5).clamp_min(0.0);
    const double tr_cross = vals.sqrt().sum().item<double>();
    const double d = (mu_a - mu_b).pow(2).sum().item<double>() + cov_a.trace().item<double>() +
                     cov_b.trace().item<double>() - 2.0 * tr_cross;
    return std::max(d, 0.0);
}

double kernel_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
    auto x = feats_a.to(torch::kFloat64), y = feats_b.to(torch::kFloat64);
    const int64_t m = x.size(0), n = y.size(0);
    if (m < 2 || n < 2) throw ContractError("kernel distance needs at least two samples per set");
    const double d = static_cast<double>(x.size(1));
    auto k = [&](const torch::Tensor& p, const torch::Tensor& q) { return (torch::matmul(p, q.t()) / d + 1.0).pow(3); };
    auto kxx = k(x, x), kyy = k(y, y), kxy = k(x, y);
    const double sxx = (kxx.sum() - kxx.diagonal().sum()).item<double>() / static_cast<double>(m * (m - 1));
    const double syy = (kyy.sum() - kyy.diagonal().sum()).item<double>() / static_cast<double>(n * (n - 1));
    const double sxy = kxy.sum().item<double>() / static_cast<double>(m * n);
    return sxx + syy - 2.0 * sxy;
}

PooledExtractor pooled_extractor(PerceptualNet net) {
    return [net](const torch::Tensor& x) mutable {
        torch::NoGradGuard g;
        return net->pooled(x);
    };
}

double feature_distance(const torch::Tensor& set_a, const torch::Tensor& set_b, const PooledExtractor& extractor) {
    return frechet_distance(extractor(set_a), extractor(set_b));
}

double lpips_proxy(const torch::Tensor& a, const torch::Tensor& b, PerceptualNet& net) {
    torch::NoGradGuard g;
    auto fa = net->forward(a.dim() == 3 ? a.unsqueeze(0) : a);
    auto fb = net->forward(b.dim() == 3 ? b.unsqueeze(0) : b);
    double total = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) {
        auto na = fa[i] / (fa[i].norm(2, 1, true) + 1e-10);
        auto nb = fb[i] / (fb[i].norm(2, 1, true) + 1e-10);
        total += (na - nb).pow(2).sum(1).mean().item<double>();
    }
    return total;
}

nlohmann::json TimingStats::to_json() const {
    return {{"batch", batch},
            {"repeats", repeats},
            {"images", images},
            {"mean_per_batch_s", mean_per_batch},
            {"std_per_batch_s", std_per_batch},
            {"mean_per_image_s", mean_per_image},
            {"mean_per_pass_s", mean_per_pass},
            {"std_per_pass_s", std_per_pass}};
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

} // namespace

TimingStats timing_bench(const std::function<void(size_t)>& run, const std::vector<int64_t>& batch_images,
                         int64_t batch_size, int64_t repeats) {
    if (repeats < 1) throw ConfigError("timing repeats must be at least 1");
    if (batch_images.empty()) throw DataError("timing benchmark needs at least one batch");
    using clock = std::chrono::steady_clock;
    for (size_t i = 0; i < batch_images.size(); ++i) run(i);
    std::vector<double> per_batch, per_pass;
    int64_t images = 0;
    for (auto n : batch_images) images += n;
    for (int64_t r = 0; r < repeats; ++r) {
        double pass = 0.0;
        for (size_t i = 0; i < batch_images.size(); ++i) {
            const auto t0 = clock::now();
            run(i);
            const double dt = std::chrono::duration<double>(clock::now() - t0).count();
            per_batch.push_back(dt);
            pass += dt;
        }
        per_pass.push_back(pass);
    }
    TimingStats s;
    s.batch = batch_size;
    s.repeats = repeats;
    s.images = images;
    std::tie(s.mean_per_batch, s.std_per_batch) = mean_std(per_batch);
    std::tie(s.mean_per_pass, s.std_per_pass) = mean_std(per_pass);
    s.mean_per_image = s.mean_per_pass / static_cast<double>(images);
    return s;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j{{"name", name}, {"pairing", pairing}, {"extractor", extractor}, {"images", images},
                     {"fid", fid},   {"kid", kid}};
    if (ssim) j["ssim"] = *ssim;
    if (l1) j["l1"] = *l1;
    if (lpips) j["lpips"] = *lpips;
    if (timing) j["timing"] = timing->to_json();
    return j;
}

namespace {

std::string fmt(const std::optional<double>& v, int precision = 4) {
    if (!v) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << *v;
    return os.str();
}

} // namespace

std::string render_markdown_table(const std::vector<EvalReport>& rows) {
    std::ostringstream os;
    os << "| Method | Pairing | LPIPS | SSIM | FID | KIDx100 | T(s) |\n";
    os << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        os << "| " << r.name << " | " << r.pairing << " | " << fmt(r.lpips) << " | " << fmt(r.ssim) << " | "
           << fmt(r.fid) << " | " << fmt(r.kid * 100.0) << " | "
           << fmt(r.timing ? std::optional<double>(r.timing->mean_per_batch) : std::nullopt, 3) << " |\n";
    }
    return os.str();
}

std::string render_csv_table(const std::vector<EvalReport>& rows) {
    std::ostringstream os;
    os << "method,pairing,lpips,ssim,fid,kid_x100,time_s\n";
    for (const auto& r : rows) {
        os << r.name << "," << r.pairing << "," << fmt(r.lpips) << "," << fmt(r.ssim) << "," << fmt(r.fid) << ","
           << fmt(r.kid * 100.0) << ","
           << fmt(r.timing ? std::optional<double>(r.timing->mean_per_batch) : std::nullopt, 3) << "\n";
    }
    return os.str();
}

} // namespace vton
