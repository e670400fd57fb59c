#include "clrkit/metrics.hpp"

#include <cmath>

namespace F = torch::nn::functional;

namespace clrkit {

namespace {

void check_same_hw(const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes(), "dimension mismatch: ", a.sizes(), " vs ", b.sizes());
}

torch::Tensor gaussian_window(std::int64_t size, double sigma) {
    auto coords = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
    auto g = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
    g /= g.sum();
    return g.outer(g);
}

}  // namespace

double psnr(const ImageGrid& a, const ImageGrid& b, const MetricConstants& mc) {
    check_same_hw(a, b);
    const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
    if (mse <= 0.0) return mc.psnr_cap_db;
    return std::min(mc.psnr_cap_db, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageGrid& a, const ImageGrid& b, const MetricConstants& mc) {
    check_same_hw(a, b);
    constexpr std::int64_t kWin = 11;
    TORCH_CHECK(a.size(-1) >= kWin && a.size(-2) >= kWin, "image smaller than SSIM window");

    auto x = a.to(torch::kFloat64).view({-1, 1, a.size(-2), a.size(-1)});
    auto y = b.to(torch::kFloat64).view({-1, 1, b.size(-2), b.size(-1)});
    auto w = gaussian_window(kWin, 1.5).view({1, 1, kWin, kWin});

    auto mu_x = F::conv2d(x, w);
    auto mu_y = F::conv2d(y, w);
    auto mu_xx = mu_x * mu_x, mu_yy = mu_y * mu_y, mu_xy = mu_x * mu_y;
    auto sigma_xx = F::conv2d(x * x, w) - mu_xx;
    auto sigma_yy = F::conv2d(y * y, w) - mu_yy;
    auto sigma_xy = F::conv2d(x * y, w) - mu_xy;

    auto num = (2.0 * mu_xy + mc.c1) * (2.0 * sigma_xy + mc.c2);
    auto den = (mu_xx + mu_yy + mc.c1) * (sigma_xx + sigma_yy + mc.c2);
    return (num / den).mean().item<double>();
}

double f1_score(const torch::Tensor& pred, const torch::Tensor& truth) {
    check_same_hw(pred, truth);
    auto is_binary = [](const torch::Tensor& m) {
        auto f = m.to(torch::kFloat64);
        return ((f == 0.0) | (f == 1.0)).all().item<bool>();
    };
    TORCH_CHECK(is_binary(pred) && is_binary(truth), "f1_score inputs must be binary masks");
    auto p = pred.to(torch::kFloat64), t = truth.to(torch::kFloat64);
    const double tp = (p * t).sum().item<double>();
    const double fp = (p * (1 - t)).sum().item<double>();
    const double fn = ((1 - p) * t).sum().item<double>();
    if (tp + fp + fn == 0.0) return 1.0;  // both masks empty
    return 2.0 * tp / (2.0 * tp + fn + fp);
}

torch::Tensor rasterize(const RectMask& mask, std::int64_t h, std::int64_t w) {
    TORCH_CHECK(mask.valid(), "invalid RectMask");
    auto m = torch::zeros({h, w}, torch::kFloat32);
    const auto r0 = std::clamp<std::int64_t>(mask.row0(h), 0, h);
    const auto r1 = std::clamp<std::int64_t>(mask.row1(h), 0, h);
    const auto c0 = std::clamp<std::int64_t>(mask.col0(w), 0, w);
    const auto c1 = std::clamp<std::int64_t>(mask.col1(w), 0, w);
    if (r1 > r0 && c1 > c0)
        m.index_put_({torch::indexing::Slice(r0, r1), torch::indexing::Slice(c0, c1)}, 1.0f);
    return m;
}

RectMask bounding_box(const torch::Tensor& mask) {
    TORCH_CHECK(mask.dim() == 2, "mask must be {h,w}");
    const auto h = mask.size(0), w = mask.size(1);
    auto nz = mask.nonzero();
    RectMask r;
    if (nz.size(0) == 0) return r;
    auto rows = nz.index({torch::indexing::Slice(), 0});
    auto cols = nz.index({torch::indexing::Slice(), 1});
    r.y0 = static_cast<double>(rows.min().item<std::int64_t>()) / static_cast<double>(h);
    r.y1 = static_cast<double>(rows.max().item<std::int64_t>() + 1) / static_cast<double>(h);
    r.x0 = static_cast<double>(cols.min().item<std::int64_t>()) / static_cast<double>(w);
    r.x1 = static_cast<double>(cols.max().item<std::int64_t>() + 1) / static_cast<double>(w);
    return r;
}

}  // namespace clrkit
