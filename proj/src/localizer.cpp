#include "clrkit/localizer.hpp"

namespace clrkit {

// ---------------------------------------------------------------------------
// Pre-processor
// ---------------------------------------------------------------------------

PreprocessorImpl::PreprocessorImpl() {
    const std::vector<std::int64_t> widths = {3, 32, 64, 64, 64, 32};
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        auto block = ConvBlock(widths[i], widths[i + 1]);
        blocks.push_back(block);
        register_module("block" + std::to_string(i + 1), block);
    }
    out_conv = register_module(
        "out_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(widths.back(), 3, 3).padding(1)));
    // Residual head starts at zero: a fresh pre-processor is the identity.
    zero_init_conv(out_conv);
}

std::pair<torch::Tensor, FeatureStack> PreprocessorImpl::forward_with_features(
    const torch::Tensor& x) {
    FeatureStack stack;
    auto h = x;
    for (auto& block : blocks) {
        h = block(h);
        stack.features.push_back(h);
    }
    auto out = x + out_conv(h);
    stack.features.push_back(out);
    return {out, stack};
}

// ---------------------------------------------------------------------------
// Localizer
// ---------------------------------------------------------------------------

LocalizerImpl::LocalizerImpl() {
    enc1 = register_module("enc1", ConvBlock(3, 16, 2));
    enc2 = register_module("enc2", ConvBlock(16, 32, 2));
    enc3 = register_module("enc3", ConvBlock(32, 64, 2));
    fc1 = register_module("fc1", torch::nn::Linear(64, 64));
    fc2 = register_module("fc2", torch::nn::Linear(64, 64));
    fc3 = register_module("fc3", torch::nn::Linear(64, 32));
    fc4 = register_module("fc4", torch::nn::Linear(32, 5));
}

LocalizerBatch LocalizerImpl::forward(const torch::Tensor& x) {
    const bool batched = x.dim() == 4;
    auto xb = batched ? x : x.unsqueeze(0);
    auto h = enc3(enc2(enc1(xb)));
    auto pooled = h.mean({2, 3});  // deepest grid -> one-dimensional feature
    auto f = torch::leaky_relu(fc1(pooled), 0.2);
    f = torch::leaky_relu(fc2(f), 0.2);
    f = torch::leaky_relu(fc3(f), 0.2);
    auto out = torch::sigmoid(fc4(f));  // (cx, cy, w, h, S), all in (0,1)

    auto cx = out.select(1, 0), cy = out.select(1, 1);
    auto w = out.select(1, 2), hh = out.select(1, 3);
    auto x0 = cx * (1 - w);
    auto y0 = cy * (1 - hh);
    LocalizerBatch b;
    b.rect = torch::stack({x0, y0, x0 + w, y0 + hh}, 1);
    b.score = out.select(1, 4);
    return b;
}

LocalizerOutput LocalizerImpl::localize(const ImageGrid& x) {
    torch::NoGradGuard ng;
    auto batch = forward(x.dim() == 3 ? x.unsqueeze(0) : x);
    return {rect_row_to_mask(batch.rect[0], batch.score[0].item<double>()),
            batch.score[0].item<double>()};
}

RectMask rect_row_to_mask(const torch::Tensor& rect_row, double score) {
    RectMask m;
    m.x0 = rect_row[0].item<double>();
    m.y0 = rect_row[1].item<double>();
    m.x1 = rect_row[2].item<double>();
    m.y1 = rect_row[3].item<double>();
    m.confidence = score;
    return m;
}

torch::Tensor soft_rect_mask(const torch::Tensor& rect, std::int64_t h, std::int64_t w,
                             double tau) {
    TORCH_CHECK(rect.dim() == 2 && rect.size(1) == 4, "rect must be {N,4}");
    auto opts = rect.options();
    auto uc = (torch::arange(w, opts) + 0.5) / static_cast<double>(w);   // {w}
    auto ur = (torch::arange(h, opts) + 0.5) / static_cast<double>(h);   // {h}
    auto x0 = rect.select(1, 0).view({-1, 1}), y0 = rect.select(1, 1).view({-1, 1});
    auto x1 = rect.select(1, 2).view({-1, 1}), y1 = rect.select(1, 3).view({-1, 1});
    auto mx = torch::sigmoid((uc - x0) / tau) * torch::sigmoid((x1 - uc) / tau);  // {N,w}
    auto my = torch::sigmoid((ur - y0) / tau) * torch::sigmoid((y1 - ur) / tau);  // {N,h}
    return my.unsqueeze(2) * mx.unsqueeze(1);  // {N,h,w}
}

}  // namespace clrkit
