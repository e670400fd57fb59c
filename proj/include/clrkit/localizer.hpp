#ifndef CLRKIT_LOCALIZER_HPP
#define CLRKIT_LOCALIZER_HPP

#include <torch/torch.h>

#include <vector>

#include "clrkit/blocks.hpp"
#include "clrkit/image.hpp"

namespace clrkit {

// Per-layer activations of the pre-processor; the consistency loss compares
// layers 3..5 (1-based), i.e. indices 2..4.
struct FeatureStack {
    std::vector<torch::Tensor> features;
    static constexpr int kCompareFirst = 2;
    static constexpr int kCompareLast = 4;
};

// Siamese pre-processor P: six-layer FCN, residual output. Twin views are
// processed by the very same parameter set (call it twice).
struct PreprocessorImpl : torch::nn::Module {
    PreprocessorImpl();

    // Returns the processed image (same shape) and the per-layer features.
    std::pair<torch::Tensor, FeatureStack> forward_with_features(const torch::Tensor& x);
    torch::Tensor forward(const torch::Tensor& x) { return forward_with_features(x).first; }

    std::vector<ConvBlock> blocks;
    torch::nn::Conv2d out_conv = nullptr;
};
TORCH_MODULE(Preprocessor);

struct LocalizerOutput {
    RectMask rect;
    double score = 0.0;  // S; >= 0.5 means "cropped"
};

// Batched, differentiable localizer outputs.
struct LocalizerBatch {
    torch::Tensor rect;   // {N,4} = (x0,y0,x1,y1), each in (0,1), ordered
    torch::Tensor score;  // {N}
};

// Crop localizer C: 3-level strided conv pyramid, global average pooling,
// 4-layer MLP emitting (cx,cy,w,h,S) through sigmoids; corners derived so
// ordering always holds.
struct LocalizerImpl : torch::nn::Module {
    LocalizerImpl();

    LocalizerBatch forward(const torch::Tensor& x);
    LocalizerOutput localize(const ImageGrid& x);

    ConvBlock enc1 = nullptr, enc2 = nullptr, enc3 = nullptr;
    torch::nn::Linear fc1 = nullptr, fc2 = nullptr, fc3 = nullptr, fc4 = nullptr;
};
TORCH_MODULE(Localizer);

inline bool decide_cropped(const LocalizerOutput& out) { return out.score >= 0.5; }

// Differentiable rasterization of predicted rectangles: product of axis
// sigmoids with temperature tau (in normalized units).
torch::Tensor soft_rect_mask(const torch::Tensor& rect, std::int64_t h, std::int64_t w,
                             double tau = 0.02);

RectMask rect_row_to_mask(const torch::Tensor& rect_row, double score);

}  // namespace clrkit

#endif
