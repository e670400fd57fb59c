#ifndef CLRKIT_METRICS_HPP
#define CLRKIT_METRICS_HPP

#include <torch/torch.h>

#include "clrkit/image.hpp"

namespace clrkit {

struct MetricConstants {
    double c1 = 0.01 * 0.01;  // SSIM stabilizers on unit range
    double c2 = 0.03 * 0.03;
    double psnr_cap_db = 100.0;
};

// 10*log10(1/MSE); identical inputs return the cap instead of infinity.
double psnr(const ImageGrid& a, const ImageGrid& b, const MetricConstants& mc = {});

// Windowed SSIM, covariance form (11x11 Gaussian, sigma 1.5), per channel
// over valid windows, mean-aggregated. Computed in float64.
double ssim(const ImageGrid& a, const ImageGrid& b, const MetricConstants& mc = {});

// 2TP / (2TP + FN + FP) over {0,1} masks; two empty masks agree vacuously.
double f1_score(const torch::Tensor& pred, const torch::Tensor& truth);

// Binary {h,w} float mask: 1 inside [round(x0*w),round(x1*w)) x
// [round(y0*h),round(y1*h)), 0 elsewhere.
torch::Tensor rasterize(const RectMask& mask, std::int64_t h, std::int64_t w);

// Tightest rectangle around the 1-region of a binary mask.
RectMask bounding_box(const torch::Tensor& mask);

}  // namespace clrkit

#endif
