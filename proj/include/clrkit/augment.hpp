#ifndef CLRKIT_AUGMENT_HPP
#define CLRKIT_AUGMENT_HPP

#include <torch/torch.h>

#include "clrkit/common.hpp"
#include "clrkit/image.hpp"

namespace clrkit {

struct FreeFormMaskParams {
    int max_strokes = 8;
    double thickness = 0.0;  // brush diameter in px; 0 = scaled to the frame
    double min_coverage = 0.02;
    double max_coverage = 0.30;
};

// Union of random-walk thick polylines; coverage clipped to
// [min_coverage, max_coverage]. strokes = 0 yields an empty mask.
// Deterministic under a fixed RNG state.
torch::Tensor free_form_mask(Rng& rng, std::int64_t h, std::int64_t w, int strokes,
                             double thickness = 0.0);
torch::Tensor free_form_mask(Rng& rng, std::int64_t h, std::int64_t w,
                             const FreeFormMaskParams& params);

struct TamperPlan {
    torch::Tensor mask;  // binary {h,w}
    ImageGrid donor;     // R
    double applied_fraction = 0.15;  // r_aug
};

// X_tmp = I*(1-M) + R*M with a free-form stroke mask; exact per-pixel select.
std::pair<ImageGrid, TamperPlan> t2a_augment(const ImageGrid& i, const ImageGrid& donor, Rng& rng,
                                             const FreeFormMaskParams& params = {});

}  // namespace clrkit

#endif
