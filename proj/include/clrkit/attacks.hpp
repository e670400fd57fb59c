#ifndef CLRKIT_ATTACKS_HPP
#define CLRKIT_ATTACKS_HPP

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>

#include "clrkit/common.hpp"
#include "clrkit/image.hpp"

namespace clrkit {

// ---------------------------------------------------------------------------
// Attack / crop descriptions
// ---------------------------------------------------------------------------

enum class AttackKind {
    Identity,
    JpegSim,
    JpegReal,
    Blur,
    Rescale,
    Median,
    Awgn,
    Dropout,
    Brightness,  // eval-only
    Contrast,    // eval-only
};

struct AttackSpec {
    AttackKind kind = AttackKind::Identity;
    int qf = 70;          // jpeg_sim / jpeg_real
    int kernel = 3;       // blur, in {3,5}
    double ratio = 0.5;   // rescale, in [0.5,2]
    int window = 4;       // median
    double sigma = 0.03;  // awgn
    double p = 0.3;       // dropout
    double value = 0.0;   // brightness offset / contrast gain

    // Canonical textual form, e.g. "jpeg_real:qf=70", "blur:k=5".
    std::string to_string() const;
    static AttackSpec parse(const std::string& text);
    void validate() const;
};

struct CropSpec {
    double rate = 0.7;  // retained area fraction, in [0.4,1]
    double aspect_min = 0.75;
    double aspect_max = 1.33;
    std::optional<std::pair<std::int64_t, std::int64_t>> resize_target;  // (h,w)
};

// Axis-aligned map in normalized coordinates: p' = scale*p + shift.
struct AffineMap {
    double scale_x = 1.0, scale_y = 1.0;
    double shift_x = 0.0, shift_y = 0.0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Rectangle with the requested retained-area fraction, uniform placement.
// Deterministic under a fixed RNG state.
RectMask sample_crop(Rng& rng, const CropSpec& spec, std::int64_t h, std::int64_t w);

// RS(X, M): extract the rectangle, then bilinear-resize to resize_target
// when given (the attacker's arbitrary size).
torch::Tensor region_select(const torch::Tensor& x, const RectMask& m,
                            std::optional<std::pair<std::int64_t, std::int64_t>> resize_target = {});

// Snap to the k/255 grid (round half away from zero); straight-through
// gradient.
torch::Tensor quantize_u8(const torch::Tensor& x);

struct AttackContext {
    Rng* rng = nullptr;
    const torch::Tensor* cover = nullptr;  // dropout replacement source
    // FG-JPEG hook for AttackKind::JpegSim; (image, qf) -> simulated image.
    std::function<torch::Tensor(const torch::Tensor&, int)> jpeg_sim;
    bool quantize = true;
};

// IP(x): one post-processing attack; output in [0,1] on the u8 grid.
torch::Tensor apply_attack(const torch::Tensor& x, const AttackSpec& spec, AttackContext& ctx);

// ZR(x_atk, m-hat): resize the received content into the rectangle of a
// zero canvas at the original resolution.
torch::Tensor zero_pad_resize(const torch::Tensor& x_atk, const RectMask& m_hat,
                              std::pair<std::int64_t, std::int64_t> original_hw);

// The unique axis-aligned affine map with m_hat = Aff(m).
AffineMap affine_from_masks(const RectMask& m, const RectMask& m_hat);

// Warp an image by the map (border-replicated bilinear sampling); used to
// shift the recovery ground truth.
torch::Tensor warp_affine(const torch::Tensor& img, const AffineMap& aff);

}  // namespace clrkit

#endif
