#include "clrkit/augment.hpp"

#include <cmath>

namespace clrkit {

namespace {

void stamp_disc(torch::Tensor& mask, double cy, double cx, double radius) {
    const auto h = mask.size(0), w = mask.size(1);
    const auto r0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cy - radius)));
    const auto r1 = std::min<std::int64_t>(h - 1, static_cast<std::int64_t>(std::ceil(cy + radius)));
    const auto c0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cx - radius)));
    const auto c1 = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(std::ceil(cx + radius)));
    auto acc = mask.accessor<float, 2>();
    const double r2 = radius * radius;
    for (auto r = r0; r <= r1; ++r)
        for (auto c = c0; c <= c1; ++c) {
            const double dy = r - cy, dx = c - cx;
            if (dy * dy + dx * dx <= r2) acc[r][c] = 1.0f;
        }
}

// One random-walk polyline rasterized with a circular brush.
void draw_stroke(torch::Tensor& mask, Rng& rng, double radius) {
    const auto h = mask.size(0), w = mask.size(1);
    double cy = uniform(rng, 0, static_cast<double>(h - 1));
    double cx = uniform(rng, 0, static_cast<double>(w - 1));
    double angle = uniform(rng, 0, 2 * M_PI);
    const int segments = static_cast<int>(uniform_int(rng, 3, 7));
    for (int s = 0; s < segments; ++s) {
        angle += uniform(rng, -0.9, 0.9);
        const double len = uniform(rng, static_cast<double>(h) / 16.0, static_cast<double>(h) / 5.0);
        const double ny = std::clamp(cy + len * std::sin(angle), 0.0, static_cast<double>(h - 1));
        const double nx = std::clamp(cx + len * std::cos(angle), 0.0, static_cast<double>(w - 1));
        const int steps = std::max(2, static_cast<int>(std::hypot(ny - cy, nx - cx)));
        for (int t = 0; t <= steps; ++t) {
            const double f = static_cast<double>(t) / steps;
            stamp_disc(mask, cy + f * (ny - cy), cx + f * (nx - cx), radius);
        }
        cy = ny;
        cx = nx;
    }
}

double coverage_of(const torch::Tensor& mask) {
    return mask.mean().item<double>();
}

}  // namespace

torch::Tensor free_form_mask(Rng& rng, std::int64_t h, std::int64_t w,
                             const FreeFormMaskParams& params) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("free_form_mask: bad size");
    auto mask = torch::zeros({h, w}, torch::kFloat32);
    if (params.max_strokes <= 0) return mask;

    const double radius = params.thickness > 0 ? params.thickness / 2.0
                                               : std::max(1.5, static_cast<double>(h) / 24.0);
    const double target =
        uniform(rng, params.min_coverage, 0.8 * params.max_coverage);
    for (int s = 0; s < params.max_strokes; ++s) {
        auto before = mask.clone();
        draw_stroke(mask, rng, radius);
        if (coverage_of(mask) > params.max_coverage) {
            mask = before;  // revert the stroke that overshot
            break;
        }
        if (coverage_of(mask) >= target) break;
    }
    // A thin first stroke can undershoot; widen until the floor is met.
    double grow = radius;
    while (coverage_of(mask) < params.min_coverage) {
        grow *= 1.5;
        draw_stroke(mask, rng, grow);
    }
    if (coverage_of(mask) > params.max_coverage) {
        // Overshoot from the floor-widening loop: fall back to one disc of
        // controlled area at a random position.
        mask.zero_();
        const double area = params.min_coverage * static_cast<double>(h * w);
        const double r = std::sqrt(area / M_PI) + 0.5;
        stamp_disc(mask, uniform(rng, r, h - 1 - r), uniform(rng, r, w - 1 - r), r);
    }
    return mask;
}

torch::Tensor free_form_mask(Rng& rng, std::int64_t h, std::int64_t w, int strokes,
                             double thickness) {
    FreeFormMaskParams p;
    p.max_strokes = strokes;
    p.thickness = thickness;
    return free_form_mask(rng, h, w, p);
}

std::pair<ImageGrid, TamperPlan> t2a_augment(const ImageGrid& i, const ImageGrid& donor, Rng& rng,
                                             const FreeFormMaskParams& params) {
    TORCH_CHECK(i.sizes() == donor.sizes(), "t2a_augment: donor shape mismatch");
    auto mask = free_form_mask(rng, i.size(-2), i.size(-1), params);
    auto out = torch::where(mask.unsqueeze(0) > 0.5, donor, i);
    TamperPlan plan;
    plan.mask = mask;
    plan.donor = donor;
    return {out, plan};
}

}  // namespace clrkit
