#include "clrkit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace F = torch::nn::functional;
using torch::indexing::Slice;

namespace clrkit {

// ---------------------------------------------------------------------------
// AttackSpec text form
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, AttackKind> kKindNames = {
    {"identity", AttackKind::Identity}, {"jpeg_sim", AttackKind::JpegSim},
    {"jpeg_real", AttackKind::JpegReal}, {"blur", AttackKind::Blur},
    {"rescale", AttackKind::Rescale},   {"median", AttackKind::Median},
    {"awgn", AttackKind::Awgn},         {"dropout", AttackKind::Dropout},
    {"brightness", AttackKind::Brightness}, {"contrast", AttackKind::Contrast},
};

std::string kind_name(AttackKind k) {
    for (const auto& [name, kind] : kKindNames)
        if (kind == k) return name;
    return "identity";
}

double parse_param(const std::string& text, const std::string& key) {
    auto eq = text.find('=');
    if (eq == std::string::npos || text.substr(0, eq) != key)
        throw std::invalid_argument("attack spec: expected " + key + "=<value>, got '" + text + "'");
    return std::stod(text.substr(eq + 1));
}

}  // namespace

std::string AttackSpec::to_string() const {
    std::ostringstream out;
    out << kind_name(kind);
    switch (kind) {
        case AttackKind::Identity: break;
        case AttackKind::JpegSim:
        case AttackKind::JpegReal: out << ":qf=" << qf; break;
        case AttackKind::Blur: out << ":k=" << kernel; break;
        case AttackKind::Rescale: out << ":ratio=" << ratio; break;
        case AttackKind::Median: out << ":window=" << window; break;
        case AttackKind::Awgn: out << ":sigma=" << sigma; break;
        case AttackKind::Dropout: out << ":p=" << p; break;
        case AttackKind::Brightness: out << ":b=" << value; break;
        case AttackKind::Contrast: out << ":c=" << value; break;
    }
    return out.str();
}

AttackSpec AttackSpec::parse(const std::string& text) {
    const auto colon = text.find(':');
    const auto name = text.substr(0, colon);
    auto it = kKindNames.find(name);
    if (it == kKindNames.end()) throw std::invalid_argument("unknown attack kind: '" + name + "'");
    AttackSpec spec;
    spec.kind = it->second;
    const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
    switch (spec.kind) {
        case AttackKind::Identity: break;
        case AttackKind::JpegSim:
        case AttackKind::JpegReal: spec.qf = static_cast<int>(parse_param(rest, "qf")); break;
        case AttackKind::Blur: spec.kernel = static_cast<int>(parse_param(rest, "k")); break;
        case AttackKind::Rescale: spec.ratio = parse_param(rest, "ratio"); break;
        case AttackKind::Median: spec.window = static_cast<int>(parse_param(rest, "window")); break;
        case AttackKind::Awgn: spec.sigma = parse_param(rest, "sigma"); break;
        case AttackKind::Dropout: spec.p = parse_param(rest, "p"); break;
        case AttackKind::Brightness: spec.value = parse_param(rest, "b"); break;
        case AttackKind::Contrast: spec.value = parse_param(rest, "c"); break;
    }
    spec.validate();
    return spec;
}

void AttackSpec::validate() const {
    switch (kind) {
        case AttackKind::JpegSim:
        case AttackKind::JpegReal:
            if (qf < 0 || qf > 100) throw std::invalid_argument("jpeg qf must be in [0,100]");
            break;
        case AttackKind::Blur:
            if (kernel != 3 && kernel != 5) throw std::invalid_argument("blur kernel must be 3 or 5");
            break;
        case AttackKind::Rescale:
            if (ratio < 0.5 || ratio > 2.0)
                throw std::invalid_argument("rescale ratio must be in [0.5,2]");
            break;
        case AttackKind::Median:
            if (window < 2 || window > 9) throw std::invalid_argument("median window out of range");
            break;
        case AttackKind::Awgn:
            if (sigma < 0) throw std::invalid_argument("awgn sigma must be >= 0");
            break;
        case AttackKind::Dropout:
            if (p < 0 || p > 1) throw std::invalid_argument("dropout p must be in [0,1]");
            break;
        default: break;
    }
}

// ---------------------------------------------------------------------------
// Cropping
// ---------------------------------------------------------------------------

RectMask sample_crop(Rng& rng, const CropSpec& spec, std::int64_t h, std::int64_t w) {
    if (spec.rate < 0.4 || spec.rate > 1.0)
        throw std::invalid_argument("crop rate must be in [0.4,1]");
    if (spec.aspect_min <= 0 || spec.aspect_max < spec.aspect_min)
        throw std::invalid_argument("invalid aspect jitter range");
    if (h < 4 || w < 4) throw std::invalid_argument("frame too small to crop");

    if (spec.rate >= 1.0) return RectMask{0.0, 0.0, 1.0, 1.0, 1.0};

    const double target_area = spec.rate * static_cast<double>(h) * static_cast<double>(w);
    const double jitter = uniform(rng, spec.aspect_min, spec.aspect_max);
    double fh = std::sqrt(spec.rate / jitter);
    if (fh > 1.0) fh = 1.0;

    auto rh = std::clamp<std::int64_t>(std::llround(fh * static_cast<double>(h)), 2, h);
    auto rw = std::clamp<std::int64_t>(std::llround(target_area / static_cast<double>(rh)), 2, w);
    if (rw == w)  // width clipped; rebalance height to preserve the area
        rh = std::clamp<std::int64_t>(std::llround(target_area / static_cast<double>(rw)), 2, h);

    const auto r0 = uniform_int(rng, 0, h - rh);
    const auto c0 = uniform_int(rng, 0, w - rw);
    RectMask m;
    m.y0 = static_cast<double>(r0) / static_cast<double>(h);
    m.y1 = static_cast<double>(r0 + rh) / static_cast<double>(h);
    m.x0 = static_cast<double>(c0) / static_cast<double>(w);
    m.x1 = static_cast<double>(c0 + rw) / static_cast<double>(w);
    return m;
}

namespace {

std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t> pixel_rect(
    const RectMask& m, std::int64_t h, std::int64_t w) {
    const auto r0 = std::clamp<std::int64_t>(m.row0(h), 0, h);
    const auto r1 = std::clamp<std::int64_t>(m.row1(h), 0, h);
    const auto c0 = std::clamp<std::int64_t>(m.col0(w), 0, w);
    const auto c1 = std::clamp<std::int64_t>(m.col1(w), 0, w);
    return {r0, r1, c0, c1};
}

}  // namespace

torch::Tensor region_select(const torch::Tensor& x, const RectMask& m,
                            std::optional<std::pair<std::int64_t, std::int64_t>> resize_target) {
    if (!m.valid()) throw std::invalid_argument("region_select: invalid mask");
    const auto h = x.size(-2), w = x.size(-1);
    auto [r0, r1, c0, c1] = pixel_rect(m, h, w);
    if (r1 - r0 < 2 || c1 - c0 < 2)
        throw std::invalid_argument("region_select: degenerate mask (< 2 px side)");
    auto crop = x.index({torch::indexing::Ellipsis, Slice(r0, r1), Slice(c0, c1)});
    if (resize_target) crop = resize_bilinear(crop, resize_target->first, resize_target->second);
    return crop;
}

torch::Tensor quantize_u8(const torch::Tensor& x) {
    auto snapped = torch::floor(x * 255.0 + 0.5) / 255.0;
    return x + (snapped - x).detach();
}

// ---------------------------------------------------------------------------
// Post-processing attacks
// ---------------------------------------------------------------------------

namespace {

torch::Tensor as_batched(const torch::Tensor& x, bool& was_3d) {
    was_3d = x.dim() == 3;
    return was_3d ? x.unsqueeze(0) : x;
}

torch::Tensor gaussian_blur(const torch::Tensor& x, int k) {
    // OpenCV's default sigma for a given kernel size.
    const double sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
    auto coords = torch::arange(k, torch::kFloat32) - (k - 1) / 2.0f;
    auto g1 = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
    g1 /= g1.sum();
    const auto c = x.size(1);
    auto kh = g1.view({1, 1, k, 1}).repeat({c, 1, 1, 1});
    auto kw = g1.view({1, 1, 1, k}).repeat({c, 1, 1, 1});
    const auto p = (k - 1) / 2;
    auto padded = F::pad(x, F::PadFuncOptions({p, p, p, p}).mode(torch::kReflect));
    auto y = F::conv2d(padded, kh, F::Conv2dFuncOptions().groups(c));
    return F::conv2d(y, kw, F::Conv2dFuncOptions().groups(c));
}

torch::Tensor median_filter(const torch::Tensor& x, int window) {
    const auto pl = (window - 1) / 2;           // asymmetric pad for even windows
    const auto pr = window - 1 - pl;
    auto padded = F::pad(x, F::PadFuncOptions({pl, pr, pl, pr}).mode(torch::kReflect));
    auto patches = padded.unfold(2, window, 1).unfold(3, window, 1).flatten(-2);
    // Lower median: k-th smallest with k = floor((n-1)/2) + 1 (1-based).
    const auto kth = (window * window - 1) / 2 + 1;
    return std::get<0>(patches.kthvalue(kth, -1));
}

torch::Tensor noise_like(const torch::Tensor& x, Rng& rng, double sigma) {
    auto n = torch::empty_like(x);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(sigma));
    auto* p = n.data_ptr<float>();
    const auto count = n.numel();
    for (std::int64_t i = 0; i < count; ++i) p[i] = dist(rng);
    return n;
}

torch::Tensor pixel_bernoulli(const torch::Tensor& x, Rng& rng, double p) {
    auto m = torch::empty({x.size(0), 1, x.size(2), x.size(3)});
    std::bernoulli_distribution dist(p);
    auto* q = m.data_ptr<float>();
    const auto count = m.numel();
    for (std::int64_t i = 0; i < count; ++i) q[i] = dist(rng) ? 1.0f : 0.0f;
    return m;
}

torch::Tensor jpeg_real_batch(const torch::Tensor& x, int qf) {
    auto out = torch::empty_like(x);
    for (std::int64_t i = 0; i < x.size(0); ++i)
        out[i] = encode_decode_jpeg(x[i].detach(), qf);
    return out;
}

}  // namespace

torch::Tensor apply_attack(const torch::Tensor& x, const AttackSpec& spec, AttackContext& ctx) {
    spec.validate();
    bool was_3d = false;
    auto xb = as_batched(x, was_3d).clamp(0, 1);
    const auto h = xb.size(2), w = xb.size(3);
    torch::Tensor y;

    switch (spec.kind) {
        case AttackKind::Identity: y = xb; break;
        case AttackKind::JpegSim: {
            if (!ctx.jpeg_sim)
                throw std::invalid_argument("jpeg_sim attack requires an FG-JPEG simulator hook");
            y = ctx.jpeg_sim(xb, spec.qf);
            break;
        }
        case AttackKind::JpegReal: y = jpeg_real_batch(xb, spec.qf); break;
        case AttackKind::Blur: y = gaussian_blur(xb, spec.kernel); break;
        case AttackKind::Rescale: {
            const auto sh = std::max<std::int64_t>(2, std::llround(h * spec.ratio));
            const auto sw = std::max<std::int64_t>(2, std::llround(w * spec.ratio));
            y = resize_bilinear(resize_bilinear(xb, sh, sw), h, w);
            break;
        }
        case AttackKind::Median: y = median_filter(xb, spec.window); break;
        case AttackKind::Awgn: {
            if (!ctx.rng) throw std::invalid_argument("awgn attack requires an RNG");
            y = xb + noise_like(xb, *ctx.rng, spec.sigma);
            break;
        }
        case AttackKind::Dropout: {
            if (!ctx.rng) throw std::invalid_argument("dropout attack requires an RNG");
            if (!ctx.cover) throw std::invalid_argument("dropout attack requires a cover image");
            bool cover_3d = false;
            auto cover = as_batched(*ctx.cover, cover_3d);
            TORCH_CHECK(cover.sizes() == xb.sizes(), "dropout cover shape mismatch");
            auto keep = pixel_bernoulli(xb, *ctx.rng, 1.0 - spec.p);
            y = xb * keep + cover * (1.0 - keep);
            break;
        }
        case AttackKind::Brightness: y = xb + spec.value; break;
        case AttackKind::Contrast: y = (xb - 0.5) * spec.value + 0.5; break;
    }

    y = y.clamp(0, 1);
    if (ctx.quantize) y = quantize_u8(y);
    return was_3d ? y.squeeze(0) : y;
}

// ---------------------------------------------------------------------------
// Rectification and ground-truth shifting
// ---------------------------------------------------------------------------

torch::Tensor zero_pad_resize(const torch::Tensor& x_atk, const RectMask& m_hat,
                              std::pair<std::int64_t, std::int64_t> original_hw) {
    if (!m_hat.valid()) throw std::invalid_argument("zero_pad_resize: invalid mask");
    const auto [h, w] = original_hw;
    auto [r0, r1, c0, c1] = pixel_rect(m_hat, h, w);
    if (r1 - r0 < 2 || c1 - c0 < 2)
        throw std::invalid_argument("zero_pad_resize: degenerate mask (< 2 px side)");

    bool was_3d = false;
    auto xb = as_batched(x_atk, was_3d);
    auto content = resize_bilinear(xb, r1 - r0, c1 - c0);
    auto canvas = torch::zeros({xb.size(0), xb.size(1), h, w}, xb.options());
    canvas.index_put_({Slice(), Slice(), Slice(r0, r1), Slice(c0, c1)}, content);
    return was_3d ? canvas.squeeze(0) : canvas;
}

AffineMap affine_from_masks(const RectMask& m, const RectMask& m_hat) {
    AffineMap aff;
    aff.scale_x = m_hat.width() / m.width();
    aff.scale_y = m_hat.height() / m.height();
    aff.shift_x = m_hat.x0 - m.x0 * aff.scale_x;
    aff.shift_y = m_hat.y0 - m.y0 * aff.scale_y;
    return aff;
}

torch::Tensor warp_affine(const torch::Tensor& img, const AffineMap& aff) {
    if (aff.scale_x <= 0 || aff.scale_y <= 0)
        throw std::invalid_argument("warp_affine: scales must be positive");
    bool was_3d = false;
    auto xb = as_batched(img, was_3d);
    // Inverse map in align_corners=false normalized coordinates.
    const double gx_scale = 1.0 / aff.scale_x;
    const double gy_scale = 1.0 / aff.scale_y;
    const double gx_shift = (1.0 - 2.0 * aff.shift_x) / aff.scale_x - 1.0;
    const double gy_shift = (1.0 - 2.0 * aff.shift_y) / aff.scale_y - 1.0;
    auto theta = torch::tensor({{gx_scale, 0.0, gx_shift}, {0.0, gy_scale, gy_shift}},
                               torch::kFloat32)
                     .unsqueeze(0)
                     .repeat({xb.size(0), 1, 1});
    auto grid = F::affine_grid(theta, xb.sizes().vec(), /*align_corners=*/false);
    auto out = F::grid_sample(xb, grid, F::GridSampleFuncOptions()
                                            .mode(torch::kBilinear)
                                            .padding_mode(torch::kBorder)
                                            .align_corners(false));
    return was_3d ? out.squeeze(0) : out;
}

}  // namespace clrkit
