#include "clrkit/attacks.hpp"
#include "clrkit/metrics.hpp"
#include "support.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace clrkit;

TEST_CASE("attack spec text round trip") {
    for (const std::string s : {"identity", "jpeg_real:qf=70", "jpeg_sim:qf=30", "blur:k=5",
                                "rescale:ratio=1.5", "median:window=4", "awgn:sigma=0.03",
                                "dropout:p=0.3"}) {
        auto spec = AttackSpec::parse(s);
        CHECK(AttackSpec::parse(spec.to_string()).to_string() == spec.to_string());
    }
    CHECK_THROWS(AttackSpec::parse("warp:deg=3"));
    CHECK_THROWS(AttackSpec::parse("blur:k=4"));
    CHECK_THROWS(AttackSpec::parse("rescale:ratio=3"));
    CHECK_THROWS(AttackSpec::parse("jpeg_real:qf=150"));
}

TEST_CASE("sample_crop: full frame, determinism, area accuracy") {
    CropSpec spec;
    spec.rate = 1.0;
    auto rng = make_rng(42);
    auto full = sample_crop(rng, spec, 64, 64);
    CHECK(full.x0 == 0.0);
    CHECK(full.y0 == 0.0);
    CHECK(full.x1 == 1.0);
    CHECK(full.y1 == 1.0);

    spec.rate = 0.7;
    auto r1 = make_rng(42);
    auto r2 = make_rng(42);
    auto a = sample_crop(r1, spec, 64, 64);
    auto b = sample_crop(r2, spec, 64, 64);
    CHECK(a.x0 == b.x0);
    CHECK(a.y0 == b.y0);
    CHECK(a.x1 == b.x1);
    CHECK(a.y1 == b.y1);

    spec.rate = 0.4;
    auto rng3 = make_rng(1);
    for (int t = 0; t < 1000; ++t) {
        auto m = sample_crop(rng3, spec, 64, 64);
        const double frac = rasterize(m, 64, 64).mean().item<float>();
        CHECK(frac >= 0.38);
        CHECK(frac <= 0.42);
    }
    CropSpec bad;
    bad.rate = 0.2;
    CHECK_THROWS(sample_crop(rng3, bad, 64, 64));
}

TEST_CASE("region_select: full frame, quadrant color, oracle upsample") {
    auto rng = make_rng(2);
    auto x = testing::random_image(rng, 32, 32);
    auto full = region_select(x, RectMask{0, 0, 1, 1});
    CHECK((full - x).abs().max().item<float>() == 0.0f);

    // 4-quadrant test image.
    auto quad = torch::zeros({3, 32, 32});
    using torch::indexing::Slice;
    quad.index_put_({0, Slice(0, 16), Slice(0, 16)}, 1.0f);   // top-left pure red
    quad.index_put_({1, Slice(0, 16), Slice(16, 32)}, 1.0f);  // top-right pure green
    quad.index_put_({2, Slice(16, 32), Slice(0, 16)}, 1.0f);  // bottom-left pure blue
    auto tl = region_select(quad, RectMask{0, 0, 0.5, 0.5});
    CHECK(tl.sizes() == torch::IntArrayRef({3, 16, 16}));
    CHECK(tl[0].min().item<float>() == 1.0f);
    CHECK(tl[1].abs().max().item<float>() == 0.0f);
    CHECK(tl[2].abs().max().item<float>() == 0.0f);

    // Resize path equals the independent bilinear resampler.
    auto up = region_select(x, RectMask{0, 0, 0.5, 0.5}, {{32, 32}});
    auto crop = x.index({Slice(), Slice(0, 16), Slice(0, 16)});
    auto want = resize_bilinear(crop, 32, 32);
    CHECK((up - want).abs().max().item<float>() < 1e-6);

    CHECK_THROWS(region_select(x, RectMask{0, 0, 0.01, 0.01}));
}

TEST_CASE("quantize_u8: grid values, rounding, straight-through gradient") {
    auto grid = torch::tensor({0.0f, 1.0f / 255.0f, 200.0f / 255.0f, 1.0f});
    CHECK((quantize_u8(grid) - grid).abs().max().item<float>() < 1e-7);

    CHECK(quantize_u8(torch::tensor({0.5f})).item<float>() ==
          doctest::Approx(128.0 / 255.0));  // round half away from zero

    auto x = torch::rand({3, 8, 8}).requires_grad_(true);
    quantize_u8(x).sum().backward();
    CHECK((x.grad() - torch::ones_like(x)).abs().max().item<float>() == 0.0f);
}

TEST_CASE("apply_attack: identity quantizes only; outputs live on the u8 grid") {
    auto rng = make_rng(3);
    auto x = testing::random_image(rng, 16, 16);
    AttackContext ctx;
    ctx.rng = &rng;

    auto y = apply_attack(x, AttackSpec{}, ctx);
    CHECK((y - quantize_u8(x)).abs().max().item<float>() == 0.0f);

    for (const std::string s :
         {"blur:k=3", "blur:k=5", "rescale:ratio=0.5", "rescale:ratio=2", "median:window=4",
          "awgn:sigma=0.03", "jpeg_real:qf=70"}) {
        auto out = apply_attack(x, AttackSpec::parse(s), ctx);
        CHECK(out.min().item<float>() >= 0.0f);
        CHECK(out.max().item<float>() <= 1.0f);
        auto snapped = torch::round(out * 255.0f) / 255.0f;
        CHECK((out - snapped).abs().max().item<float>() < 1e-6);
    }
}

TEST_CASE("rescale attack: down-up round trip degrades but stays finite") {
    auto rng = make_rng(4);
    auto x = testing::random_image(rng, 32, 32);
    AttackContext ctx;
    ctx.rng = &rng;
    auto out = apply_attack(x, AttackSpec::parse("rescale:ratio=0.5"), ctx);
    // Oracle: independent resampler chain.
    auto want = quantize_u8(resize_bilinear(resize_bilinear(x, 16, 16), 32, 32).clamp(0, 1));
    CHECK((out - want).abs().max().item<float>() < 1e-6);
    const double p = psnr(out, x);
    CHECK(p < 100.0);
    CHECK(p > 5.0);
}

TEST_CASE("awgn attack: empirical noise statistics") {
    auto rng = make_rng(5);
    auto x = torch::full({3, 64, 64}, 0.5f);  // interior values, clip-free
    AttackContext ctx;
    ctx.rng = &rng;
    ctx.quantize = false;
    auto out = apply_attack(x, AttackSpec::parse("awgn:sigma=0.03"), ctx);
    const double std = (out - x).std().item<double>();
    CHECK(std > 0.025);
    CHECK(std < 0.035);
}

TEST_CASE("dropout attack: pixels come from exactly one of the two sources") {
    auto rng = make_rng(6);
    auto x = torch::zeros({3, 16, 16});
    auto cover = torch::ones({3, 16, 16});
    AttackContext ctx;
    ctx.rng = &rng;
    ctx.cover = &cover;
    ctx.quantize = false;
    auto out = apply_attack(x, AttackSpec::parse("dropout:p=0.4"), ctx);
    const double frac = out.mean().item<double>();
    CHECK(frac > 0.25);
    CHECK(frac < 0.55);
    CHECK(((out == 0.0f) | (out == 1.0f)).all().item<bool>());
}

TEST_CASE("zero_pad_resize composes with region_select as a masked identity") {
    auto rng = make_rng(7);
    auto x = testing::random_image(rng, 64, 64);

    auto same = zero_pad_resize(x, RectMask{0, 0, 1, 1}, {64, 64});
    CHECK((same - x).abs().max().item<float>() < 1e-6);

    RectMask m{0.25, 0.25, 0.75, 0.75};
    auto crop = region_select(x, m);
    auto padded = zero_pad_resize(crop, m, {64, 64});
    auto masked = x * rasterize(m, 64, 64).unsqueeze(0);
    CHECK((padded - masked).abs().mean().item<float>() < 1e-2);

    auto quarter = zero_pad_resize(crop, RectMask{0, 0, 0.5, 0.5}, {64, 64});
    const auto zero_sites = (quarter == 0).all(0).sum().item<std::int64_t>();
    CHECK(zero_sites == 3 * 64 * 64 / 4);  // exactly 3/4 of pixel sites blank
}

TEST_CASE("affine_from_masks solves the two-point problem") {
    RectMask m{0.1, 0.2, 0.5, 0.6};
    auto ident = affine_from_masks(m, m);
    CHECK(ident.scale_x == doctest::Approx(1.0));
    CHECK(ident.scale_y == doctest::Approx(1.0));
    CHECK(ident.shift_x == doctest::Approx(0.0));
    CHECK(ident.shift_y == doctest::Approx(0.0));

    RectMask shifted{0.2, 0.2, 0.6, 0.6};
    auto t = affine_from_masks(m, shifted);
    CHECK(t.scale_x == doctest::Approx(1.0));
    CHECK(t.shift_x == doctest::Approx(0.1));
    CHECK(t.shift_y == doctest::Approx(0.0));

    auto d = affine_from_masks(RectMask{0, 0, 0.5, 0.5}, RectMask{0, 0, 1, 1});
    CHECK(d.scale_x == doctest::Approx(2.0));
    CHECK(d.scale_y == doctest::Approx(2.0));
    CHECK(d.shift_x == doctest::Approx(0.0));

    // Linear-solve oracle on random pairs: check Aff maps corners onto corners.
    auto rng = make_rng(8);
    for (int i = 0; i < 50; ++i) {
        RectMask a{uniform(rng, 0, 0.4), uniform(rng, 0, 0.4), 0, 0};
        a.x1 = a.x0 + uniform(rng, 0.2, 0.5);
        a.y1 = a.y0 + uniform(rng, 0.2, 0.5);
        RectMask b{uniform(rng, 0, 0.4), uniform(rng, 0, 0.4), 0, 0};
        b.x1 = b.x0 + uniform(rng, 0.2, 0.5);
        b.y1 = b.y0 + uniform(rng, 0.2, 0.5);
        auto aff = affine_from_masks(a, b);
        CHECK(aff.scale_x * a.x0 + aff.shift_x == doctest::Approx(b.x0).epsilon(1e-9));
        CHECK(aff.scale_x * a.x1 + aff.shift_x == doctest::Approx(b.x1).epsilon(1e-9));
        CHECK(aff.scale_y * a.y0 + aff.shift_y == doctest::Approx(b.y0).epsilon(1e-9));
        CHECK(aff.scale_y * a.y1 + aff.shift_y == doctest::Approx(b.y1).epsilon(1e-9));
    }
}

TEST_CASE("warp_affine: identity map is exact") {
    auto rng = make_rng(9);
    auto x = testing::random_image(rng, 16, 16);
    auto y = warp_affine(x, AffineMap{});
    CHECK((y - x).abs().max().item<float>() < 1e-5);
}
