#include "clrkit/localizer.hpp"
#include "support.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace clrkit;

TEST_CASE("preprocessor: identity at init, shape preserved, Siamese sharing") {
    torch::manual_seed(0);
    auto p = Preprocessor();
    auto rng = make_rng(1);
    auto x = testing::random_image(rng, 32, 32).unsqueeze(0);

    auto [out, feats] = p->forward_with_features(x);
    CHECK(out.sizes() == x.sizes());
    CHECK((out - x).abs().max().item<float>() == 0.0f);  // residual head is zeroed
    CHECK(feats.features.size() == 6);

    // Twin calls read the identical parameter snapshot.
    testing::randomize_parameters(*p, 2, 0.05);
    auto a = p->forward(x);
    auto b = p->forward(x);
    CHECK((a - b).abs().max().item<float>() == 0.0f);
    CHECK(a.sizes() == x.sizes());
}

TEST_CASE("localizer emits ordered in-range rectangles for any input") {
    torch::manual_seed(1);
    auto c = Localizer();
    testing::randomize_parameters(*c, 3, 0.5);  // exaggerate activations
    auto rng = make_rng(4);

    for (int t = 0; t < 8; ++t) {
        auto x = (testing::random_image(rng, 32, 32) * 10.0 - 5.0).unsqueeze(0);
        auto out = c->forward(x);
        auto rect = rect_row_to_mask(out.rect[0], out.score[0].item<double>());
        CHECK(rect.valid());
        CHECK(out.score[0].item<double>() > 0.0);
        CHECK(out.score[0].item<double>() < 1.0);
        CHECK(rect.x0 < rect.x1);
        CHECK(rect.y0 < rect.y1);
    }
}

TEST_CASE("decide_cropped threshold behavior") {
    CHECK(decide_cropped({RectMask{}, 0.5}));
    CHECK_FALSE(decide_cropped({RectMask{}, 0.49}));
    CHECK(decide_cropped({RectMask{}, 1.0}));
}

TEST_CASE("soft_rect_mask approximates the binary rasterization") {
    auto rect = torch::tensor({{0.25f, 0.25f, 0.75f, 0.75f}});
    auto soft = soft_rect_mask(rect, 64, 64, 0.01);
    CHECK(soft.size(0) == 1);
    // Deep inside vs far outside.
    CHECK(soft[0][32][32].item<float>() > 0.99);
    CHECK(soft[0][2][2].item<float>() < 0.01);
    // Everything lives in (0,1).
    CHECK(soft.min().item<float>() > 0.0);
    CHECK(soft.max().item<float>() < 1.0);
}

TEST_CASE("localize returns a serializable output") {
    torch::manual_seed(2);
    auto c = Localizer();
    auto rng = make_rng(5);
    auto out = c->localize(testing::random_image(rng, 32, 32));
    auto parsed = RectMask::from_json(out.rect.to_json());
    CHECK(parsed.valid());
}
