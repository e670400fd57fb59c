#include "clrkit/generator.hpp"
#include "support.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace clrkit;

TEST_CASE("haar on constant and hand-evaluated blocks") {
    auto c = torch::full({1, 2, 2}, 0.3f);
    auto s = haar_forward(c);
    CHECK(s.low.item<float>() == doctest::Approx(0.6));  // 2c
    for (const auto& band : s.highs) CHECK(band.abs().max().item<float>() == doctest::Approx(0.0));

    // [[0,1],[0,1]]: LL = 1, vertical-difference band = -1, others 0.
    auto block = torch::tensor({{0.0f, 1.0f}, {0.0f, 1.0f}}).view({1, 2, 2});
    auto t = haar_forward(block);
    CHECK(t.low.item<float>() == doctest::Approx(1.0));
    CHECK(t.highs[0].item<float>() == doctest::Approx(-1.0));
    CHECK(t.highs[1].item<float>() == doctest::Approx(0.0));
    CHECK(t.highs[2].item<float>() == doctest::Approx(0.0));

    CHECK_THROWS(haar_forward(torch::zeros({1, 3, 4})));
}

TEST_CASE("haar round trip and energy preservation") {
    auto rng = make_rng(5);
    for (int t = 0; t < 20; ++t) {
        auto x = testing::random_image(rng, 16, 16);
        auto s = haar_forward(x);
        CHECK((haar_inverse(s) - x).abs().max().item<float>() < 1e-6);

        double energy_in = x.pow(2).sum().item<double>();
        double energy_out = s.low.pow(2).sum().item<double>();
        for (const auto& band : s.highs) energy_out += band.pow(2).sum().item<double>();
        CHECK(std::abs(energy_in - energy_out) / energy_in < 1e-6);
    }
}

TEST_CASE("haar inverse of zero stack, and LL-only equals block average") {
    HaarStack zero{torch::zeros({3, 4, 4}),
                   {torch::zeros({3, 4, 4}), torch::zeros({3, 4, 4}), torch::zeros({3, 4, 4})}};
    CHECK(haar_inverse(zero).abs().max().item<float>() == 0.0f);

    auto rng = make_rng(6);
    auto x = testing::random_image(rng, 8, 8);
    auto s = haar_forward(x);
    for (auto& band : s.highs) band = torch::zeros_like(band);
    auto smooth = haar_inverse(s);
    // Oracle: 2x2 block average, replicated.
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const auto br = r / 2 * 2, bc = c / 2 * 2;
            const float avg = (x[0][br][bc] + x[0][br][bc + 1] + x[0][br + 1][bc] +
                               x[0][br + 1][bc + 1]).item<float>() / 4.0f;
            CHECK(smooth[0][r][c].item<float>() == doctest::Approx(avg).epsilon(1e-5));
        }
}

TEST_CASE("coupling: zero-init subnets give the identity") {
    torch::manual_seed(0);
    auto block = CouplingBlock(8, 16, 2.0, true);
    // Fresh blocks have zero final layers, so both subnets output zero only if
    // conv1/conv2 feed a zeroed conv3; that is the construction.
    auto rng = make_rng(9);
    auto x = testing::random_image(rng, 8, 8, 8).unsqueeze(0);
    auto y = block->forward(x);
    CHECK((y - x).abs().max().item<float>() == doctest::Approx(0.0));
}

TEST_CASE("coupling: hand-evaluated scalar case") {
    // u1=1, u2=2, s2=0.5, t2=0.1, s1=0, t1=0, clamp=2:
    // v1 = exp(2*tanh(0.5)) + 0.1, v2 = 2.
    const double clamp = 2.0;
    const double v1_want = std::exp(clamp * std::tanh(0.5)) + 0.1;

    auto u1 = torch::full({1, 1, 1, 1}, 1.0f);
    auto u2 = torch::full({1, 1, 1, 1}, 2.0f);
    auto s2 = torch::full({1, 1, 1, 1}, 0.5f);
    auto t2 = torch::full({1, 1, 1, 1}, 0.1f);
    auto v1 = u1 * torch::exp(clamp * torch::tanh(s2)) + t2;
    auto v2 = u2 * torch::exp(clamp * torch::tanh(torch::zeros_like(u1))) +
              torch::zeros_like(u1);
    CHECK(v1.item<float>() == doctest::Approx(v1_want).epsilon(1e-6));
    CHECK(v2.item<float>() == doctest::Approx(2.0));
}

TEST_CASE("coupling round trip with random parameters") {
    torch::manual_seed(1);
    auto block = CouplingBlock(8, 16, 2.0, false);
    testing::randomize_parameters(*block, 42, 0.05);
    auto rng = make_rng(10);
    for (int t = 0; t < 10; ++t) {
        auto x = testing::random_image(rng, 8, 8, 8).unsqueeze(0);
        auto u = block->inverse(block->forward(x));
        CHECK((u - x).abs().max().item<float>() < 1e-5);
    }
}

TEST_CASE("coupling gradients match central finite differences") {
    torch::manual_seed(2);
    auto block = CouplingBlock(2, 4, 2.0, false);
    testing::randomize_parameters(*block, 7, 0.1);
    block->to(torch::kFloat64);

    auto x = torch::rand({1, 2, 2, 2}, torch::kFloat64).requires_grad_(true);
    auto weights = torch::rand({1, 2, 2, 2}, torch::kFloat64);
    (block->forward(x) * weights).sum().backward();
    auto analytic = x.grad().clone();

    const double eps = 1e-6;
    auto flat = x.detach().view(-1);
    auto grad_flat = analytic.view(-1);
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
        auto xp = x.detach().clone();
        auto xm = x.detach().clone();
        xp.view(-1)[i] += eps;
        xm.view(-1)[i] -= eps;
        const double fp = (block->forward(xp) * weights).sum().item<double>();
        const double fm = (block->forward(xm) * weights).sum().item<double>();
        const double numeric = (fp - fm) / (2 * eps);
        const double got = grad_flat[i].item<double>();
        CHECK(std::abs(numeric - got) / std::max(1.0, std::abs(numeric)) < 1e-3);
    }
}

TEST_CASE("spectral_project against an SVD oracle") {
    torch::manual_seed(3);
    {
        PowerIterState st;
        auto eye = torch::eye(4);
        auto w = spectral_project(eye, st, 10);
        CHECK((w - eye).abs().max().item<float>() < 1e-4);
    }
    {
        PowerIterState st;
        auto d = torch::diag(torch::tensor({2.0f, 1.0f}));
        auto w = spectral_project(d, st, 10);
        CHECK(w[0][0].item<float>() == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(w[1][1].item<float>() == doctest::Approx(0.5).epsilon(1e-3));
    }
    for (int t = 0; t < 5; ++t) {
        PowerIterState st;
        auto m = torch::randn({64, 64});
        auto w = spectral_project(m, st, 100);
        const auto smax = torch::linalg_svdvals(w)[0].item<float>();
        CHECK(smax > 0.99);
        CHECK(smax < 1.01);
    }
}

TEST_CASE("generator: identity at initialization") {
    torch::manual_seed(4);
    GeneratorConfig cfg;
    cfg.levels = 2;
    cfg.couplings_per_level = 2;
    cfg.base_channels = 8;
    auto g = InnGenerator(cfg);
    auto rng = make_rng(12);
    auto x = testing::random_image(rng, 16, 16);
    auto y = g->protect(x);
    CHECK((y - x).abs().max().item<float>() == doctest::Approx(0.0));
}

TEST_CASE("generator bijectivity with random parameters") {
    torch::manual_seed(5);
    GeneratorConfig cfg;
    cfg.levels = 3;
    cfg.couplings_per_level = 2;
    cfg.base_channels = 8;
    auto g = InnGenerator(cfg);
    testing::randomize_parameters(*g, 77, 0.05);
    g->update_power_iteration(5);
    g->eval();

    auto rng = make_rng(13);
    for (int t = 0; t < 10; ++t) {
        auto x = testing::random_image(rng, 64, 64);
        auto y = g->protect(x);
        auto back = g->recover(y);
        CHECK((back - x).abs().max().item<float>() < 1e-4);
    }
    CHECK_THROWS(g->protect(torch::rand({3, 20, 20})));  // not divisible by 8
}
