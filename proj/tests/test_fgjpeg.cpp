#include "clrkit/fgjpeg.hpp"
#include "support.hpp"

#include <numeric>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace clrkit;

TEST_CASE("qf_to_class: exact classes, ties, totality") {
    CHECK(qf_to_class(50) == 2);
    CHECK(qf_to_class(100) == 5);
    CHECK(qf_to_class(10) == 0);
    CHECK(qf_to_class(60) == 2);  // tie 50/70 -> lower
    CHECK(qf_to_class(95) == 4);  // tie 90/100 -> lower
    CHECK(qf_to_class(0) == 0);
    CHECK_THROWS(qf_to_class(-1));
    CHECK_THROWS(qf_to_class(101));

    // Total and idempotent over [0,100].
    for (int qf = 0; qf <= 100; ++qf) {
        const int cls = qf_to_class(qf);
        CHECK(qf_to_class(class_qf(cls)) == cls);
    }

    // delta_QF = 20: a 60 image accepts class 2 (50) and class 3 (70).
    CHECK(qf_prediction_acceptable(2, 60));
    CHECK(qf_prediction_acceptable(3, 60));
    CHECK_FALSE(qf_prediction_acceptable(0, 60));
}

TEST_CASE("srm kernels are frozen through an optimizer step") {
    torch::manual_seed(0);
    auto predictor = JpegPredictor();
    auto before = predictor->srm->kernels.clone();

    torch::optim::Adam opt(predictor->parameters(), torch::optim::AdamOptions(1e-2));
    auto rng = make_rng(1);
    auto x = testing::random_image(rng, 32, 32).unsqueeze(0);
    auto loss = predictor(x).pow(2).sum();
    opt.zero_grad();
    loss.backward();
    opt.step();
    predictor->project_constraints();

    CHECK((predictor->srm->kernels - before).abs().max().item<float>() == 0.0f);
}

TEST_CASE("bayar projection invariants after optimizer steps") {
    torch::manual_seed(1);
    auto predictor = JpegPredictor();
    torch::optim::Adam opt(predictor->parameters(), torch::optim::AdamOptions(1e-3));
    auto rng = make_rng(2);
    for (int step = 0; step < 5; ++step) {
        auto x = testing::random_image(rng, 32, 32).unsqueeze(0);
        auto y = torch::tensor({static_cast<std::int64_t>(step % 6)});
        auto loss = torch::nn::functional::cross_entropy(predictor(x), y);
        opt.zero_grad();
        loss.backward();
        opt.step();
        predictor->project_constraints();

        auto w = predictor->bayar->weight;
        auto center = w.index({torch::indexing::Slice(), torch::indexing::Slice(), 2, 2});
        CHECK((center + 1.0).abs().max().item<float>() < 1e-5);
        auto total = w.sum({2, 3});
        CHECK(total.abs().max().item<float>() < 1e-4);  // off-center sum = +1
    }
}

TEST_CASE("controller: deterministic, right arity, near-identity at init") {
    torch::manual_seed(2);
    auto ctrl = JpegController();
    auto qf = torch::full({2, 1}, 0.7f);
    auto a = ctrl(qf);
    auto b = ctrl(qf);
    REQUIRE(a.pairs.size() == 3);
    const std::vector<std::int64_t> want_ch = {32, 64, 128};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.pairs[i].first.size(1) == want_ch[i]);
        CHECK((a.pairs[i].first - b.pairs[i].first).abs().max().item<float>() == 0.0f);
        CHECK((a.pairs[i].second - b.pairs[i].second).abs().max().item<float>() == 0.0f);
        // Heads are zero-initialized with bias (1,0): exact no-op conditioning.
        CHECK((a.pairs[i].first - 1.0).abs().max().item<float>() == 0.0f);
        CHECK(a.pairs[i].second.abs().max().item<float>() == 0.0f);
    }
}

TEST_CASE("simulator: shape, init-identity, differentiability") {
    torch::manual_seed(3);
    auto model = FgJpeg();
    auto rng = make_rng(3);
    auto x = testing::random_image(rng, 32, 32).unsqueeze(0);
    auto y = model->simulate(x, 50);
    CHECK(y.sizes() == x.sizes());
    // Residual head starts at zero -> simulate(x) == x, so the initial
    // conditioning is a no-op end to end.
    CHECK((y - x).abs().max().item<float>() == 0.0f);
}

TEST_CASE("simulator gradient matches finite differences") {
    torch::manual_seed(4);
    auto model = FgJpeg();
    // Make the generator non-trivial (the fresh one is the identity).
    testing::randomize_parameters(*model->generator, 5, 0.05);
    model->generator->to(torch::kFloat64);
    model->controller->to(torch::kFloat64);
    model->eval();

    auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64).requires_grad_(true);
    auto qf = torch::full({1, 1}, 0.5, torch::kFloat64);
    auto target = torch::rand({1, 3, 8, 8}, torch::kFloat64);
    auto run = [&](const torch::Tensor& input) {
        return (model->generator(input, model->controller(qf)) - target).abs().mean();
    };
    run(x).backward();
    auto analytic = x.grad().view(-1);

    const double eps = 1e-6;
    auto rng = make_rng(6);
    for (int probe = 0; probe < 24; ++probe) {
        const auto i = uniform_int(rng, 0, x.numel() - 1);
        auto xp = x.detach().clone();
        auto xm = x.detach().clone();
        xp.view(-1)[i] += eps;
        xm.view(-1)[i] -= eps;
        const double numeric = (run(xp).item<double>() - run(xm).item<double>()) / (2 * eps);
        const double got = analytic[i].item<double>();
        CHECK(std::abs(numeric - got) / std::max(1e-3, std::abs(numeric)) < 1e-3);
    }
}

TEST_CASE("pair cache round trip") {
    auto rng = make_rng(7);
    auto img = make_synthetic_image(rng, 32, 32);
    const auto dir = std::filesystem::temp_directory_path() / "clrkit_test_cache";
    std::filesystem::remove_all(dir);
    {
        JpegPairCache cache(dir);
        auto first = cache.get_or_make(img, 70);
        auto again = cache.get_or_make(img, 70);
        CHECK((first - again).abs().max().item<float>() == 0.0f);
        cache.flush_manifest();
    }
    {
        JpegPairCache cache(dir);  // reload via manifest
        auto cached = cache.get_or_make(img, 70);
        auto direct = encode_decode_jpeg(img, 70);
        CHECK((cached - direct).abs().max().item<float>() == 0.0f);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("train_fgjpeg rejects an empty dataset") {
    auto model = FgJpeg();
    CHECK_THROWS_AS(train_fgjpeg(model, {}, FgJpegTrainOptions{}), std::invalid_argument);
}

TEST_CASE("short fgjpeg training improves the l1 fit") {
    torch::manual_seed(8);
    auto model = FgJpeg();
    auto corpus = make_synthetic_corpus(11, 24, 32, 32);

    FgJpegTrainOptions opts;
    opts.predictor_steps = 30;
    opts.generator_steps = 60;
    opts.batch = 4;
    opts.seed = 9;
    auto report = train_fgjpeg(model, corpus, opts);

    // The fresh generator is the identity, so any improvement shows up as
    // sim-l1 below input-l1; at heavy compression this needs almost no steps.
    CHECK(report.sim_l1.at(10) < report.input_l1.at(10));
    REQUIRE(report.generator_loss.size() == 60);
    const double head = std::accumulate(report.generator_loss.begin(),
                                        report.generator_loss.begin() + 10, 0.0) / 10.0;
    const double tail = std::accumulate(report.generator_loss.end() - 10,
                                        report.generator_loss.end(), 0.0) / 10.0;
    CHECK(tail < head);
}
