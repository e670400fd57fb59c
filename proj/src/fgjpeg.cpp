#include "clrkit/fgjpeg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace F = torch::nn::functional;

namespace clrkit {

// ---------------------------------------------------------------------------
// QF classes
// ---------------------------------------------------------------------------

int qf_to_class(int qf) {
    if (qf < 0 || qf > 100) throw std::invalid_argument("qf must be in [0,100]");
    int best = 0;
    int best_dist = std::abs(qf - kQfClasses[0]);
    for (int i = 1; i < static_cast<int>(kQfClasses.size()); ++i) {
        const int d = std::abs(qf - kQfClasses[static_cast<std::size_t>(i)]);
        if (d < best_dist) {  // strict: ties stay at the lower class
            best = i;
            best_dist = d;
        }
    }
    return best;
}

int class_qf(int index) {
    if (index < 0 || index >= static_cast<int>(kQfClasses.size()))
        throw std::invalid_argument("class index out of range");
    return kQfClasses[static_cast<std::size_t>(index)];
}

bool qf_prediction_acceptable(int predicted_class, int true_qf) {
    return std::abs(class_qf(predicted_class) - true_qf) <= kQfTolerance;
}

// ---------------------------------------------------------------------------
// Pair cache
// ---------------------------------------------------------------------------

JpegPairCache::JpegPairCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    const auto manifest = dir_ / "manifest.json";
    if (std::filesystem::exists(manifest)) {
        auto j = nlohmann::json::parse(read_file(manifest));
        for (auto& [k, v] : j.items()) manifest_[k] = v.get<std::string>();
    }
}

ImageGrid JpegPairCache::get_or_make(const ImageGrid& clean, int qf) {
    const std::string key = hex64(image_hash(clean)) + "_q" + std::to_string(qf);
    auto it = manifest_.find(key);
    if (it != manifest_.end()) {
        const auto path = dir_ / it->second;
        if (std::filesystem::exists(path)) return load_image(path);
    }
    auto decoded = encode_decode_jpeg(clean, qf);
    const std::string file = key + ".png";
    save_png8(dir_ / file, decoded);
    manifest_[key] = file;
    return decoded;
}

void JpegPairCache::flush_manifest() const {
    nlohmann::json j;
    for (const auto& [k, v] : manifest_) j[k] = v;
    atomic_write(dir_ / "manifest.json", j.dump(2));
}

// ---------------------------------------------------------------------------
// SRM / Bayar
// ---------------------------------------------------------------------------

SrmConvImpl::SrmConvImpl() {
    // The standard three high-pass residual kernels, one bank per channel.
    const float q4 = 1.0f / 4.0f, q12 = 1.0f / 12.0f, q2 = 1.0f / 2.0f;
    auto k = torch::zeros({3, 5, 5});
    // second-order 3x3
    const float so[3][3] = {{-1, 2, -1}, {2, -4, 2}, {-1, 2, -1}};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) k[0][r + 1][c + 1] = so[r][c] * q4;
    // KB 5x5
    const float kb[5][5] = {{-1, 2, -2, 2, -1},
                            {2, -6, 8, -6, 2},
                            {-2, 8, -12, 8, -2},
                            {2, -6, 8, -6, 2},
                            {-1, 2, -2, 2, -1}};
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) k[1][r][c] = kb[r][c] * q12;
    // first-order horizontal
    k[2][2][1] = 1 * q2;
    k[2][2][2] = -2 * q2;
    k[2][2][3] = 1 * q2;

    // {9,1,5,5}: three kernels applied independently to each RGB channel.
    kernels = register_buffer("kernels", k.repeat({3, 1, 1}).unsqueeze(1).contiguous());
}

torch::Tensor SrmConvImpl::forward(const torch::Tensor& x) {
    return F::conv2d(x, kernels, F::Conv2dFuncOptions().padding(2).groups(3));
}

BayarConv2dImpl::BayarConv2dImpl(std::int64_t in_ch, std::int64_t out_ch) {
    auto w = torch::rand({out_ch, in_ch, 5, 5});
    weight = register_parameter("weight", w);
    project();
}

void BayarConv2dImpl::project() {
    torch::NoGradGuard ng;
    using torch::indexing::Slice;
    auto center = weight.index({Slice(), Slice(), 2, 2});
    center.zero_();
    auto off_sum = weight.sum({2, 3}, /*keepdim=*/true);
    weight.div_(off_sum);
    weight.index_put_({Slice(), Slice(), 2, 2}, -1.0);
}

torch::Tensor BayarConv2dImpl::forward(const torch::Tensor& x) {
    return F::conv2d(x, weight, F::Conv2dFuncOptions().padding(2));
}

// ---------------------------------------------------------------------------
// Predictor
// ---------------------------------------------------------------------------

namespace {

struct ResidualBlockImpl : torch::nn::Module {
    ResidualBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride) {
        conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3)
                                                               .stride(stride)
                                                               .padding(1)
                                                               .bias(false)));
        bn1 = register_module("bn1", torch::nn::BatchNorm2d(out_ch));
        conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3)
                                                               .padding(1)
                                                               .bias(false)));
        bn2 = register_module("bn2", torch::nn::BatchNorm2d(out_ch));
        if (stride != 1 || in_ch != out_ch) {
            skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)
                                                                 .stride(stride)
                                                                 .bias(false)));
            skip_bn = register_module("skip_bn", torch::nn::BatchNorm2d(out_ch));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto h = torch::relu(bn1(conv1(x)));
        h = bn2(conv2(h));
        auto s = skip ? skip_bn(skip(x)) : x;
        return torch::relu(h + s);
    }

    torch::nn::Conv2d conv1 = nullptr, conv2 = nullptr, skip = nullptr;
    torch::nn::BatchNorm2d bn1 = nullptr, bn2 = nullptr, skip_bn = nullptr;
};
TORCH_MODULE(ResidualBlock);

torch::nn::Sequential make_stage(std::int64_t in_ch, std::int64_t out_ch, int blocks,
                                 std::int64_t first_stride) {
    torch::nn::Sequential seq;
    seq->push_back(ResidualBlock(in_ch, out_ch, first_stride));
    for (int i = 1; i < blocks; ++i) seq->push_back(ResidualBlock(out_ch, out_ch, 1));
    return seq;
}

}  // namespace

JpegPredictorImpl::JpegPredictorImpl() {
    plain = register_module("plain",
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 8, 3).padding(1)));
    srm = register_module("srm", SrmConv());
    bayar = register_module("bayar", BayarConv2d(3, 8));
    // Residual front-end runs at full resolution; the stem downsamples once.
    stem = register_module(
        "stem", torch::nn::Sequential(
                    torch::nn::Conv2d(
                        torch::nn::Conv2dOptions(25, 16, 3).stride(2).padding(1).bias(false)),
                    torch::nn::BatchNorm2d(16), torch::nn::ReLU()));
    stage1 = register_module("stage1", make_stage(16, 16, 5, 1));
    stage2 = register_module("stage2", make_stage(16, 32, 5, 2));
    stage3 = register_module("stage3", make_stage(32, 64, 5, 2));
    fc = register_module("fc", torch::nn::Linear(64, 6));
}

torch::Tensor JpegPredictorImpl::forward(const torch::Tensor& x) {
    auto front = torch::cat({plain(x), srm(x), bayar(x)}, 1);
    auto h = stem->forward(front);
    h = stage3->forward(stage2->forward(stage1->forward(h)));
    return fc(h.mean({2, 3}));
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

JpegControllerImpl::JpegControllerImpl(std::vector<std::int64_t> level_channels_)
    : level_channels(std::move(level_channels_)) {
    embed1 = register_module("embed1", torch::nn::Linear(1, 64));
    embed2 = register_module("embed2", torch::nn::Linear(64, 64));
    embed3 = register_module("embed3", torch::nn::Linear(64, 64));
    for (std::size_t i = 0; i < level_channels.size(); ++i) {
        auto head = torch::nn::Linear(64, 2 * level_channels[i]);
        {
            torch::NoGradGuard ng;
            head->weight.zero_();
            head->bias.index({torch::indexing::Slice(0, level_channels[i])}).fill_(1.0);
            head->bias.index({torch::indexing::Slice(level_channels[i], torch::indexing::None)})
                .zero_();
        }
        heads.push_back(head);
        register_module("head" + std::to_string(i + 1), head);
    }
}

ModulationPairs JpegControllerImpl::forward(const torch::Tensor& qf_normalized) {
    TORCH_CHECK(qf_normalized.dim() == 2 && qf_normalized.size(1) == 1,
                "controller expects {N,1} normalized QF");
    auto h = torch::leaky_relu(embed1(qf_normalized), 0.2);
    h = torch::leaky_relu(embed2(h), 0.2);
    h = torch::leaky_relu(embed3(h), 0.2);
    ModulationPairs mod;
    for (std::size_t i = 0; i < heads.size(); ++i) {
        auto ab = heads[i](h);
        const auto c = level_channels[i];
        auto a = ab.index({torch::indexing::Slice(), torch::indexing::Slice(0, c)})
                     .view({-1, c, 1, 1});
        auto b = ab.index({torch::indexing::Slice(), torch::indexing::Slice(c, 2 * c)})
                     .view({-1, c, 1, 1});
        mod.pairs.emplace_back(a, b);
    }
    return mod;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace {

torch::Tensor down2(const torch::Tensor& x) {
    return resize_bilinear(x, x.size(-2) / 2, x.size(-1) / 2);
}

torch::Tensor up2(const torch::Tensor& x) {
    return resize_bilinear(x, x.size(-2) * 2, x.size(-1) * 2);
}

}  // namespace

JpegGeneratorImpl::JpegGeneratorImpl() {
    enc1 = register_module("enc1", ConvBlock(3, 16));
    enc2 = register_module("enc2", ConvBlock(16, 32));
    enc3 = register_module("enc3", ConvBlock(32, 64));
    enc4 = register_module("enc4", ConvBlock(64, 128));
    bridge1 = register_module("bridge1", ConvBlock(16, 16));
    bridge2 = register_module("bridge2", ConvBlock(32, 32));
    bridge3 = register_module("bridge3", ConvBlock(64, 64));
    bridge4 = register_module("bridge4", ConvBlock(128, 128));
    dec3 = register_module("dec3", ConvBlock(128 + 64, 64));
    dec2 = register_module("dec2", ConvBlock(64 + 32, 32));
    dec1 = register_module("dec1", ConvBlock(32 + 16, 16));
    out_conv = register_module("out_conv",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 3, 3).padding(1)));
    zero_init_conv(out_conv);  // a fresh simulator is the identity
}

torch::Tensor JpegGeneratorImpl::forward(const torch::Tensor& x, const ModulationPairs& mod) {
    TORCH_CHECK(mod.pairs.size() == 3, "expected modulation pairs for the lower three levels");
    auto e1 = enc1(x);
    auto e2 = enc2(down2(e1));
    auto e3 = enc3(down2(e2));
    auto e4 = enc4(down2(e3));

    auto b1 = bridge1(e1);
    auto b2 = mod.pairs[0].first * bridge2(e2) + mod.pairs[0].second;
    auto b3 = mod.pairs[1].first * bridge3(e3) + mod.pairs[1].second;
    auto b4 = mod.pairs[2].first * bridge4(e4) + mod.pairs[2].second;

    auto d3 = dec3(torch::cat({up2(b4), b3}, 1));
    auto d2 = dec2(torch::cat({up2(d3), b2}, 1));
    auto d1 = dec1(torch::cat({up2(d2), b1}, 1));
    return torch::clamp(x + out_conv(d1), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

FgJpegImpl::FgJpegImpl() {
    generator = register_module("generator", JpegGenerator());
    controller = register_module("controller", JpegController());
    predictor = register_module("predictor", JpegPredictor());
}

torch::Tensor FgJpegImpl::simulate(const torch::Tensor& x, int qf) {
    const bool batched = x.dim() == 4;
    auto xb = batched ? x : x.unsqueeze(0);
    auto qfs = torch::full({xb.size(0)}, qf, torch::kInt64);
    auto y = simulate_batch(xb, qfs);
    return batched ? y : y.squeeze(0);
}

torch::Tensor FgJpegImpl::simulate_batch(const torch::Tensor& x, const torch::Tensor& qfs) {
    TORCH_CHECK(x.dim() == 4, "simulate_batch expects {N,3,H,W}");
    TORCH_CHECK(qfs.size(0) == x.size(0), "one QF per sample");
    auto qf_norm = (qfs.to(torch::kFloat32) / 100.0).view({-1, 1});
    return generator(x, controller(qf_norm));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

torch::Tensor awgn_like(const torch::Tensor& x, Rng& rng, double sigma) {
    auto n = torch::empty_like(x);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(sigma));
    auto* p = n.data_ptr<float>();
    for (std::int64_t i = 0; i < n.numel(); ++i) p[i] = dist(rng);
    return n;
}

}  // namespace

FgJpegTrainReport train_fgjpeg(FgJpeg& model, const std::vector<ImageGrid>& corpus,
                               const FgJpegTrainOptions& opts) {
    if (corpus.empty()) throw std::invalid_argument("train_fgjpeg: empty dataset");
    auto log = [&](const std::string& s) {
        if (opts.log) opts.log(s);
    };
    Rng rng = make_rng(opts.seed);

    const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     corpus.size() * opts.holdout_fraction));
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
    if (train.empty()) throw std::invalid_argument("train_fgjpeg: dataset too small for a holdout");

    std::unique_ptr<JpegPairCache> cache;
    if (!opts.cache_dir.empty()) cache = std::make_unique<JpegPairCache>(opts.cache_dir);
    auto real_jpeg = [&](const ImageGrid& img, int qf) {
        return cache ? cache->get_or_make(img, qf) : encode_decode_jpeg(img, qf);
    };

    FgJpegTrainReport report;

    // Phase 1: predictor on real-codec images at the class QFs.
    {
        model->predictor->train();
        torch::optim::Adam opt(model->predictor->parameters(),
                               torch::optim::AdamOptions(opts.lr_predictor));
        for (std::int64_t step = 0; step < opts.predictor_steps; ++step) {
            std::vector<torch::Tensor> xs;
            std::vector<std::int64_t> ys;
            for (std::int64_t i = 0; i < opts.batch; ++i) {
                const auto& img = corpus[train[static_cast<std::size_t>(
                    uniform_int(rng, 0, static_cast<std::int64_t>(train.size()) - 1))]];
                const int cls = static_cast<int>(uniform_int(rng, 0, 5));
                xs.push_back(real_jpeg(img, class_qf(cls)));
                ys.push_back(cls);
            }
            auto x = torch::stack(xs);
            auto y = torch::tensor(ys, torch::kInt64);
            auto loss = F::cross_entropy(model->predictor(x), y);
            opt.zero_grad();
            loss.backward();
            opt.step();
            model->predictor->project_constraints();
            if (step % 100 == 0)
                log("fgjpeg predictor step " + std::to_string(step) + " ce " +
                    std::to_string(loss.item<double>()));
        }
    }

    // Freeze the predictor for the joint phase.
    model->predictor->eval();
    for (auto& p : model->predictor->parameters()) p.set_requires_grad(false);

    // Phase 2: generator + controller against real pairs.
    {
        model->generator->train();
        model->controller->train();
        std::vector<torch::Tensor> params;
        for (auto& p : model->generator->parameters()) params.push_back(p);
        for (auto& p : model->controller->parameters()) params.push_back(p);
        torch::optim::Adam opt(params, torch::optim::AdamOptions(opts.lr_generator));

        for (std::int64_t step = 0; step < opts.generator_steps; ++step) {
            std::vector<torch::Tensor> xs, ts;
            std::vector<std::int64_t> qfs, cls;
            for (std::int64_t i = 0; i < opts.batch; ++i) {
                const auto& img = corpus[train[static_cast<std::size_t>(
                    uniform_int(rng, 0, static_cast<std::int64_t>(train.size()) - 1))]];
                int qf;
                if (uniform(rng, 0, 1) < opts.uniform_qf_fraction)
                    qf = static_cast<int>(uniform_int(rng, 0, 100));
                else
                    qf = class_qf(static_cast<int>(uniform_int(rng, 0, 5)));
                auto target = real_jpeg(img, qf);
                auto input = img;
                if (uniform(rng, 0, 1) < opts.awgn_prob)
                    input = (img + awgn_like(img, rng, opts.awgn_sigma)).clamp(0, 1);
                xs.push_back(input);
                ts.push_back(target);
                qfs.push_back(qf);
                cls.push_back(qf_to_class(qf));
            }
            auto x = torch::stack(xs);
            auto target = torch::stack(ts);
            auto sim = model->simulate_batch(x, torch::tensor(qfs, torch::kInt64));
            auto l1 = (sim - target).abs().mean();
            auto ce = F::cross_entropy(model->predictor(sim), torch::tensor(cls, torch::kInt64));
            auto loss = l1 + opts.epsilon * ce;
            opt.zero_grad();
            loss.backward();
            opt.step();
            report.generator_loss.push_back(loss.item<double>());
            if (step % 100 == 0)
                log("fgjpeg generator step " + std::to_string(step) + " l1 " +
                    std::to_string(l1.item<double>()) + " ce " + std::to_string(ce.item<double>()));
        }
    }

    // Held-out evaluation.
    {
        torch::NoGradGuard ng;
        model->eval();
        std::int64_t correct = 0, acceptable = 0, total = 0;
        std::map<int, double> sim_sum, input_sum;
        std::map<int, std::int64_t> count;
        for (auto hi : hold) {
            const auto& img = corpus[hi];
            for (int cls = 0; cls < 6; ++cls) {
                const int qf = class_qf(cls);
                auto real = real_jpeg(img, qf);
                auto pred = model->predictor(real.unsqueeze(0)).argmax(1).item<std::int64_t>();
                correct += (pred == cls);
                acceptable += qf_prediction_acceptable(static_cast<int>(pred), qf);
                ++total;
                auto sim = model->simulate(img, qf);
                sim_sum[qf] += (sim - real).abs().mean().item<double>();
                input_sum[qf] += (img - real).abs().mean().item<double>();
                ++count[qf];
            }
        }
        report.predictor_class_accuracy = static_cast<double>(correct) / static_cast<double>(total);
        report.predictor_acceptable_accuracy =
            static_cast<double>(acceptable) / static_cast<double>(total);
        for (const auto& [qf, s] : sim_sum) {
            report.sim_l1[qf] = s / static_cast<double>(count[qf]);
            report.input_l1[qf] = input_sum[qf] / static_cast<double>(count[qf]);
        }
    }
    if (cache) cache->flush_manifest();
    return report;
}

}  // namespace clrkit
