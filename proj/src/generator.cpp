#include "clrkit/generator.hpp"

namespace F = torch::nn::functional;
using torch::indexing::None;
using torch::indexing::Slice;

namespace clrkit {

// ---------------------------------------------------------------------------
// Haar
// ---------------------------------------------------------------------------

namespace {

void check_even_hw(const torch::Tensor& x) {
    TORCH_CHECK(x.dim() >= 2, "expected at least 2 spatial dims");
    TORCH_CHECK(x.size(-1) % 2 == 0 && x.size(-2) % 2 == 0,
                "Haar transform needs even H,W, got ", x.size(-2), "x", x.size(-1));
}

// Quadrant samples of each non-overlapping 2x2 block.
struct Quads {
    torch::Tensor a, b, c, d;
};

Quads split_quads(const torch::Tensor& x) {
    return {x.index({torch::indexing::Ellipsis, Slice(0, None, 2), Slice(0, None, 2)}),
            x.index({torch::indexing::Ellipsis, Slice(0, None, 2), Slice(1, None, 2)}),
            x.index({torch::indexing::Ellipsis, Slice(1, None, 2), Slice(0, None, 2)}),
            x.index({torch::indexing::Ellipsis, Slice(1, None, 2), Slice(1, None, 2)})};
}

torch::Tensor merge_quads(const Quads& q) {
    // Interleave back to full resolution.
    auto row0 = torch::stack({q.a, q.b}, -1).flatten(-2);
    auto row1 = torch::stack({q.c, q.d}, -1).flatten(-2);
    return torch::stack({row0, row1}, -2).flatten(-3, -2);
}

}  // namespace

HaarStack haar_forward(const torch::Tensor& x) {
    check_even_hw(x);
    auto [a, b, c, d] = split_quads(x);
    HaarStack s;
    s.low = (a + b + c + d) / 2;
    s.highs[0] = (a - b + c - d) / 2;
    s.highs[1] = (a + b - c - d) / 2;
    s.highs[2] = (a - b - c + d) / 2;
    return s;
}

torch::Tensor haar_inverse(const HaarStack& s) {
    const auto& ll = s.low;
    const auto& lh = s.highs[0];
    const auto& hl = s.highs[1];
    const auto& hh = s.highs[2];
    TORCH_CHECK(lh.sizes() == ll.sizes() && hl.sizes() == ll.sizes() && hh.sizes() == ll.sizes(),
                "Haar band shape mismatch");
    Quads q;
    q.a = (ll + lh + hl + hh) / 2;
    q.b = (ll - lh + hl - hh) / 2;
    q.c = (ll + lh - hl - hh) / 2;
    q.d = (ll - lh - hl + hh) / 2;
    return merge_quads(q);
}

torch::Tensor haar_down(const torch::Tensor& x) {
    auto s = haar_forward(x);
    return torch::cat({s.low, s.highs[0], s.highs[1], s.highs[2]}, -3);
}

torch::Tensor haar_up(const torch::Tensor& x) {
    TORCH_CHECK(x.size(-3) % 4 == 0, "haar_up needs 4k channels, got ", x.size(-3));
    auto bands = x.chunk(4, -3);
    return haar_inverse({bands[0], {bands[1], bands[2], bands[3]}});
}

// ---------------------------------------------------------------------------
// Spectral normalization
// ---------------------------------------------------------------------------

namespace {

torch::Tensor l2_normalize(const torch::Tensor& v) {
    return v / v.norm().clamp_min(1e-12);
}

}  // namespace

torch::Tensor spectral_project(const torch::Tensor& weight2d, PowerIterState& state, int iters) {
    TORCH_CHECK(weight2d.dim() == 2, "spectral_project expects a 2-D weight");
    {
        torch::NoGradGuard ng;
        if (!state.u.defined()) {
            state.u = l2_normalize(torch::randn({weight2d.size(0)}, weight2d.options()));
            state.v = l2_normalize(torch::randn({weight2d.size(1)}, weight2d.options()));
        }
        for (int i = 0; i < iters; ++i) {
            state.v = l2_normalize(weight2d.t().mv(state.u));
            state.u = l2_normalize(weight2d.mv(state.v));
        }
    }
    auto sigma = state.u.dot(weight2d.mv(state.v)).clamp_min(1e-12);
    return weight2d / sigma;
}

SpectralConv2dImpl::SpectralConv2dImpl(std::int64_t in_ch, std::int64_t out_ch,
                                       std::int64_t ksize, bool spectral_norm, bool zero_init)
    : pad((ksize - 1) / 2), sn_enabled(spectral_norm) {
    weight = register_parameter("weight", torch::empty({out_ch, in_ch, ksize, ksize}));
    bias = register_parameter("bias", torch::zeros({out_ch}));
    if (zero_init) {
        torch::NoGradGuard ng;
        weight.zero_();
    } else {
        torch::nn::init::kaiming_normal_(weight, 0.2, torch::kFanIn,
                                         torch::kLeakyReLU);
    }
    u = register_buffer("u", l2_normalize(torch::randn({out_ch})));
    v = register_buffer("v", l2_normalize(torch::randn({in_ch * ksize * ksize})));
    update_power_iteration(5);
}

void SpectralConv2dImpl::update_power_iteration(int iters) {
    if (!sn_enabled) return;
    torch::NoGradGuard ng;
    auto w2 = weight.flatten(1);
    for (int i = 0; i < iters; ++i) {
        v.copy_(l2_normalize(w2.t().mv(u)));
        u.copy_(l2_normalize(w2.mv(v)));
    }
}

torch::Tensor SpectralConv2dImpl::effective_weight() const {
    if (!sn_enabled) return weight;
    auto sigma = u.dot(weight.flatten(1).mv(v)).clamp_min(1e-12);
    return weight / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
    return F::conv2d(x, effective_weight(), F::Conv2dFuncOptions().bias(bias).padding(pad));
}

// ---------------------------------------------------------------------------
// Coupling
// ---------------------------------------------------------------------------

CouplingSubnetImpl::CouplingSubnetImpl(std::int64_t in_ch, std::int64_t hidden,
                                       std::int64_t out_ch, bool spectral_norm) {
    conv1 = register_module("conv1", SpectralConv2d(in_ch, hidden, 3, spectral_norm, false));
    conv2 = register_module("conv2", SpectralConv2d(hidden, hidden, 3, spectral_norm, false));
    conv3 = register_module("conv3", SpectralConv2d(hidden, out_ch, 3, spectral_norm, true));
}

torch::Tensor CouplingSubnetImpl::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(conv1(x), 0.2);
    h = torch::leaky_relu(conv2(h), 0.2);
    return conv3(h);
}

void CouplingSubnetImpl::update_power_iteration(int iters) {
    conv1->update_power_iteration(iters);
    conv2->update_power_iteration(iters);
    conv3->update_power_iteration(iters);
}

CouplingBlockImpl::CouplingBlockImpl(std::int64_t channels, std::int64_t hidden, double clamp_,
                                     bool spectral_norm)
    : clamp(clamp_) {
    TORCH_CHECK(channels % 2 == 0, "coupling needs an even channel count, got ", channels);
    const auto half = channels / 2;
    s1 = register_module("s1", CouplingSubnet(half, hidden, half, spectral_norm));
    t1 = register_module("t1", CouplingSubnet(half, hidden, half, spectral_norm));
    s2 = register_module("s2", CouplingSubnet(half, hidden, half, spectral_norm));
    t2 = register_module("t2", CouplingSubnet(half, hidden, half, spectral_norm));
}

std::pair<torch::Tensor, torch::Tensor> CouplingBlockImpl::forward_pair(const torch::Tensor& u1,
                                                                        const torch::Tensor& u2) {
    TORCH_CHECK(u1.sizes() == u2.sizes(), "coupling halves must share a shape");
    auto v1 = u1 * torch::exp(clamp * torch::tanh(s2(u2))) + t2(u2);
    auto v2 = u2 * torch::exp(clamp * torch::tanh(s1(v1))) + t1(v1);
    return {v1, v2};
}

std::pair<torch::Tensor, torch::Tensor> CouplingBlockImpl::inverse_pair(const torch::Tensor& v1,
                                                                        const torch::Tensor& v2) {
    TORCH_CHECK(v1.sizes() == v2.sizes(), "coupling halves must share a shape");
    auto u2 = (v2 - t1(v1)) * torch::exp(-clamp * torch::tanh(s1(v1)));
    auto u1 = (v1 - t2(u2)) * torch::exp(-clamp * torch::tanh(s2(u2)));
    return {u1, u2};
}

torch::Tensor CouplingBlockImpl::forward(const torch::Tensor& x) {
    auto halves = x.chunk(2, -3);
    auto [v1, v2] = forward_pair(halves[0], halves[1]);
    return torch::cat({v1, v2}, -3);
}

torch::Tensor CouplingBlockImpl::inverse(const torch::Tensor& x) {
    auto halves = x.chunk(2, -3);
    auto [u1, u2] = inverse_pair(halves[0], halves[1]);
    return torch::cat({u1, u2}, -3);
}

void CouplingBlockImpl::update_power_iteration(int iters) {
    s1->update_power_iteration(iters);
    t1->update_power_iteration(iters);
    s2->update_power_iteration(iters);
    t2->update_power_iteration(iters);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace {

torch::nn::ModuleList make_level(std::int64_t channels, const GeneratorConfig& cfg) {
    torch::nn::ModuleList list;
    for (std::int64_t i = 0; i < cfg.couplings_per_level; ++i)
        list->push_back(CouplingBlock(channels, cfg.base_channels, cfg.clamp,
                                      cfg.use_spectral_norm));
    return list;
}

}  // namespace

InnGeneratorImpl::InnGeneratorImpl(const GeneratorConfig& cfg_) : cfg(cfg_) {
    TORCH_CHECK(cfg.levels >= 1, "generator needs at least one level");
    for (std::int64_t k = 0; k < cfg.levels; ++k) {
        const auto ch = cfg.in_channels << (2 * (k + 1));  // 3*4^(k+1)
        down_couplings->push_back(make_level(ch, cfg));
    }
    for (std::int64_t k = 0; k < cfg.levels; ++k) {
        const auto ch = cfg.in_channels << (2 * (cfg.levels - k));
        up_couplings->push_back(make_level(ch, cfg));
    }
    register_module("down_couplings", down_couplings);
    register_module("up_couplings", up_couplings);
}

namespace {

torch::Tensor run_level(torch::nn::ModuleListImpl& level, torch::Tensor x, bool inverse) {
    const auto n = static_cast<std::int64_t>(level.size());
    if (!inverse) {
        for (std::int64_t i = 0; i < n; ++i)
            x = level[static_cast<size_t>(i)]->as<CouplingBlock>()->forward(x);
    } else {
        for (std::int64_t i = n - 1; i >= 0; --i)
            x = level[static_cast<size_t>(i)]->as<CouplingBlock>()->inverse(x);
    }
    return x;
}

}  // namespace

torch::Tensor InnGeneratorImpl::protect(const torch::Tensor& image) {
    const bool batched = image.dim() == 4;
    auto x = batched ? image : image.unsqueeze(0);
    TORCH_CHECK(x.dim() == 4 && x.size(1) == cfg.in_channels, "expected {N,", cfg.in_channels,
                ",H,W}, got ", image.sizes());
    const auto div = std::int64_t{1} << cfg.levels;
    TORCH_CHECK(x.size(2) % div == 0 && x.size(3) % div == 0,
                "H,W must be divisible by 2^levels = ", div);
    for (std::int64_t k = 0; k < cfg.levels; ++k) {
        x = haar_down(x);
        x = run_level(*down_couplings[static_cast<size_t>(k)]->as<torch::nn::ModuleList>(), x, false);
    }
    for (std::int64_t k = 0; k < cfg.levels; ++k) {
        x = run_level(*up_couplings[static_cast<size_t>(k)]->as<torch::nn::ModuleList>(), x, false);
        x = haar_up(x);
    }
    return batched ? x : x.squeeze(0);
}

torch::Tensor InnGeneratorImpl::recover(const torch::Tensor& x_rect) {
    const bool batched = x_rect.dim() == 4;
    auto x = batched ? x_rect : x_rect.unsqueeze(0);
    TORCH_CHECK(x.dim() == 4 && x.size(1) == cfg.in_channels, "expected {N,", cfg.in_channels,
                ",H,W}, got ", x_rect.sizes());
    const auto div = std::int64_t{1} << cfg.levels;
    TORCH_CHECK(x.size(2) % div == 0 && x.size(3) % div == 0,
                "H,W must be divisible by 2^levels = ", div);
    for (std::int64_t k = cfg.levels - 1; k >= 0; --k) {
        x = haar_down(x);
        x = run_level(*up_couplings[static_cast<size_t>(k)]->as<torch::nn::ModuleList>(), x, true);
    }
    for (std::int64_t k = cfg.levels - 1; k >= 0; --k) {
        x = run_level(*down_couplings[static_cast<size_t>(k)]->as<torch::nn::ModuleList>(), x, true);
        x = haar_up(x);
    }
    return batched ? x : x.squeeze(0);
}

void InnGeneratorImpl::update_power_iteration(int iters) {
    for (auto& level : *down_couplings)
        for (auto& block : *level->as<torch::nn::ModuleList>())
            block->as<CouplingBlock>()->update_power_iteration(iters);
    for (auto& level : *up_couplings)
        for (auto& block : *level->as<torch::nn::ModuleList>())
            block->as<CouplingBlock>()->update_power_iteration(iters);
}

}  // namespace clrkit
