#ifndef CLRKIT_GENERATOR_HPP
#define CLRKIT_GENERATOR_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "clrkit/image.hpp"

namespace clrkit {

// ---------------------------------------------------------------------------
// Orthonormal 2x2 Haar analysis/synthesis
// ---------------------------------------------------------------------------

struct HaarStack {
    torch::Tensor low;                    // LL, {...,C,H/2,W/2}
    std::array<torch::Tensor, 3> highs;   // LH (vertical-edge), HL, HH
};

HaarStack haar_forward(const torch::Tensor& x);
torch::Tensor haar_inverse(const HaarStack& s);

// Channel-packed forms used inside the generator: {N,C,H,W} <-> {N,4C,H/2,W/2}
// with band order [LL | LH | HL | HH].
torch::Tensor haar_down(const torch::Tensor& x);
torch::Tensor haar_up(const torch::Tensor& x);

// ---------------------------------------------------------------------------
// Spectral normalization (power iteration with persistent vectors)
// ---------------------------------------------------------------------------

struct PowerIterState {
    torch::Tensor u, v;
};

// weight / sigma_max(weight), sigma estimated with `iters` power iterations.
// The state persists across calls; zero weights project to zero.
torch::Tensor spectral_project(const torch::Tensor& weight2d, PowerIterState& state, int iters = 1);

// 3x3 conv whose effective weight is spectrally normalized when enabled.
// Power iterations run only through update_power_iteration(), so forward and
// inverse passes inside one step see identical weights.
struct SpectralConv2dImpl : torch::nn::Module {
    SpectralConv2dImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t ksize,
                       bool spectral_norm, bool zero_init);

    torch::Tensor effective_weight() const;
    torch::Tensor forward(const torch::Tensor& x);
    void update_power_iteration(int iters = 1);

    torch::Tensor weight, bias;
    torch::Tensor u, v;  // persistent power-iteration vectors (buffers)
    std::int64_t pad = 1;
    bool sn_enabled = false;
};
TORCH_MODULE(SpectralConv2d);

// ---------------------------------------------------------------------------
// Double-sided affine coupling
// ---------------------------------------------------------------------------

// Three 3x3 convs, leaky-ReLU 0.2, final layer zero-initialized so a fresh
// block is the identity map.
struct CouplingSubnetImpl : torch::nn::Module {
    CouplingSubnetImpl(std::int64_t in_ch, std::int64_t hidden, std::int64_t out_ch,
                       bool spectral_norm);
    torch::Tensor forward(const torch::Tensor& x);
    void update_power_iteration(int iters = 1);

    SpectralConv2d conv1 = nullptr, conv2 = nullptr, conv3 = nullptr;
};
TORCH_MODULE(CouplingSubnet);

// v1 = u1 * exp(s(s2(u2))) + t2(u2);  v2 = u2 * exp(s(s1(v1))) + t1(v1)
// with s(z) = clamp * tanh(z). Exactly invertible for any parameters.
struct CouplingBlockImpl : torch::nn::Module {
    CouplingBlockImpl(std::int64_t channels, std::int64_t hidden, double clamp,
                      bool spectral_norm);

    std::pair<torch::Tensor, torch::Tensor> forward_pair(const torch::Tensor& u1,
                                                         const torch::Tensor& u2);
    std::pair<torch::Tensor, torch::Tensor> inverse_pair(const torch::Tensor& v1,
                                                         const torch::Tensor& v2);
    // Channel-packed convenience: splits in half, applies, re-concats.
    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor inverse(const torch::Tensor& x);
    void update_power_iteration(int iters = 1);

    CouplingSubnet s1 = nullptr, t1 = nullptr, s2 = nullptr, t2 = nullptr;
    double clamp = 2.0;
};
TORCH_MODULE(CouplingBlock);

// ---------------------------------------------------------------------------
// U-shaped invertible generator G (forward = protect, backward = recover)
// ---------------------------------------------------------------------------

struct GeneratorConfig {
    std::int64_t levels = 3;
    std::int64_t couplings_per_level = 4;
    std::int64_t base_channels = 16;
    double clamp = 2.0;
    bool use_spectral_norm = true;
    std::int64_t in_channels = 3;
};

struct InnGeneratorImpl : torch::nn::Module {
    explicit InnGeneratorImpl(const GeneratorConfig& cfg);

    // X = f_prt(I). Accepts {3,H,W} or {N,3,H,W}; H,W divisible by 2^levels.
    torch::Tensor protect(const torch::Tensor& image);
    // I-hat = f_rec(X-hat); exact inverse of protect.
    torch::Tensor recover(const torch::Tensor& x_rect);

    void update_power_iteration(int iters = 1);

    GeneratorConfig cfg;
    torch::nn::ModuleList down_couplings;  // level k operates on 3*4^(k+1) channels
    torch::nn::ModuleList up_couplings;    // mirrored widths
};
TORCH_MODULE(InnGenerator);

}  // namespace clrkit

#endif
