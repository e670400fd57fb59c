#ifndef CLRKIT_LOSSES_HPP
#define CLRKIT_LOSSES_HPP

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "clrkit/blocks.hpp"
#include "clrkit/localizer.hpp"

namespace clrkit {

struct LossWeights {
    double alpha = 1.5;    // recovery
    double beta = 0.1;     // localization
    double gamma = 0.05;   // consistency
    double epsilon = 0.1;  // FG-JPEG CE
    double eta = 0.01;     // adversarial
};

// All l1 norms are mean-reduced so loss magnitudes are resolution
// independent.
inline torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes(), "l1: shape mismatch ", a.sizes(), " vs ", b.sizes());
    return (a - b).abs().mean();
}

// d_loss = 0.5 E[(d_real-1)^2] + 0.5 E[d_fake^2];  g_loss = E[(d_fake-1)^2]
std::pair<torch::Tensor, torch::Tensor> lsgan_losses(const torch::Tensor& d_real,
                                                     const torch::Tensor& d_fake);
torch::Tensor lsgan_generator(const torch::Tensor& d_fake);

// ||I - X||_1 + eta * LSGAN_G(D_A(X)); pass an empty optional to drop the
// adversarial term.
torch::Tensor loss_protect(const torch::Tensor& x, const torch::Tensor& i,
                           const std::optional<torch::Tensor>& d_a_score, double eta);
torch::Tensor loss_recover(const torch::Tensor& i_hat, const torch::Tensor& i,
                           const std::optional<torch::Tensor>& d_b_score, double eta);

// Mean BCE between a soft mask and a binary target.
torch::Tensor loss_localize(const torch::Tensor& m_hat, const torch::Tensor& m);

// One attacked view of the twin pipeline, as consumed by the consistency
// loss.
struct ConsistencyView {
    FeatureStack features;
    torch::Tensor mask_soft;  // M-hat
    torch::Tensor recovered;  // I-hat
    torch::Tensor image_in;   // pre-processor input
    torch::Tensor image_out;  // pre-processor output (drift term)
};

// Sum over layers 3..5 of twin-feature l1 + mask + recovery consistency +
// the pre-processor drift term.
torch::Tensor loss_consistency(const ConsistencyView& v0, const ConsistencyView& v1);

struct LossParts {
    torch::Tensor protect, recover, localize, consistency;
};

// L = L_prt + alpha*L_rec + beta*L_loc + gamma*L_cons
torch::Tensor loss_total(const LossParts& parts, const LossWeights& w);

// Three-layer patch discriminator (LSGAN scores on a spatial grid).
struct PatchDiscriminatorImpl : torch::nn::Module {
    PatchDiscriminatorImpl();
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1 = nullptr, conv3 = nullptr;
    ConvBlock conv2 = nullptr;
};
TORCH_MODULE(PatchDiscriminator);

}  // namespace clrkit

#endif
