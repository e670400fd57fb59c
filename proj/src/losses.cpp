#include "clrkit/losses.hpp"

namespace F = torch::nn::functional;

namespace clrkit {

std::pair<torch::Tensor, torch::Tensor> lsgan_losses(const torch::Tensor& d_real,
                                                     const torch::Tensor& d_fake) {
    auto d_loss = 0.5 * (d_real - 1).pow(2).mean() + 0.5 * d_fake.pow(2).mean();
    auto g_loss = (d_fake - 1).pow(2).mean();
    return {d_loss, g_loss};
}

torch::Tensor lsgan_generator(const torch::Tensor& d_fake) {
    return (d_fake - 1).pow(2).mean();
}

torch::Tensor loss_protect(const torch::Tensor& x, const torch::Tensor& i,
                           const std::optional<torch::Tensor>& d_a_score, double eta) {
    auto loss = l1(i, x);
    if (d_a_score) loss = loss + eta * lsgan_generator(*d_a_score);
    return loss;
}

torch::Tensor loss_recover(const torch::Tensor& i_hat, const torch::Tensor& i,
                           const std::optional<torch::Tensor>& d_b_score, double eta) {
    auto loss = l1(i, i_hat);
    if (d_b_score) loss = loss + eta * lsgan_generator(*d_b_score);
    return loss;
}

torch::Tensor loss_localize(const torch::Tensor& m_hat, const torch::Tensor& m) {
    TORCH_CHECK(m_hat.sizes() == m.sizes(), "loss_localize: shape mismatch");
    return F::binary_cross_entropy(m_hat.clamp(1e-6, 1.0 - 1e-6), m);
}

torch::Tensor loss_consistency(const ConsistencyView& v0, const ConsistencyView& v1) {
    TORCH_CHECK(v0.features.features.size() == v1.features.features.size(),
                "consistency: feature stacks differ");
    TORCH_CHECK(static_cast<int>(v0.features.features.size()) > FeatureStack::kCompareLast,
                "consistency: feature stack too shallow");
    auto loss = torch::zeros({}, v0.mask_soft.options());
    for (int n = FeatureStack::kCompareFirst; n <= FeatureStack::kCompareLast; ++n)
        loss = loss + l1(v0.features.features[static_cast<std::size_t>(n)],
                         v1.features.features[static_cast<std::size_t>(n)]);
    loss = loss + l1(v0.mask_soft, v1.mask_soft);
    loss = loss + l1(v0.recovered, v1.recovered);
    // Drift: keep the pre-processor close to the identity on both views.
    loss = loss + 0.5 * (l1(v0.image_out, v0.image_in) + l1(v1.image_out, v1.image_in));
    return loss;
}

torch::Tensor loss_total(const LossParts& parts, const LossWeights& w) {
    return parts.protect + w.alpha * parts.recover + w.beta * parts.localize +
           w.gamma * parts.consistency;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl() {
    conv1 = register_module(
        "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 32, 4).stride(2).padding(1)));
    conv2 = register_module("conv2", ConvBlock(32, 64, 2));
    conv3 = register_module(
        "conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(64, 1, 3).padding(1)));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(conv1(x), 0.2);
    h = conv2(h);
    return conv3(h);
}

}  // namespace clrkit
