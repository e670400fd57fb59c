#ifndef CLRKIT_BLOCKS_HPP
#define CLRKIT_BLOCKS_HPP

#include <torch/torch.h>

namespace clrkit {

// Conv 3x3 -> leaky-ReLU(0.2) -> InstanceNorm. The building block shared by
// the pre-processor, the FG-JPEG U-Net and the localizer pyramid.
struct ConvBlockImpl : torch::nn::Module {
    ConvBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride = 1) {
        conv = register_module(
            "conv", torch::nn::Conv2d(
                        torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1)));
        norm = register_module("norm",
                               torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch)));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        return norm(torch::leaky_relu(conv(x), 0.2));
    }

    torch::nn::Conv2d conv = nullptr;
    torch::nn::InstanceNorm2d norm = nullptr;
};
TORCH_MODULE(ConvBlock);

inline void zero_init_conv(torch::nn::Conv2d& conv) {
    torch::NoGradGuard ng;
    conv->weight.zero_();
    if (conv->options.bias()) conv->bias.zero_();
}

}  // namespace clrkit

#endif
