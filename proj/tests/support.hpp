#ifndef CLRKIT_TESTS_SUPPORT_HPP
#define CLRKIT_TESTS_SUPPORT_HPP

#include <torch/torch.h>

#include "clrkit/common.hpp"
#include "clrkit/dataset.hpp"

namespace clrkit::testing {

inline torch::Tensor random_image(Rng& rng, std::int64_t h, std::int64_t w,
                                  std::int64_t c = 3) {
    auto t = torch::empty({c, h, w});
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    auto* p = t.data_ptr<float>();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = dist(rng);
    return t;
}

inline torch::Tensor random_mask(Rng& rng, std::int64_t h, std::int64_t w, double density = 0.5) {
    auto t = torch::empty({h, w});
    std::bernoulli_distribution dist(density);
    auto* p = t.data_ptr<float>();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = dist(rng) ? 1.0f : 0.0f;
    return t;
}

// Fill every parameter with small gaussian values (including the
// zero-initialized final layers) so a module becomes a non-trivial random map.
inline void randomize_parameters(torch::nn::Module& m, std::uint64_t seed, double std = 0.05) {
    torch::NoGradGuard ng;
    Rng rng = make_rng(seed);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(std));
    for (auto& p : m.parameters()) {
        auto flat = p.view(-1);
        for (std::int64_t i = 0; i < flat.numel(); ++i) flat[i] = dist(rng);
    }
}

}  // namespace clrkit::testing

#endif
