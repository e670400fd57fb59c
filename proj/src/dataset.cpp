#include "clrkit/dataset.hpp"

#include <algorithm>
#include <cmath>

using torch::indexing::Slice;

namespace clrkit {

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
            return static_cast<char>(std::tolower(c));
        });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
            paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

ImageGrid ingest_image(const std::filesystem::path& path, std::int64_t resolution) {
    auto img = load_image(path);
    const auto h = img.size(1), w = img.size(2);
    const auto side = std::min(h, w);
    const auto r0 = (h - side) / 2, c0 = (w - side) / 2;
    auto square = img.index({Slice(), Slice(r0, r0 + side), Slice(c0, c0 + side)});
    return resize_bilinear(square, resolution, resolution).clamp(0, 1).contiguous();
}

std::vector<ImageGrid> load_folder(const std::filesystem::path& dir, std::int64_t resolution,
                                   std::size_t limit) {
    std::vector<ImageGrid> out;
    for (const auto& path : list_images(dir)) {
        out.push_back(ingest_image(path, resolution));
        if (limit && out.size() >= limit) break;
    }
    if (out.empty()) throw std::runtime_error("no images found in " + dir.string());
    return out;
}

namespace {

torch::Tensor rand_color(Rng& rng) {
    return torch::tensor({static_cast<float>(uniform(rng, 0.1, 0.9)),
                          static_cast<float>(uniform(rng, 0.1, 0.9)),
                          static_cast<float>(uniform(rng, 0.1, 0.9))})
        .view({3, 1, 1});
}

}  // namespace

ImageGrid make_synthetic_image(Rng& rng, std::int64_t h, std::int64_t w) {
    auto v = torch::linspace(0, 1, h).view({1, h, 1});
    auto u = torch::linspace(0, 1, w).view({1, 1, w});

    // Gradient background between two colors along a random direction.
    const double ang = uniform(rng, 0, 2 * M_PI);
    auto ramp = (u * std::cos(ang) + v * std::sin(ang) + 1.0) / 2.0;
    auto c0 = rand_color(rng), c1 = rand_color(rng);
    auto img = c0 + (c1 - c0) * ramp;

    // A few solid shapes.
    const int shapes = static_cast<int>(uniform_int(rng, 2, 4));
    for (int s = 0; s < shapes; ++s) {
        auto color = rand_color(rng);
        const float alpha = static_cast<float>(uniform(rng, 0.7, 1.0));
        if (uniform(rng, 0, 1) < 0.5) {
            const double cy = uniform(rng, 0.15, 0.85), cx = uniform(rng, 0.15, 0.85);
            const double r = uniform(rng, 0.08, 0.25);
            auto d2 = (u - cx).pow(2) + (v - cy).pow(2);
            auto inside = (d2 < r * r).to(torch::kFloat32);
            img = img * (1 - alpha * inside) + color * (alpha * inside);
        } else {
            const double y0 = uniform(rng, 0.0, 0.7), x0 = uniform(rng, 0.0, 0.7);
            const double hh = uniform(rng, 0.1, 0.3), ww = uniform(rng, 0.1, 0.3);
            auto inside = ((u >= x0) & (u <= x0 + ww) & (v >= y0) & (v <= y0 + hh))
                              .to(torch::kFloat32);
            img = img * (1 - alpha * inside) + color * (alpha * inside);
        }
    }

    // Mild low-frequency texture.
    const double fx = uniform(rng, 1.0, 3.0), fy = uniform(rng, 1.0, 3.0);
    const double phase = uniform(rng, 0, 2 * M_PI);
    img = img + 0.04 * torch::sin(2 * M_PI * (fx * u + fy * v) + phase);

    // Keep a little headroom so the protection perturbation survives clamping.
    return img.clamp(0.03, 0.97).to(torch::kFloat32).contiguous();
}

std::vector<ImageGrid> make_synthetic_corpus(std::uint64_t seed, std::size_t n, std::int64_t h,
                                             std::int64_t w) {
    std::vector<ImageGrid> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto rng = derive_rng(seed, i);
        out.push_back(make_synthetic_image(rng, h, w));
    }
    return out;
}

void write_corpus(const std::filesystem::path& dir, const std::vector<ImageGrid>& images) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.png", i);
        save_png8(dir / name, images[i]);
    }
}

}  // namespace clrkit
