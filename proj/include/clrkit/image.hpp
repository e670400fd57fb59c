#ifndef CLRKIT_IMAGE_HPP
#define CLRKIT_IMAGE_HPP

#include <torch/torch.h>

#include <filesystem>
#include <string>

#include "clrkit/common.hpp"

namespace clrkit {

// Images are float32 tensors in [0,1], RGB, shaped {3,H,W} for a single
// image or {N,3,H,W} for a batch. ImageGrid names the single-image case.
using ImageGrid = torch::Tensor;

// Throws if x is not a finite {3,H,W} float image in [0,1] with H,W even
// and >= 8 (the Haar pyramid needs repeated exact halving).
void validate_image(const ImageGrid& x);

// Normalized axis-aligned rectangle; houses the crop masks M, M-hat and the
// localizer confidence S.
struct RectMask {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    double confidence = 1.0;

    bool valid() const;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }

    // Pixel bounds on an h x w grid, round-half-away-from-zero.
    std::int64_t col0(std::int64_t w) const;
    std::int64_t col1(std::int64_t w) const;
    std::int64_t row0(std::int64_t h) const;
    std::int64_t row1(std::int64_t h) const;

    std::string to_json() const;
    static RectMask from_json(const std::string& text);
};

// File I/O (OpenCV behind the scenes; BGR<->RGB handled here).
ImageGrid load_image(const std::filesystem::path& path);
// 16-bit PNG keeps the serialization boundary effectively lossless.
void save_png16(const std::filesystem::path& path, const ImageGrid& img);
void save_png8(const std::filesystem::path& path, const ImageGrid& img);

// In-memory round trips through the real codecs. quality follows the JPEG
// quality factor convention (0..100).
ImageGrid encode_decode_jpeg(const ImageGrid& img, int quality);
ImageGrid encode_decode(const ImageGrid& img, const std::string& format, int jpeg_quality = 95);

// True if the platform JPEG codec is usable (probed once).
bool jpeg_codec_available();

// Bilinear resize with half-pixel centers, differentiable.
torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t h, std::int64_t w);

std::uint64_t image_hash(const ImageGrid& img);

}  // namespace clrkit

#endif
