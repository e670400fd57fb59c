#ifndef CLRKIT_DATASET_HPP
#define CLRKIT_DATASET_HPP

#include <filesystem>
#include <vector>

#include "clrkit/common.hpp"
#include "clrkit/image.hpp"

namespace clrkit {

// Flat-directory dataset: every decodable image, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// Ingestion policy: center-crop to square, then resize to the run resolution.
ImageGrid ingest_image(const std::filesystem::path& path, std::int64_t resolution);

// limit = 0 loads everything.
std::vector<ImageGrid> load_folder(const std::filesystem::path& dir, std::int64_t resolution,
                                   std::size_t limit = 0);

// Deterministic low-entropy test imagery: gradient background, a few solid
// shapes, mild low-frequency texture.
ImageGrid make_synthetic_image(Rng& rng, std::int64_t h, std::int64_t w);
std::vector<ImageGrid> make_synthetic_corpus(std::uint64_t seed, std::size_t n, std::int64_t h,
                                             std::int64_t w);
void write_corpus(const std::filesystem::path& dir, const std::vector<ImageGrid>& images);

}  // namespace clrkit

#endif
