#ifndef CLRKIT_COMMON_HPP
#define CLRKIT_COMMON_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace clrkit {

inline constexpr const char* kVersion = "clrkit 0.1.0";

// Single RNG type used for every stochastic decision outside weight init
// (crop placement, attack params, masks, data order). Each worker owns its
// own stream; see derive_rng.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Stream derived from (seed, salt...) so parallel workers never share state.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{seed, a, b};
    return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

// FNV-1a, used for cache keys and config/checkpoint fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string hex64(std::uint64_t v);

// All file writes in the CLI go through a temp file + rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace clrkit

#endif
