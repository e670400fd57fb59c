#ifndef CLRKIT_CONFIG_HPP
#define CLRKIT_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "clrkit/attacks.hpp"
#include "clrkit/losses.hpp"

namespace clrkit {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One run = one resolution, one attack roster, one seed. Serialized verbatim
// into every run manifest.
struct RunConfig {
    // [run]
    std::int64_t resolution = 64;
    std::uint64_t seed = 1;
    std::string output_dir = "runs/out";

    // [model]
    std::int64_t levels = 3;
    std::int64_t couplings_per_level = 4;
    std::int64_t base_channels = 16;
    double clamp = 2.0;
    bool spectral_norm = true;

    // [loss]
    LossWeights weights;
    bool corner_loss = true;

    // [attacks]
    std::vector<AttackSpec> roster = {AttackSpec{}};
    double crop_rate_min = 0.4;
    double crop_rate_max = 1.0;
    double aspect_min = 0.75;
    double aspect_max = 1.33;
    bool quantize = true;

    // [augment]
    double r_aug = 0.15;
    int max_strokes = 8;

    // [train]
    std::int64_t batch_size = 4;
    std::int64_t total_steps = 2500;
    double lr = 1e-4;
    double warmup_cap_fraction = 0.2;
    double stage_threshold = 0.001;
    double ema_decay = 0.99;
    std::int64_t false_alarm_every = 4;
    std::int64_t checkpoint_every = 1000;

    // [fgjpeg]
    std::int64_t fgjpeg_predictor_steps = 1000;
    std::int64_t fgjpeg_generator_steps = 1200;
    std::int64_t fgjpeg_batch = 8;
    double fgjpeg_lr_predictor = 1e-3;
    double fgjpeg_lr_generator = 2e-4;
    double fgjpeg_awgn_sigma = 0.01;
    double fgjpeg_awgn_prob = 0.5;

    // [eval]
    std::vector<std::pair<double, double>> eval_buckets = {{0.5, 0.65}, {0.65, 0.8}, {0.8, 1.0}};
    std::string save_format = "png";  // attacked-image round-trip format
    std::int64_t eval_max_images = 32;

    // [data]
    std::string train_dir;
    std::string val_dir;

    static RunConfig from_text(const std::string& ini);
    static RunConfig from_file(const std::filesystem::path& path);
    std::string to_text() const;  // canonical form, echoes every field
    std::uint64_t hash() const { return fnv1a(to_text()); }
    void validate() const;
};

}  // namespace clrkit

#endif
