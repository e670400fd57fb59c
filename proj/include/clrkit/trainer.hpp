#ifndef CLRKIT_TRAINER_HPP
#define CLRKIT_TRAINER_HPP

#include <torch/torch.h>

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "clrkit/attacks.hpp"
#include "clrkit/augment.hpp"
#include "clrkit/config.hpp"
#include "clrkit/fgjpeg.hpp"
#include "clrkit/generator.hpp"
#include "clrkit/localizer.hpp"
#include "clrkit/losses.hpp"

namespace clrkit {

// Value equals `attacked`; gradient w.r.t. `protected_img` is the identity
// and nothing flows back into the attack computation.
torch::Tensor stabilize_gradient(const torch::Tensor& attacked,
                                 const torch::Tensor& protected_img);

struct TrainState {
    enum class Stage { Warmup, Joint };
    Stage stage = Stage::Warmup;
    std::int64_t step = 0;
    double feat_loss_ema = -1.0;  // negative = not yet initialized
    double threshold = 0.001;
    bool transitioned = false;
};

inline const char* stage_name(TrainState::Stage s) {
    return s == TrainState::Stage::Warmup ? "WARMUP" : "JOINT";
}

struct TrainLogRow {
    std::int64_t step = 0;
    TrainState::Stage stage = TrainState::Stage::Warmup;
    double l_prt = 0, l_rec = 0, l_loc = 0, l_cons = 0;
    double d_a = 0, d_b = 0;
    double psnr_protect = 0, f1 = 0;
    std::string csv() const;
    static std::string csv_header();
};

// The bundle of trainable networks; also what checkpoints serialize.
struct Models {
    InnGenerator generator = nullptr;
    Preprocessor preprocessor = nullptr;
    Localizer localizer = nullptr;
    FgJpeg fgjpeg = nullptr;
    PatchDiscriminator d_a = nullptr, d_b = nullptr;

    static Models build(const RunConfig& cfg);
    std::map<std::string, torch::nn::Module*> module_map();
    void eval();
    void train();
};

class Trainer {
public:
    Trainer(RunConfig cfg, Models models);

    // One optimization step on a {N,3,H,W} batch; donors feed the
    // tamper-based augmentation.
    TrainLogRow step(const torch::Tensor& batch, const torch::Tensor& donors);

    // Full staged schedule over an in-memory corpus.
    void run(const std::vector<ImageGrid>& corpus,
             const std::function<void(const TrainLogRow&)>& on_row = {},
             const std::function<void(std::int64_t)>& on_checkpoint = {});

    TrainState& state() { return state_; }
    Models& models() { return models_; }
    Rng& rng() { return rng_; }

private:
    struct ViewOutputs {
        torch::Tensor processed;     // P output
        FeatureStack features;
        LocalizerBatch loc;
        torch::Tensor soft_mask;     // {N,h,w}
        torch::Tensor recovered;     // I-hat (defined when recovery ran)
        torch::Tensor view_input;    // pre-processor input
        torch::Tensor loc_loss;      // BCE + corner + confidence
        torch::Tensor rec_loss;      // l1 + adv
    };

    ViewOutputs run_view(const torch::Tensor& view_input, const torch::Tensor& x_protected,
                         const torch::Tensor& ground_truth,
                         const std::vector<RectMask>& true_rects,
                         const torch::Tensor& raster_masks, bool joint, bool run_recovery);

    torch::Tensor make_view(const torch::Tensor& xq, const torch::Tensor& cover,
                            const std::vector<RectMask>& rects,
                            const std::optional<AttackSpec>& attack);

    void maybe_decay_lr();
    void set_lr(double lr);

    RunConfig cfg_;
    Models models_;
    TrainState state_;
    Rng rng_;
    std::unique_ptr<torch::optim::Adam> opt_main_, opt_da_, opt_db_;
    double current_lr_;
};

}  // namespace clrkit

#endif
