#ifndef CLRKIT_FGJPEG_HPP
#define CLRKIT_FGJPEG_HPP

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "clrkit/blocks.hpp"
#include "clrkit/common.hpp"
#include "clrkit/image.hpp"

namespace clrkit {

// ---------------------------------------------------------------------------
// Quality-factor classes
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 6> kQfClasses = {10, 30, 50, 70, 90, 100};
inline constexpr int kQfTolerance = 20;  // delta_QF

// Nearest class in {10,30,50,70,90,100}; ties break toward the lower class.
int qf_to_class(int qf);
int class_qf(int index);

// Scoring rule at evaluation: a prediction is acceptable when the predicted
// class value lies within delta_QF of the true quality factor.
bool qf_prediction_acceptable(int predicted_class, int true_qf);

struct QualityFactor {
    int qf = 90;
    int class_index = 4;
    static QualityFactor from_qf(int qf) { return {qf, qf_to_class(qf)}; }
};

struct JpegPairSample {
    ImageGrid clean;       // generator input (optionally AWGN-perturbed)
    ImageGrid compressed;  // bit-exact decode of the real codec output
    QualityFactor qf;
};

// Disk cache for real-codec pairs: {image hash, qf} -> PNG of the decode,
// tracked by a manifest file.
class JpegPairCache {
public:
    explicit JpegPairCache(std::filesystem::path dir);
    ImageGrid get_or_make(const ImageGrid& clean, int qf);
    void flush_manifest() const;

private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> manifest_;
};

// ---------------------------------------------------------------------------
// Constrained front-end convolutions
// ---------------------------------------------------------------------------

// Frozen bank of three 5x5 high-pass residual kernels, replicated per input
// channel.
struct SrmConvImpl : torch::nn::Module {
    SrmConvImpl();
    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor kernels;  // buffer {9,1,5,5}, groups=3, never trained
};
TORCH_MODULE(SrmConv);

// Prediction-error convolution: after every optimizer step, project() forces
// each 5x5 slice to center=-1 with off-center weights summing to +1.
struct BayarConv2dImpl : torch::nn::Module {
    BayarConv2dImpl(std::int64_t in_ch, std::int64_t out_ch);
    torch::Tensor forward(const torch::Tensor& x);
    void project();
    torch::Tensor weight;
};
TORCH_MODULE(BayarConv2d);

// ---------------------------------------------------------------------------
// Predictor / controller / generator
// ---------------------------------------------------------------------------

// Compact ResNet-32 QF classifier with the {plain, SRM, Bayar} parallel
// front-end.
struct JpegPredictorImpl : torch::nn::Module {
    JpegPredictorImpl();
    torch::Tensor forward(const torch::Tensor& x);  // {N,6} logits
    void project_constraints() { bayar->project(); }

    torch::nn::Conv2d plain = nullptr;
    SrmConv srm = nullptr;
    BayarConv2d bayar = nullptr;
    torch::nn::Sequential stem = nullptr;
    torch::nn::Sequential stage1 = nullptr, stage2 = nullptr, stage3 = nullptr;
    torch::nn::Linear fc = nullptr;
};
TORCH_MODULE(JpegPredictor);

// Per-level scale/bias pairs for the conditioned bridge blocks.
struct ModulationPairs {
    std::vector<std::pair<torch::Tensor, torch::Tensor>> pairs;  // (a,b), {N,C,1,1}
};

// Six-layer MLP: three embedding layers on QF/100, then one head per
// conditioned level emitting (a,b). Heads start at a=1, b=0.
struct JpegControllerImpl : torch::nn::Module {
    explicit JpegControllerImpl(std::vector<std::int64_t> level_channels = {32, 64, 128});
    ModulationPairs forward(const torch::Tensor& qf_normalized);  // {N,1}

    torch::nn::Linear embed1 = nullptr, embed2 = nullptr, embed3 = nullptr;
    std::vector<torch::nn::Linear> heads;
    std::vector<std::int64_t> level_channels;
};
TORCH_MODULE(JpegController);

// Four-level U-Net with convolutional bridge blocks; the lower three bridges
// are modulated as F_out = a * Conv(F_in) + b. Residual output, clamped.
struct JpegGeneratorImpl : torch::nn::Module {
    JpegGeneratorImpl();
    torch::Tensor forward(const torch::Tensor& x, const ModulationPairs& mod);

    ConvBlock enc1 = nullptr, enc2 = nullptr, enc3 = nullptr, enc4 = nullptr;
    ConvBlock bridge1 = nullptr, bridge2 = nullptr, bridge3 = nullptr, bridge4 = nullptr;
    ConvBlock dec3 = nullptr, dec2 = nullptr, dec1 = nullptr;
    torch::nn::Conv2d out_conv = nullptr;
};
TORCH_MODULE(JpegGenerator);

// The full simulator bundle.
struct FgJpegImpl : torch::nn::Module {
    FgJpegImpl();

    // Differentiable simulated compression of x at integer qf.
    torch::Tensor simulate(const torch::Tensor& x, int qf);
    // Per-sample quality factors, {N} int64 tensor of raw QF values.
    torch::Tensor simulate_batch(const torch::Tensor& x, const torch::Tensor& qfs);

    JpegGenerator generator = nullptr;
    JpegController controller = nullptr;
    JpegPredictor predictor = nullptr;
};
TORCH_MODULE(FgJpeg);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct FgJpegTrainOptions {
    std::int64_t predictor_steps = 1000;
    std::int64_t generator_steps = 1200;
    std::int64_t batch = 8;
    double lr_predictor = 1e-3;
    double lr_generator = 2e-4;
    double epsilon = 0.1;  // CE weight in L_jpg
    double awgn_sigma = 0.01;
    double awgn_prob = 0.5;
    double uniform_qf_fraction = 0.3;  // continuous conditioning samples
    double holdout_fraction = 0.1;
    std::uint64_t seed = 1;
    std::filesystem::path cache_dir;  // empty = no disk cache
    std::function<void(const std::string&)> log;
};

struct FgJpegTrainReport {
    double predictor_class_accuracy = 0.0;       // exact class on held-out
    double predictor_acceptable_accuracy = 0.0;  // delta_QF = 20 rule
    std::map<int, double> sim_l1;                // per class: |sim - real|
    std::map<int, double> input_l1;              // per class: |input - real|
    std::vector<double> generator_loss;          // per-step L_jpg
};

// Trains the predictor ahead of the generator+controller (the predictor is
// frozen for the joint phase), then measures fidelity on the held-out split.
FgJpegTrainReport train_fgjpeg(FgJpeg& model, const std::vector<ImageGrid>& corpus,
                               const FgJpegTrainOptions& opts);

}  // namespace clrkit

#endif
