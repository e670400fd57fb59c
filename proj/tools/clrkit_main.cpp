#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

#include "clrkit/checkpoint.hpp"
#include "clrkit/dataset.hpp"
#include "clrkit/evaluate.hpp"
#include "clrkit/metrics.hpp"
#include "clrkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace clrkit;

namespace {

// Exit codes: 0 ok, 2 bad input, 3 config error, 4 missing codec.
constexpr int kOk = 0, kBadInput = 2, kConfigError = 3, kMissingCodec = 4;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json base_manifest(const std::string& command, const RunConfig& cfg) {
    nlohmann::json j;
    j["command"] = command;
    j["code_version"] = kVersion;
    j["config_hash"] = hex64(cfg.hash());
    j["config"] = cfg.to_text();
    j["seed"] = cfg.seed;
    return j;
}

void write_manifest(const fs::path& path, const nlohmann::json& j) {
    atomic_write(path, j.dump(2) + "\n");
}

struct LoadedCheckpoint {
    RunConfig cfg;
    Models models;
    std::uint64_t file_hash = 0;
};

LoadedCheckpoint load_models(const fs::path& ckpt_path) {
    if (!fs::exists(ckpt_path)) throw InputError("checkpoint not found: " + ckpt_path.string());
    auto data = load_checkpoint_data(ckpt_path);
    LoadedCheckpoint out{RunConfig::from_text(data.config_text), Models(), 0};
    out.models = Models::build(out.cfg);
    load_into_modules(data, out.models.module_map(), /*require_all=*/true);
    out.models.eval();
    out.file_hash = checkpoint_file_hash(ckpt_path);
    return out;
}

ImageGrid load_input_image(const fs::path& path, std::int64_t resolution, bool warn_on_resize) {
    if (!fs::exists(path)) throw InputError("input not found: " + path.string());
    ImageGrid img;
    try {
        img = load_image(path);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    if (img.size(1) != resolution || img.size(2) != resolution) {
        if (warn_on_resize)
            std::cerr << "warning: resizing " << img.size(2) << "x" << img.size(1)
                      << " input to model resolution " << resolution << "\n";
        img = ingest_image(path, resolution);
    }
    return img;
}

void require_codec() {
    if (!jpeg_codec_available())
        throw std::system_error(std::error_code(kMissingCodec, std::generic_category()),
                                "JPEG codec unavailable on this platform");
}

// --- protect ---------------------------------------------------------------

int cmd_protect(const fs::path& in, const fs::path& ckpt, const fs::path& out) {
    auto loaded = load_models(ckpt);
    auto img = load_input_image(in, loaded.cfg.resolution, true);
    torch::NoGradGuard ng;
    auto x = loaded.models.generator->protect(img).clamp(0, 1);
    save_png16(out, x);

    auto manifest = base_manifest("protect", loaded.cfg);
    manifest["checkpoint_hash"] = hex64(loaded.file_hash);
    manifest["resolution"] = loaded.cfg.resolution;
    manifest["input"] = in.string();
    manifest["output"] = out.string();
    manifest["psnr_vs_original"] = psnr(x, img);
    write_manifest(fs::path(out.string() + ".json"), manifest);
    std::cout << "protected " << in << " -> " << out << "  psnr_vs_original="
              << psnr(x, img) << " dB\n";
    return kOk;
}

// --- detect ----------------------------------------------------------------

int cmd_detect(const fs::path& in, const fs::path& ckpt, const fs::path& out_json) {
    auto loaded = load_models(ckpt);
    auto img = load_input_image(in, loaded.cfg.resolution, false);
    torch::NoGradGuard ng;
    auto processed = loaded.models.preprocessor->forward(img.unsqueeze(0));
    auto loc = loaded.models.localizer->forward(processed);
    LocalizerOutput result{rect_row_to_mask(loc.rect[0], loc.score[0].item<double>()),
                           loc.score[0].item<double>()};

    const bool cropped = decide_cropped(result);
    std::cout << (cropped ? "cropped" : "uncropped") << " " << result.rect.to_json() << "\n";
    if (!out_json.empty()) {
        auto manifest = base_manifest("detect", loaded.cfg);
        manifest["checkpoint_hash"] = hex64(loaded.file_hash);
        manifest["input"] = in.string();
        manifest["verdict"] = cropped ? "cropped" : "uncropped";
        manifest["mask"] = nlohmann::json::parse(result.rect.to_json());
        write_manifest(out_json, manifest);
    }
    return kOk;
}

// --- recover ---------------------------------------------------------------

int cmd_recover(const fs::path& in, const fs::path& ckpt, const fs::path& out,
                const std::string& mask_arg) {
    auto loaded = load_models(ckpt);
    const auto res = loaded.cfg.resolution;
    auto img = load_input_image(in, res, false);
    torch::NoGradGuard ng;
    auto processed = loaded.models.preprocessor->forward(img.unsqueeze(0));

    RectMask mask;
    if (mask_arg.empty()) {
        auto loc = loaded.models.localizer->forward(processed);
        mask = rect_row_to_mask(loc.rect[0], loc.score[0].item<double>());
    } else if (mask_arg == "full") {
        mask = RectMask{0, 0, 1, 1, 1};
    } else if (mask_arg.size() && mask_arg.front() == '{') {
        mask = RectMask::from_json(mask_arg);
    } else if (fs::exists(mask_arg) && fs::path(mask_arg).extension() == ".json") {
        mask = RectMask::from_json(read_file(mask_arg));
    } else {
        double x0, y0, x1, y1;
        if (std::sscanf(mask_arg.c_str(), "%lf,%lf,%lf,%lf", &x0, &y0, &x1, &y1) != 4)
            throw InputError("cannot parse --mask (want x0,y0,x1,y1 | full | JSON)");
        mask = RectMask{x0, y0, x1, y1, 1.0};
    }
    if (!mask.valid()) throw InputError("mask is not a valid rectangle");
    if (mask.row1(res) - mask.row0(res) < 2 || mask.col1(res) - mask.col0(res) < 2)
        throw InputError("mask is degenerate at the model resolution");

    auto padded = zero_pad_resize(processed.squeeze(0), mask, {res, res});
    auto recovered = loaded.models.generator->recover(padded).clamp(0, 1);
    save_png16(out, recovered);

    auto manifest = base_manifest("recover", loaded.cfg);
    manifest["checkpoint_hash"] = hex64(loaded.file_hash);
    manifest["input"] = in.string();
    manifest["output"] = out.string();
    manifest["mask"] = nlohmann::json::parse(mask.to_json());
    manifest["mask_source"] = mask_arg.empty() ? "detected" : "override";
    write_manifest(fs::path(out.string() + ".json"), manifest);
    std::cout << "recovered " << in << " -> " << out << " using mask " << mask.to_json() << "\n";
    return kOk;
}

// --- train -----------------------------------------------------------------

int cmd_train(const fs::path& config_path, const std::string& jpeg_ckpt) {
    auto cfg = RunConfig::from_file(config_path);
    if (cfg.train_dir.empty()) throw ConfigError("data.train_dir is required for train");
    for (const auto& a : cfg.roster)
        if (a.kind == AttackKind::JpegReal || a.kind == AttackKind::JpegSim) require_codec();

    auto corpus = load_folder(cfg.train_dir, cfg.resolution);
    auto models = Models::build(cfg);
    bool fgjpeg_loaded = false;
    if (!jpeg_ckpt.empty()) {
        auto data = load_checkpoint_data(jpeg_ckpt);
        load_into_modules(data, {{"fgjpeg", models.fgjpeg.get()}}, /*require_all=*/true);
        fgjpeg_loaded = true;
    }
    for (const auto& a : cfg.roster)
        if (a.kind == AttackKind::JpegSim && !fgjpeg_loaded)
            throw ConfigError("roster uses jpeg_sim: pass --jpeg-checkpoint from train-jpeg");

    const fs::path out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "metrics.csv");
    log << TrainLogRow::csv_header() << "\n";

    Trainer trainer(cfg, models);
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run(
        corpus,
        [&](const TrainLogRow& row) {
            log << row.csv() << "\n";
            if (row.step % 50 == 0 || row.step == 1) {
                log.flush();
                const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                              t0).count();
                std::cout << "step " << row.step << "/" << cfg.total_steps << " ["
                          << stage_name(row.stage) << "] l_prt=" << row.l_prt
                          << " l_rec=" << row.l_rec << " l_loc=" << row.l_loc
                          << " psnr=" << row.psnr_protect << " f1=" << row.f1 << " ("
                          << dt << "s)\n";
            }
        },
        [&](std::int64_t step) {
            const auto path = out_dir / ("checkpoint_" + std::to_string(step) + ".clrkpt");
            save_checkpoint(path, trainer.models().module_map(), cfg.to_text(), step);
            fs::copy_file(path, out_dir / "checkpoint.clrkpt",
                          fs::copy_options::overwrite_existing);
            std::cout << "checkpoint -> " << path << "\n";
        });

    auto manifest = base_manifest("train", cfg);
    manifest["steps"] = trainer.state().step;
    manifest["stage"] = stage_name(trainer.state().stage);
    manifest["metrics_csv"] = (out_dir / "metrics.csv").string();
    manifest["checkpoint"] = (out_dir / "checkpoint.clrkpt").string();
    manifest["hyper_parameters"] = {{"alpha", cfg.weights.alpha}, {"beta", cfg.weights.beta},
                                    {"gamma", cfg.weights.gamma}, {"epsilon", cfg.weights.epsilon},
                                    {"eta", cfg.weights.eta}};
    write_manifest(out_dir / "train_manifest.json", manifest);
    std::cout << "done; final stage " << stage_name(trainer.state().stage) << "\n";
    return kOk;
}

// --- train-jpeg ------------------------------------------------------------

int cmd_train_jpeg(const fs::path& config_path) {
    auto cfg = RunConfig::from_file(config_path);
    if (cfg.train_dir.empty()) throw ConfigError("data.train_dir is required for train-jpeg");
    require_codec();

    auto corpus = load_folder(cfg.train_dir, cfg.resolution);
    auto models = Models::build(cfg);

    FgJpegTrainOptions opts;
    opts.predictor_steps = cfg.fgjpeg_predictor_steps;
    opts.generator_steps = cfg.fgjpeg_generator_steps;
    opts.batch = cfg.fgjpeg_batch;
    opts.lr_predictor = cfg.fgjpeg_lr_predictor;
    opts.lr_generator = cfg.fgjpeg_lr_generator;
    opts.epsilon = cfg.weights.epsilon;
    opts.awgn_sigma = cfg.fgjpeg_awgn_sigma;
    opts.awgn_prob = cfg.fgjpeg_awgn_prob;
    opts.seed = cfg.seed;
    if (const char* cache = std::getenv("CLRKIT_CACHE")) opts.cache_dir = cache;
    opts.log = [](const std::string& s) { std::cout << s << "\n"; };

    auto report = train_fgjpeg(models.fgjpeg, corpus, opts);

    const fs::path out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    const auto ckpt = out_dir / "fgjpeg.clrkpt";
    save_checkpoint(ckpt, {{"fgjpeg", models.fgjpeg.get()}}, cfg.to_text(),
                    cfg.fgjpeg_generator_steps);

    std::ostringstream fidelity;
    fidelity << "qf,sim_l1,input_l1\n";
    for (const auto& [qf, v] : report.sim_l1)
        fidelity << qf << "," << v << "," << report.input_l1.at(qf) << "\n";
    atomic_write(out_dir / "fgjpeg_fidelity.csv", fidelity.str());

    auto manifest = base_manifest("train-jpeg", cfg);
    manifest["checkpoint"] = ckpt.string();
    manifest["predictor_class_accuracy"] = report.predictor_class_accuracy;
    manifest["predictor_acceptable_accuracy"] = report.predictor_acceptable_accuracy;
    write_manifest(out_dir / "fgjpeg_manifest.json", manifest);

    std::cout << "fgjpeg checkpoint -> " << ckpt << "\n"
              << "predictor class accuracy " << report.predictor_class_accuracy
              << ", acceptable (delta_QF=20) " << report.predictor_acceptable_accuracy << "\n";
    for (const auto& [qf, v] : report.sim_l1)
        std::cout << "  qf " << qf << ": sim l1 " << v << " vs input l1 "
                  << report.input_l1.at(qf) << "\n";
    return kOk;
}

// --- evaluate ---------------------------------------------------------------

int cmd_evaluate(const fs::path& ckpt, const fs::path& data_dir,
                 const std::vector<std::string>& attack_override, const fs::path& out_dir_arg) {
    auto loaded = load_models(ckpt);
    auto& cfg = loaded.cfg;
    if (!attack_override.empty()) {
        cfg.roster.clear();
        for (const auto& a : attack_override) cfg.roster.push_back(AttackSpec::parse(a));
    }
    for (const auto& a : cfg.roster)
        if (a.kind == AttackKind::JpegReal || a.kind == AttackKind::JpegSim) require_codec();

    auto images = load_folder(data_dir, cfg.resolution);
    auto report = run_evaluation(loaded.models, images, cfg, data_dir.filename().string());

    const fs::path out_dir = out_dir_arg.empty() ? fs::path(cfg.output_dir) : out_dir_arg;
    fs::create_directories(out_dir);
    atomic_write(out_dir / "eval_report.csv", report.to_csv());
    atomic_write(out_dir / "eval_report.json", report.to_json());
    write_report_plots(report, out_dir);

    auto manifest = base_manifest("evaluate", cfg);
    manifest["checkpoint_hash"] = hex64(loaded.file_hash);
    manifest["dataset"] = data_dir.string();
    manifest["report_csv"] = (out_dir / "eval_report.csv").string();
    write_manifest(out_dir / "eval_manifest.json", manifest);

    std::cout << report.to_csv();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(std::max(1u, std::thread::hardware_concurrency()));
    CLI::App app{"clrkit: invertible image protection, crop localization and recovery"};
    app.require_subcommand(1);

    std::string in_path, out_path, ckpt_path, config_path, mask_arg, data_dir, jpeg_ckpt;
    std::vector<std::string> attack_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;

    auto* protect = app.add_subcommand("protect", "embed protection into an image");
    protect->add_option("--in", in_path)->required();
    protect->add_option("--checkpoint", ckpt_path)->required();
    protect->add_option("--out", out_path)->required();

    auto* detect = app.add_subcommand("detect", "localize a crop and print the verdict");
    detect->add_option("--in", in_path)->required();
    detect->add_option("--checkpoint", ckpt_path)->required();
    detect->add_option("--out", out_path);

    auto* recover = app.add_subcommand("recover", "rectify and invert the protection");
    recover->add_option("--in", in_path)->required();
    recover->add_option("--checkpoint", ckpt_path)->required();
    recover->add_option("--out", out_path)->required();
    recover->add_option("--mask", mask_arg, "override: x0,y0,x1,y1 | full | JSON | file.json");

    auto* train = app.add_subcommand("train", "run the staged training schedule");
    train->add_option("--config", config_path)->required();
    train->add_option("--jpeg-checkpoint", jpeg_ckpt, "trained FG-JPEG checkpoint");
    train->add_option("--seed", seed_override)->each([&](const std::string&) { has_seed = true; });

    auto* train_jpeg = app.add_subcommand("train-jpeg", "train the FG-JPEG simulator");
    train_jpeg->add_option("--config", config_path)->required();
    train_jpeg->add_option("--seed", seed_override)->each([&](const std::string&) {
        has_seed = true;
    });

    auto* evaluate = app.add_subcommand("evaluate", "full attack x crop-rate grid");
    evaluate->add_option("--checkpoint", ckpt_path)->required();
    evaluate->add_option("--data", data_dir)->required();
    evaluate->add_option("--attack", attack_override, "override the attack roster");
    evaluate->add_option("--out", out_path);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*protect) return cmd_protect(in_path, ckpt_path, out_path);
        if (*detect) return cmd_detect(in_path, ckpt_path, out_path);
        if (*recover) return cmd_recover(in_path, ckpt_path, out_path, mask_arg);
        if (*train) {
            if (has_seed) {
                auto cfg = RunConfig::from_file(config_path);
                cfg.seed = seed_override;
                const auto patched = fs::temp_directory_path() / "clrkit_seed_override.ini";
                atomic_write(patched, cfg.to_text());
                return cmd_train(patched, jpeg_ckpt);
            }
            return cmd_train(config_path, jpeg_ckpt);
        }
        if (*train_jpeg) {
            if (has_seed) {
                auto cfg = RunConfig::from_file(config_path);
                cfg.seed = seed_override;
                const auto patched = fs::temp_directory_path() / "clrkit_seed_override.ini";
                atomic_write(patched, cfg.to_text());
                return cmd_train_jpeg(patched);
            }
            return cmd_train_jpeg(config_path);
        }
        if (*evaluate) return cmd_evaluate(ckpt_path, data_dir, attack_override, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::system_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code().value() == kMissingCodec ? kMissingCodec : kBadInput;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    }
    return kOk;
}
