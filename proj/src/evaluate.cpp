#include "clrkit/evaluate.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <map>
#include <sstream>

#include "clrkit/metrics.hpp"

namespace clrkit {

std::string EvalReport::to_csv() const {
    std::ostringstream o;
    o << "dataset,rate_bucket,attack,F1,PSNR,SSIM\n";
    for (const auto& r : rows) {
        o.precision(6);
        o << r.dataset << "," << r.bucket_lo << ":" << r.bucket_hi << "," << r.attack << ","
          << r.f1 << "," << r.psnr << "," << r.ssim << "\n";
    }
    return o.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"dataset", r.dataset},
                     {"bucket", {r.bucket_lo, r.bucket_hi}},
                     {"attack", r.attack},
                     {"F1", r.f1},
                     {"PSNR", r.psnr},
                     {"SSIM", r.ssim},
                     {"count", r.count}});
    return j.dump(2);
}

const EvalRow* EvalReport::find(const std::string& attack, double bucket_lo) const {
    for (const auto& r : rows)
        if (r.attack == attack && std::abs(r.bucket_lo - bucket_lo) < 1e-9) return &r;
    return nullptr;
}

EvalReport run_evaluation(Models& models, const std::vector<ImageGrid>& images,
                          const RunConfig& cfg, const std::string& dataset_name) {
    if (images.empty()) throw std::invalid_argument("evaluate: empty dataset");
    models.eval();
    torch::NoGradGuard ng;

    struct Acc {
        double f1 = 0, psnr = 0, ssim = 0;
        int count = 0;
    };
    std::map<std::pair<std::size_t, std::string>, Acc> cells;

    const auto n = std::min<std::size_t>(
        images.size(), static_cast<std::size_t>(cfg.eval_max_images > 0 ? cfg.eval_max_images
                                                                        : images.size()));
    const auto h = cfg.resolution, w = cfg.resolution;

    for (std::size_t ii = 0; ii < n; ++ii) {
        const auto& original = images[ii];
        auto x = models.generator->protect(original);
        auto xq = quantize_u8(x);

        for (std::size_t bi = 0; bi < cfg.eval_buckets.size(); ++bi) {
            const auto [lo, hi] = cfg.eval_buckets[bi];
            // One crop per (image, bucket), shared across attacks.
            auto rng = derive_rng(cfg.seed, 0x9e3779b9u + ii, bi);
            CropSpec crop;
            crop.rate = uniform(rng, lo, hi);
            crop.aspect_min = cfg.aspect_min;
            crop.aspect_max = cfg.aspect_max;
            const auto rect = sample_crop(rng, crop, h, w);
            auto truth_mask = rasterize(rect, h, w);

            for (const auto& attack : cfg.roster) {
                auto crop_img = region_select(xq, rect);
                AttackContext ctx;
                ctx.rng = &rng;
                ctx.quantize = true;
                torch::Tensor cover_crop;
                if (attack.kind == AttackKind::Dropout) {
                    cover_crop = region_select(original, rect);
                    ctx.cover = &cover_crop;
                }
                if (!models.fgjpeg.is_empty())
                    ctx.jpeg_sim = [&](const torch::Tensor& img, int qf) {
                        return models.fgjpeg->simulate(img, qf);
                    };
                auto attacked = apply_attack(crop_img, attack, ctx);
                // Redistribution: the attacked image travels through a real
                // file format.
                attacked = encode_decode(attacked, cfg.save_format);

                // Recipient side.
                auto received = resize_bilinear(attacked, h, w);
                auto processed = models.preprocessor->forward(received.unsqueeze(0));
                auto loc = models.localizer->forward(processed);
                auto pred = rect_row_to_mask(loc.rect[0], loc.score[0].item<double>());
                auto pred_mask = rasterize(pred, h, w);

                auto padded = zero_pad_resize(processed.squeeze(0), pred, {h, w});
                auto recovered = models.generator->recover(padded).clamp(0, 1);

                auto& acc = cells[{bi, attack.to_string()}];
                acc.f1 += f1_score(pred_mask, truth_mask);
                acc.psnr += psnr(recovered, original);
                acc.ssim += ssim(recovered, original);
                acc.count += 1;
            }
        }
    }

    EvalReport report;
    for (std::size_t bi = 0; bi < cfg.eval_buckets.size(); ++bi) {
        for (const auto& attack : cfg.roster) {
            const auto key = std::make_pair(bi, attack.to_string());
            const auto& acc = cells.at(key);
            EvalRow row;
            row.dataset = dataset_name;
            row.bucket_lo = cfg.eval_buckets[bi].first;
            row.bucket_hi = cfg.eval_buckets[bi].second;
            row.attack = key.second;
            row.f1 = acc.f1 / acc.count;
            row.psnr = acc.psnr / acc.count;
            row.ssim = acc.ssim / acc.count;
            row.count = acc.count;
            report.rows.push_back(row);
        }
    }
    models.train();
    return report;
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

namespace {

void draw_chart(const std::filesystem::path& path, const std::string& title,
                const std::vector<std::string>& x_labels,
                const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const int width = 720, height = 480, margin = 60;
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

    double lo = 1e30, hi = -1e30;
    for (const auto& [name, ys] : series)
        for (double y : ys) {
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto px = [&](std::size_t i) {
        return margin + static_cast<int>((width - 2.0 * margin) * static_cast<double>(i) /
                                         std::max<std::size_t>(1, x_labels.size() - 1));
    };
    auto py = [&](double y) {
        return height - margin -
               static_cast<int>((height - 2.0 * margin) * (y - lo) / (hi - lo));
    };

    cv::rectangle(canvas, {margin, margin}, {width - margin, height - margin},
                  cv::Scalar(180, 180, 180));
    cv::putText(canvas, title, {margin, margin - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                cv::Scalar(20, 20, 20), 1, cv::LINE_AA);

    const std::vector<cv::Scalar> palette = {{180, 90, 30}, {30, 90, 180}, {30, 160, 60},
                                             {150, 40, 150}, {0, 120, 200}};
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& [name, ys] = series[s];
        const auto color = palette[s % palette.size()];
        for (std::size_t i = 0; i + 1 < ys.size(); ++i)
            cv::line(canvas, {px(i), py(ys[i])}, {px(i + 1), py(ys[i + 1])}, color, 2,
                     cv::LINE_AA);
        for (std::size_t i = 0; i < ys.size(); ++i)
            cv::circle(canvas, {px(i), py(ys[i])}, 3, color, cv::FILLED, cv::LINE_AA);
        cv::putText(canvas, name, {width - margin - 150, margin + 18 * static_cast<int>(s + 1)},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv::LINE_AA);
    }
    for (std::size_t i = 0; i < x_labels.size(); ++i)
        cv::putText(canvas, x_labels[i], {px(i) - 20, height - margin + 20},
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", lo + pad);
    cv::putText(canvas, buf, {8, height - margin}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
    std::snprintf(buf, sizeof(buf), "%.3g", hi - pad);
    cv::putText(canvas, buf, {8, margin + 6}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(60, 60, 60), 1, cv::LINE_AA);

    std::filesystem::create_directories(path.parent_path());
    cv::imwrite(path.string(), canvas);
}

}  // namespace

void write_report_plots(const EvalReport& report, const std::filesystem::path& dir) {
     std::vector<std::string> attacks;
    std::vector<std::pair<double, double>> buckets;
    for (const auto& r : report.rows) {
        if (std::find(attacks.begin(), attacks.end(), r.attack) == attacks.end())
            attacks.push_back(r.attack);
        if (std::find_if(buckets.begin(), buckets.end(), [&](auto b) {
                return std::abs(b.first - r.bucket_lo) < 1e-9;
            }) == buckets.end())
            buckets.emplace_back(r.bucket_lo, r.bucket_hi);
    }

    for (const std::string metric : {"F1", "PSNR", "SSIM"}) {
        std::vector<std::pair<std::string, std::vector<double>>> series;
        for (const auto& [lo, hi] : buckets) {
            std::vector<double> ys;
            for (const auto& a : attacks) {
                const auto* row = report.find(a, lo);
                if (!row) continue;
                ys.push_back(metric == "F1" ? row->f1 : metric == "PSNR" ? row->psnr : row->ssim);
            }
            char name[48];
            std::snprintf(name, sizeof(name), "crop %.2f-%.2f", lo, hi);
            series.emplace_back(name, ys);
        }
        draw_chart(dir / ("eval_" + metric + ".png"), metric + " vs attack", attacks, series);
    }
}

}  // namespace clrkit
