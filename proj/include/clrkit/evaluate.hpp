#ifndef CLRKIT_EVALUATE_HPP
#define CLRKIT_EVALUATE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "clrkit/config.hpp"
#include "clrkit/trainer.hpp"

namespace clrkit {

struct EvalRow {
    std::string dataset;
    double bucket_lo = 0, bucket_hi = 0;
    std::string attack;
    double f1 = 0, psnr = 0, ssim = 0;
    int count = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string to_csv() const;
    std::string to_json() const;
    const EvalRow* find(const std::string& attack, double bucket_lo) const;
};

// protect -> crop -> attack -> save-format round trip -> detect -> rectify ->
// recover, per (attack x crop-rate bucket) cell, averaged over the set. The
// same per-image crop is reused across attacks within a bucket so columns are
// comparable.
EvalReport run_evaluation(Models& models, const std::vector<ImageGrid>& images,
                          const RunConfig& cfg, const std::string& dataset_name);

// Simple line charts (one per metric, one series per bucket) next to the CSV.
void write_report_plots(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace clrkit

#endif
