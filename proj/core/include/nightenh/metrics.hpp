#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nightenh/image.hpp"

namespace nightenh {

// Mean squared difference over all samples.
double mse(const Image& a, const Image& b);

// 10 log10(1 / MSE) on the [0,1] range; identical images report +infinity
// (serialized as the literal "inf").
double psnr(const Image& a, const Image& b);

// Mean local SSIM on luma (0.299 r + 0.587 g + 0.114 b), 11x11 Gaussian
// window with sigma 1.5, C1 = 0.01^2, C2 = 0.03^2. Errors if either extent
// is smaller than the window.
double ssim(const Image& a, const Image& b);

struct EvalRow {
    std::string name;
    double psnr, ssim, mse;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalRow mean{"mean", 0, 0, 0};
    EvalRow stddev{"std", 0, 0, 0};
    std::vector<std::string> unmatched; // names present in only one folder
    std::string pred_dir, gt_dir;       // provenance
};

// Pairs files by name across the two folders, computes per-pair metrics and
// aggregates. Unmatched names land in the report's error section and are
// excluded from the aggregates.
EvalReport eval_dataset(const std::string& pred_dir, const std::string& gt_dir);

// One header line, one row per pair, then mean and std rows; unmatched names
// follow as '#'-prefixed lines.
void write_report(const EvalReport& report, std::ostream& os);
std::string format_report_summary(const EvalReport& report);

} // namespace nightenh
