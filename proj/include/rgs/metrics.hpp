#pragma once

#include <string>
#include <vector>

#include "rgs/image.hpp"

namespace rgs {

struct FrameMetrics {
    int frame_index = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalResult {
    std::vector<FrameMetrics> frames;
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;
};

// PSNR = 10 log10(R^2 / MSE) with R the per-frame ground-truth dynamic range
// (floored at 1e-3); a zero-MSE frame reports the 99 dB cap. SSIM uses the
// same 11x11 sigma-1.5 window as the training loss.
EvalResult eval_images(const std::vector<Image<float>>& pred,
                       const std::vector<Image<float>>& gt,
                       const std::vector<int>& frame_indices = {});

// CSV schema: frame_index,psnr_db,ssim (one row per frame).
std::string metrics_to_csv(const EvalResult& result);

}  // namespace rgs
