#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rgs/dataset.hpp"
#include "rgs/dnaf.hpp"
#include "rgs/kernels.hpp"
#include "rgs/raster.hpp"

namespace rgs {

struct TrainConfig {
    int iterations = 30000;
    int adaptive_start = 600;
    int adaptive_end = 15000;
    int adaptive_interval = 200;
    double grad_threshold = 0.0001;
    double prune_epsilon = 1e-6;
    double lambda_ssim = 0.2;
    double lr_position = 0.0001;
    double lr_rotation = 0.001;
    double lr_scale = 0.005;
    double lr_dnaf = 0.001;
    double dnaf_weight_decay = 5e-5;
    std::uint64_t seed = 0;
    bool dnaf_position_gradients = true;
    bool view_space_grad_stats = true;  // false: world-space norm

    void validate() const;
    void set_fast_mode() {
        iterations = 10000;
        adaptive_end = 5000;
    }

    // Exponential schedule reaching exactly 0.1 * lr0 at the final step
    // (step is 1-based).
    double lr_at(double lr0, int step) const;
};

TrainConfig parse_train_config(const std::string& text);  // unknown keys rejected
std::string train_config_to_text(const TrainConfig& cfg);

// Standard bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) with
// decoupled weight decay. State arrays are owned by the caller and must
// match the parameter length.
struct AdamState {
    std::vector<float> m, v;
    void resize(std::size_t n) {
        m.assign(n, 0.0f);
        v.assign(n, 0.0f);
    }
};

// `step` is 1-based. Throws on non-finite gradients, reporting the element
// (and kernel index for stride > 1).
void adam_step(AdamState& state, float* params, const float* grads, std::size_t n,
               double lr, double weight_decay, int step, std::size_t stride = 1);

// Gaussian temporal perturbation, clamped to [0, 1].
double perturb_timestamp(double t, double w, std::mt19937_64& rng);

// Adaptive-control mapping from new kernel indices to their old index;
// kNewKernel marks freshly created kernels (zeroed optimizer state).
inline constexpr std::uint32_t kNewKernel = 0xffffffffu;

struct AdaptiveReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

// Clone/split kernels whose mean view-space position-gradient norm exceeds
// the threshold. Small kernels (max scale < 0.01 * scene_extent) clone;
// large ones split into two samples from the parent Gaussian with scales
// divided by 1.6.
std::vector<std::uint32_t> densify(KernelSet<float>& kernels, double grad_threshold,
                                   double scene_extent, const ScaleBounds& bounds,
                                   std::mt19937_64& rng, AdaptiveReport* report = nullptr);

// Accumulated-attenuation pruning: removes kernels whose mean accumulated
// rho (count >= 1) falls below epsilon; kernels with count 0 are retained.
// Resets every accumulator afterwards.
std::vector<std::uint32_t> accumulate_and_prune(KernelSet<float>& kernels, double epsilon,
                                                AdaptiveReport* report = nullptr);

struct TrainResult {
    KernelSet<float> kernels;
    DnafModel<float> dnaf;
    double final_loss = 0.0;
};

struct TrainCallbacks {
    std::function<void(const std::string&)> log_line;  // one JSON object per call
    std::function<void(int iter, const KernelSet<float>&, const DnafModel<float>&)>
        checkpoint;  // every 1000 iterations and on NaN abort
};

// Full optimization loop. `train_views` holds 1-based frame indices into the
// dataset (typically from subsample_views).
TrainResult train(const ProjectionDataset& dataset, const std::vector<int>& train_views,
                  KernelSet<float> kernels, DnafModel<float> dnaf,
                  const ScaleBounds& bounds, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

}  // namespace rgs
