#include "rgs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rgs/loss.hpp"

namespace rgs {

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
    if (lambda_ssim < 0.0 || lambda_ssim > 1.0)
        throw std::invalid_argument("config: lambda_ssim must lie in [0, 1]");
    if (!(lr_position > 0.0) || !(lr_rotation > 0.0) || !(lr_scale > 0.0) ||
        !(lr_dnaf > 0.0))
        throw std::invalid_argument("config: learning rates must be positive");
    if (iterations > 0 &&
        (adaptive_start < 1 || adaptive_end > iterations || adaptive_interval < 1))
        throw std::invalid_argument("config: adaptive window must lie within [1, iterations]");
    if (!(prune_epsilon >= 0.0) || !(grad_threshold >= 0.0))
        throw std::invalid_argument("config: thresholds must be >= 0");
}

double TrainConfig::lr_at(double lr0, int step) const {
    if (iterations <= 0) return lr0;
    return lr0 * std::pow(0.1, static_cast<double>(step) / iterations);
}

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') continue;
        double v;
        if (!(ls >> v))
            throw std::runtime_error("train config: missing value for '" + key + "'");
        if (key == "iterations") cfg.iterations = static_cast<int>(v);
        else if (key == "adaptive_start") cfg.adaptive_start = static_cast<int>(v);
        else if (key == "adaptive_end") cfg.adaptive_end = static_cast<int>(v);
        else if (key == "adaptive_interval") cfg.adaptive_interval = static_cast<int>(v);
        else if (key == "grad_threshold") cfg.grad_threshold = v;
        else if (key == "prune_epsilon") cfg.prune_epsilon = v;
        else if (key == "lambda_ssim") cfg.lambda_ssim = v;
        else if (key == "lr_position") cfg.lr_position = v;
        else if (key == "lr_rotation") cfg.lr_rotation = v;
        else if (key == "lr_scale") cfg.lr_scale = v;
        else if (key == "lr_dnaf") cfg.lr_dnaf = v;
        else if (key == "dnaf_weight_decay") cfg.dnaf_weight_decay = v;
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(v);
        else if (key == "dnaf_position_gradients") cfg.dnaf_position_gradients = v != 0.0;
        else if (key == "view_space_grad_stats") cfg.view_space_grad_stats = v != 0.0;
        else throw std::runtime_error("train config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

std::string train_config_to_text(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "iterations " << cfg.iterations << "\n"
       << "adaptive_start " << cfg.adaptive_start << "\n"
       << "adaptive_end " << cfg.adaptive_end << "\n"
       << "adaptive_interval " << cfg.adaptive_interval << "\n"
       << "grad_threshold " << cfg.grad_threshold << "\n"
       << "prune_epsilon " << cfg.prune_epsilon << "\n"
       << "lambda_ssim " << cfg.lambda_ssim << "\n"
       << "lr_position " << cfg.lr_position << "\n"
       << "lr_rotation " << cfg.lr_rotation << "\n"
       << "lr_scale " << cfg.lr_scale << "\n"
       << "lr_dnaf " << cfg.lr_dnaf << "\n"
       << "dnaf_weight_decay " << cfg.dnaf_weight_decay << "\n"
       << "seed " << cfg.seed << "\n"
       << "dnaf_position_gradients " << (cfg.dnaf_position_gradients ? 1 : 0) << "\n"
       << "view_space_grad_stats " << (cfg.view_space_grad_stats ? 1 : 0) << "\n";
    return os.str();
}

void adam_step(AdamState& state, float* params, const float* grads, std::size_t n,
               double lr, double weight_decay, int step, std::size_t stride) {
    if (state.m.size() != n) state.resize(n);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        if (!std::isfinite(g)) {
            std::ostringstream os;
            os << "adam_step: non-finite gradient at element " << i;
            if (stride > 1) os << " (kernel " << i / stride << ")";
            throw std::runtime_error(os.str());
        }
        double m = beta1 * state.m[i] + (1.0 - beta1) * g;
        double v = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        if (weight_decay > 0.0) update += lr * weight_decay * params[i];
        params[i] = static_cast<float>(params[i] - update);
    }
}

double perturb_timestamp(double t, double w, std::mt19937_64& rng) {
    if (!(w > 0.0)) throw std::invalid_argument("perturb_timestamp: w must be > 0");
    std::normal_distribution<double> noise(0.0, w);
    return std::clamp(t + noise(rng), 0.0, 1.0);
}

std::vector<std::uint32_t> densify(KernelSet<float>& kernels, double grad_threshold,
                                   double scene_extent, const ScaleBounds& bounds,
                                   std::mt19937_64& rng, AdaptiveReport* report) {
    kernels.check_consistent();
    const std::size_t m = kernels.size();
    KernelSet<float> out;
    std::vector<std::uint32_t> origin;
    std::normal_distribution<double> unit(0.0, 1.0);

    for (std::uint32_t i = 0; i < m; ++i) {
        const bool considered = kernels.grad_count[i] > 0;
        const double mean_grad =
            considered ? kernels.grad_norm_sum[i] / kernels.grad_count[i] : 0.0;
        if (!considered || mean_grad <= grad_threshold) {
            out.raw.push_back(kernels.raw[i]);
            origin.push_back(i);
            continue;
        }
        const Vec3<float> scale = activate_scale(kernels.raw[i].scale, bounds);
        const float smax = std::max({scale.x, scale.y, scale.z});
        if (smax < 0.01 * scene_extent) {
            // Clone: parent survives, duplicate appended.
            out.raw.push_back(kernels.raw[i]);
            origin.push_back(i);
            out.raw.push_back(kernels.raw[i]);
            origin.push_back(kNewKernel);
            if (report) ++report->cloned;
        } else {
            // Split: two children sampled from the parent Gaussian, parent removed.
            const ActivatedKernel<float> act = activate_kernel(kernels.raw[i], bounds);
            const Mat3<float> R = quaternion_to_rotation(act.rotation);
            Vec3<float> child_scale{act.scale.x / 1.6f, act.scale.y / 1.6f,
                                    act.scale.z / 1.6f};
            const Vec3<float> child_raw_scale = invert_scale_activation(child_scale, bounds);
            for (int c = 0; c < 2; ++c) {
                Vec3<float> n{static_cast<float>(unit(rng)), static_cast<float>(unit(rng)),
                              static_cast<float>(unit(rng))};
                Vec3<float> local{n.x * act.scale.x, n.y * act.scale.y, n.z * act.scale.z};
                RawKernelParams<float> child;
                child.position = act.position + R * local;
                child.rotation = kernels.raw[i].rotation;
                child.scale = child_raw_scale;
                out.raw.push_back(child);
                origin.push_back(kNewKernel);
            }
            if (report) ++report->split;
        }
    }

    out.resize(out.raw.size());  // zeroes accumulators
    // Survivors keep their attenuation accumulators so the pruning pass that
    // follows still sees the full window.
    for (std::size_t i = 0; i < origin.size(); ++i) {
        if (origin[i] == kNewKernel) continue;
        out.atten_sum[i] = kernels.atten_sum[origin[i]];
        out.atten_count[i] = kernels.atten_count[origin[i]];
        out.grad_norm_sum[i] = kernels.grad_norm_sum[origin[i]];
        out.grad_count[i] = kernels.grad_count[origin[i]];
    }
    kernels = std::move(out);
    return origin;
}

std::vector<std::uint32_t> accumulate_and_prune(KernelSet<float>& kernels, double epsilon,
                                                AdaptiveReport* report) {
    kernels.check_consistent();
    const std::size_t m = kernels.size();
    std::vector<std::uint32_t> kept;
    kept.reserve(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        if (kernels.atten_count[i] >= 1) {
            const double mean = kernels.atten_sum[i] / kernels.atten_count[i];
            if (mean < epsilon) {
                if (report) ++report->pruned;
                continue;
            }
        }
        kept.push_back(i);
    }
    KernelSet<float> out;
    out.raw.reserve(kept.size());
    for (std::uint32_t i : kept) out.raw.push_back(kernels.raw[i]);
    out.resize(out.raw.size());
    kernels = std::move(out);
    return kept;
}

namespace {

// Remap per-kernel Adam moments after densify (origin mapping, kNewKernel =
// zero) or prune (kept list).
void remap_moments(AdamState& state, const std::vector<std::uint32_t>& origin,
                   std::size_t stride) {
    AdamState next;
    next.resize(origin.size() * stride);
    for (std::size_t i = 0; i < origin.size(); ++i) {
        if (origin[i] == kNewKernel) continue;
        for (std::size_t k = 0; k < stride; ++k) {
            next.m[i * stride + k] = state.m[origin[i] * stride + k];
            next.v[i * stride + k] = state.v[origin[i] * stride + k];
        }
    }
    state = std::move(next);
}

struct KernelGradFlat {
    std::vector<float> position, rotation, scale;
};

}  // namespace

TrainResult train(const ProjectionDataset& dataset, const std::vector<int>& train_views,
                  KernelSet<float> kernels, DnafModel<float> dnaf,
                  const ScaleBounds& bounds, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
    dataset.validate();
    cfg.validate();
    bounds.validate();
    if (train_views.empty())
        throw std::invalid_argument("train: need at least one training view");
    for (int j : train_views)
        if (j < 1 || j > dataset.geometry.frame_count)
            throw std::invalid_argument("train: training view index out of range");

    const std::size_t n_views = train_views.size();
    // Temporal perturbation width per view: spacing to the next training
    // timestamp (the last view reuses the previous spacing).
    std::vector<double> view_w(n_views, 1.0 / dataset.geometry.frame_count);
    for (std::size_t k = 0; k < n_views; ++k) {
        const double t0 = dataset.frames[train_views[k] - 1].timestamp;
        if (k + 1 < n_views)
            view_w[k] = dataset.frames[train_views[k + 1] - 1].timestamp - t0;
        else if (n_views > 1)
            view_w[k] = view_w[k - 1];
    }

    std::mt19937_64 rng(cfg.seed);
    AdamState adam_pos, adam_rot, adam_scale;
    AdamState adam_t3, adam_t4, adam_w1, adam_b1, adam_w2, adam_b2;

    const double scene_extent = (dnaf.box_max - dnaf.box_min).norm();

    std::vector<std::size_t> perm(n_views);
    std::size_t perm_pos = n_views;  // forces a reshuffle on first use

    TrainResult last_good{kernels, dnaf, 0.0};
    double loss_value = 0.0;

    for (int step = 1; step <= cfg.iterations; ++step) {
        if (perm_pos >= n_views) {
            perm.resize(n_views);
            for (std::size_t i = 0; i < n_views; ++i) perm[i] = i;
            std::shuffle(perm.begin(), perm.end(), rng);
            perm_pos = 0;
        }
        const std::size_t k = perm[perm_pos++];
        const FrameSpec& frame = dataset.frames[train_views[k] - 1];
        const Image<float>& target = dataset.images[train_views[k] - 1];
        const double t_pert = perturb_timestamp(frame.timestamp, view_w[k], rng);

        const std::size_t m = kernels.size();
        const auto activated = activate_all(kernels, bounds);

        // Central attenuation, one DNAF query per kernel per iteration.
        DnafForwardState<float> dnaf_state;
        std::vector<float> rho(m);
        for (std::size_t i = 0; i < m; ++i) {
            rho[i] = dnaf_forward_one(dnaf, kernels.raw[i].position,
                                      static_cast<float>(t_pert), &dnaf_state);
            kernels.atten_sum[i] += rho[i];
            kernels.atten_count[i] += 1;
        }

        FrameSpec splat_frame = frame;
        splat_frame.timestamp = t_pert;
        const auto fwd = splat_forward(activated, rho, dataset.geometry, splat_frame);
        const auto loss = compute_loss(fwd.values, target,
                                       static_cast<float>(cfg.lambda_ssim));
        loss_value = loss.loss;

        if (!std::isfinite(loss_value)) {
            if (callbacks.checkpoint)
                callbacks.checkpoint(step - 1, last_good.kernels, last_good.dnaf);
            throw std::runtime_error("train: loss became non-finite at iteration " +
                                     std::to_string(step));
        }

        const auto rg = splat_backward(kernels, activated, rho, bounds, dataset.geometry,
                                       splat_frame, fwd, loss.grad);

        DnafGradients<float> dg;
        dnaf_backward(dnaf, dnaf_state, rg.d_rho, dg);

        // Densification statistic.
        for (std::size_t i = 0; i < m; ++i) {
            if (!rg.hit[i]) continue;
            double norm = rg.view_grad_norm[i];
            if (!cfg.view_space_grad_stats) norm = rg.d_raw_position[i].norm();
            kernels.grad_norm_sum[i] += norm;
            kernels.grad_count[i] += 1;
        }

        // Flatten kernel params/gradients; position gets both chain-rule paths.
        KernelGradFlat kg, kp;
        kg.position.resize(3 * m);
        kg.rotation.resize(4 * m);
        kg.scale.resize(3 * m);
        kp.position.resize(3 * m);
        kp.rotation.resize(4 * m);
        kp.scale.resize(3 * m);
        for (std::size_t i = 0; i < m; ++i) {
            Vec3<float> dp = rg.d_raw_position[i];
            if (cfg.dnaf_position_gradients) dp += dg.d_position[i];
            for (int a = 0; a < 3; ++a) {
                kg.position[3 * i + a] = dp[a];
                kp.position[3 * i + a] = kernels.raw[i].position[a];
                kg.scale[3 * i + a] = rg.d_raw_scale[i][a];
                kp.scale[3 * i + a] = kernels.raw[i].scale[a];
            }
            for (int a = 0; a < 4; ++a) {
                kg.rotation[4 * i + a] = rg.d_raw_rotation[i][a];
                kp.rotation[4 * i + a] = kernels.raw[i].rotation[a];
            }
        }

        adam_step(adam_pos, kp.position.data(), kg.position.data(), 3 * m,
                  cfg.lr_at(cfg.lr_position, step), 0.0, step, 3);
        adam_step(adam_rot, kp.rotation.data(), kg.rotation.data(), 4 * m,
                  cfg.lr_at(cfg.lr_rotation, step), 0.0, step, 4);
        adam_step(adam_scale, kp.scale.data(), kg.scale.data(), 3 * m,
                  cfg.lr_at(cfg.lr_scale, step), 0.0, step, 3);
        for (std::size_t i = 0; i < m; ++i) {
            for (int a = 0; a < 3; ++a) {
                kernels.raw[i].position[a] = kp.position[3 * i + a];
                kernels.raw[i].scale[a] = kp.scale[3 * i + a];
            }
            for (int a = 0; a < 4; ++a)
                kernels.raw[i].rotation[a] = kp.rotation[4 * i + a];
        }
        const double lr_dnaf = cfg.lr_at(cfg.lr_dnaf, step);
        adam_step(adam_t3, dnaf.tables3.data(), dg.tables3.data(), dnaf.tables3.size(),
                  lr_dnaf, cfg.dnaf_weight_decay, step);
        adam_step(adam_t4, dnaf.tables4.data(), dg.tables4.data(), dnaf.tables4.size(),
                  lr_dnaf, cfg.dnaf_weight_decay, step);
        adam_step(adam_w1, dnaf.w1.data(), dg.w1.data(), dnaf.w1.size(), lr_dnaf,
                  cfg.dnaf_weight_decay, step);
        adam_step(adam_b1, dnaf.b1.data(), dg.b1.data(), dnaf.b1.size(), lr_dnaf,
                  cfg.dnaf_weight_decay, step);
        adam_step(adam_w2, dnaf.w2.data(), dg.w2.data(), dnaf.w2.size(), lr_dnaf,
                  cfg.dnaf_weight_decay, step);
        adam_step(adam_b2, &dnaf.b2, &dg.b2, 1, lr_dnaf, cfg.dnaf_weight_decay, step);

        if (step >= cfg.adaptive_start && step <= cfg.adaptive_end &&
            step % cfg.adaptive_interval == 0) {
            AdaptiveReport report;
            const auto origin =
                densify(kernels, cfg.grad_threshold, scene_extent, bounds, rng, &report);
            remap_moments(adam_pos, origin, 3);
            remap_moments(adam_rot, origin, 4);
            remap_moments(adam_scale, origin, 3);
            const auto kept = accumulate_and_prune(kernels, cfg.prune_epsilon, &report);
            remap_moments(adam_pos, kept, 3);
            remap_moments(adam_rot, kept, 4);
            remap_moments(adam_scale, kept, 3);
        }

        if (callbacks.log_line && step % 100 == 0) {
            std::ostringstream os;
            os.precision(10);
            os << "{\"iter\":" << step << ",\"loss\":" << loss.loss
               << ",\"l1\":" << loss.l1 << ",\"dssim\":" << loss.dssim
               << ",\"num_kernels\":" << kernels.size()
               << ",\"lr_position\":" << cfg.lr_at(cfg.lr_position, step)
               << ",\"lr_rotation\":" << cfg.lr_at(cfg.lr_rotation, step)
               << ",\"lr_scale\":" << cfg.lr_at(cfg.lr_scale, step)
               << ",\"lr_dnaf\":" << lr_dnaf << "}";
            callbacks.log_line(os.str());
        }
        if (callbacks.checkpoint && step % 1000 == 0)
            callbacks.checkpoint(step, kernels, dnaf);

        if (step % 100 == 0) last_good = {kernels, dnaf, loss_value};
    }

    return {std::move(kernels), std::move(dnaf), loss_value};
}

}  // namespace rgs
