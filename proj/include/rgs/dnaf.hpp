#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "rgs/vec.hpp"

namespace rgs {

// Multiresolution hash grid configuration (one table per level).
struct HashEncodingConfig {
    int input_dim = 3;          // 3 (space) or 4 (space + time)
    int levels = 12;
    std::size_t table_size = std::size_t(1) << 19;  // power of two
    int feature_dim = 2;
    double base_resolution = 8.0;
    double growth_factor = 1.45;

    void validate() const {
        if (input_dim != 3 && input_dim != 4)
            throw std::invalid_argument("hash encoding: input_dim must be 3 or 4");
        if (levels < 1) throw std::invalid_argument("hash encoding: levels must be >= 1");
        if (table_size == 0 || (table_size & (table_size - 1)) != 0)
            throw std::invalid_argument("hash encoding: table_size must be a power of two");
        if (feature_dim < 1)
            throw std::invalid_argument("hash encoding: feature_dim must be >= 1");
        if (!(growth_factor > 1.0))
            throw std::invalid_argument("hash encoding: growth_factor must be > 1");
        if (!(base_resolution >= 1.0))
            throw std::invalid_argument("hash encoding: base_resolution must be >= 1");
    }

    int resolution(int level) const {
        return static_cast<int>(std::floor(base_resolution * std::pow(growth_factor, level)));
    }
    std::size_t parameter_count() const {
        return static_cast<std::size_t>(levels) * table_size * feature_dim;
    }
    int output_dim() const { return levels * feature_dim; }

    static HashEncodingConfig paper_3d() { return {3, 12, std::size_t(1) << 19, 2, 8.0, 1.45}; }
    static HashEncodingConfig paper_4d() { return {4, 12, std::size_t(1) << 19, 2, 2.0, 1.4}; }
};

inline std::uint32_t hash_grid_index(const std::uint32_t coord[4], int dim,
                                     std::size_t table_size) {
    static constexpr std::uint32_t primes[4] = {1u, 2654435761u, 805459861u, 3674653429u};
    std::uint32_t h = 0;
    for (int a = 0; a < dim; ++a) h ^= coord[a] * primes[a];
    return h & static_cast<std::uint32_t>(table_size - 1);
}

namespace detail {

// Per-level interpolation cell: integer base corner, fractional weights and
// the grid scale (resolution - 1).
template <typename T>
struct LevelCell {
    std::uint32_t base[4];
    T frac[4];
    T scale;
};

template <typename T>
LevelCell<T> level_cell(const HashEncodingConfig& cfg, int level, const T u[4]) {
    LevelCell<T> cell{};
    const int r = cfg.resolution(level);
    const int scale = r - 1;
    cell.scale = T(scale);
    for (int a = 0; a < cfg.input_dim; ++a) {
        if (scale <= 0) {
            cell.base[a] = 0;
            cell.frac[a] = T(0);
            continue;
        }
        const T g = u[a] * T(scale);
        int base = static_cast<int>(std::floor(static_cast<double>(g)));
        base = std::min(std::max(base, 0), scale - 1);
        cell.base[a] = static_cast<std::uint32_t>(base);
        cell.frac[a] = g - T(base);
    }
    return cell;
}

}  // namespace detail

// Multilinear hash-grid lookup; output is levels x feature_dim, level-major.
template <typename T>
void hash_encode(const HashEncodingConfig& cfg, const std::vector<T>& tables,
                 const T u[4], T* out) {
    const int fd = cfg.feature_dim;
    const int corners = 1 << cfg.input_dim;
    for (int l = 0; l < cfg.levels; ++l) {
        const auto cell = detail::level_cell(cfg, l, u);
        const std::size_t level_off = static_cast<std::size_t>(l) * cfg.table_size * fd;
        for (int f = 0; f < fd; ++f) out[l * fd + f] = T(0);
        for (int cbits = 0; cbits < corners; ++cbits) {
            T w = T(1);
            std::uint32_t coord[4] = {};
            for (int a = 0; a < cfg.input_dim; ++a) {
                const int bit = (cbits >> a) & 1;
                coord[a] = cell.base[a] + bit;
                w *= bit ? cell.frac[a] : T(1) - cell.frac[a];
            }
            const std::uint32_t idx = hash_grid_index(coord, cfg.input_dim, cfg.table_size);
            const T* entry = tables.data() + level_off + static_cast<std::size_t>(idx) * fd;
            for (int f = 0; f < fd; ++f) out[l * fd + f] += w * entry[f];
        }
    }
}

// Hash-encoded (p, t) -> central attenuation, two-layer MLP (hidden 64, ReLU
// throughout, nonnegative output).
template <typename T>
struct DnafModel {
    static constexpr int kHidden = 64;

    HashEncodingConfig cfg3 = HashEncodingConfig::paper_3d();
    HashEncodingConfig cfg4 = HashEncodingConfig::paper_4d();
    std::vector<T> tables3;
    std::vector<T> tables4;
    std::vector<T> w1;  // kHidden x input_dim, row-major
    std::vector<T> b1;  // kHidden
    std::vector<T> w2;  // 1 x kHidden
    T b2 = T(0);
    Vec3<double> box_min{-64.0, -64.0, -64.0};
    Vec3<double> box_max{64.0, 64.0, 64.0};

    int feature_count() const { return cfg3.output_dim() + cfg4.output_dim(); }

    void initialize(std::uint64_t seed) {
        cfg3.validate();
        cfg4.validate();
        if (cfg3.input_dim != 3 || cfg4.input_dim != 4)
            throw std::invalid_argument("DnafModel: cfg3 must be 3D, cfg4 must be 4D");
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> table_init(-1e-4, 1e-4);
        tables3.resize(cfg3.parameter_count());
        for (auto& v : tables3) v = static_cast<T>(table_init(rng));
        tables4.resize(cfg4.parameter_count());
        for (auto& v : tables4) v = static_cast<T>(table_init(rng));
        const int in = feature_count();
        const double lim1 = std::sqrt(6.0 / in);
        std::uniform_real_distribution<double> w1_init(-lim1, lim1);
        w1.resize(static_cast<std::size_t>(kHidden) * in);
        for (auto& v : w1) v = static_cast<T>(w1_init(rng));
        b1.assign(kHidden, T(0));
        const double lim2 = std::sqrt(6.0 / kHidden);
        std::uniform_real_distribution<double> w2_init(-lim2, lim2);
        w2.resize(kHidden);
        for (auto& v : w2) v = static_cast<T>(w2_init(rng));
        b2 = T(0);
    }

    template <typename U>
    DnafModel<U> cast() const {
        DnafModel<U> out;
        out.cfg3 = cfg3;
        out.cfg4 = cfg4;
        out.tables3.assign(tables3.begin(), tables3.end());
        out.tables4.assign(tables4.begin(), tables4.end());
        out.w1.assign(w1.begin(), w1.end());
        out.b1.assign(b1.begin(), b1.end());
        out.w2.assign(w2.begin(), w2.end());
        out.b2 = static_cast<U>(b2);
        out.box_min = box_min;
        out.box_max = box_max;
        return out;
    }
};

// Retained activations for the manual backward pass.
template <typename T>
struct DnafForwardState {
    std::vector<T> u;         // per sample: normalized (x, y, z, t)
    std::vector<std::uint8_t> inside;  // per sample per spatial axis: not clamped
    std::vector<T> features;  // per sample: feature_count()
    std::vector<T> hidden;    // per sample: kHidden, post-ReLU
    std::vector<T> preact_out;
    std::size_t count = 0;
};

template <typename T>
void dnaf_normalize(const DnafModel<T>& model, const Vec3<T>& p, T t, T u[4],
                    std::uint8_t inside[3]) {
    const Vec3<double> lo = model.box_min, hi = model.box_max;
    const T pv[3] = {p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(static_cast<double>(pv[a])))
            throw std::invalid_argument("dnaf_forward: non-finite position");
        const T raw = (pv[a] - T(lo[a])) / T(hi[a] - lo[a]);
        inside[a] = raw > T(0) && raw < T(1);
        u[a] = std::min(std::max(raw, T(0)), T(1));
    }
    u[3] = std::min(std::max(t, T(0)), T(1));
}

template <typename T>
T dnaf_forward_one(const DnafModel<T>& model, const Vec3<T>& p, T t,
                   DnafForwardState<T>* state = nullptr) {
    const int in = model.feature_count();
    T u[4];
    std::uint8_t inside[3];
    dnaf_normalize(model, p, t, u, inside);

    std::vector<T> feat(in);
    hash_encode(model.cfg3, model.tables3, u, feat.data());
    hash_encode(model.cfg4, model.tables4, u, feat.data() + model.cfg3.output_dim());

    std::vector<T> hidden(DnafModel<T>::kHidden);
    for (int h = 0; h < DnafModel<T>::kHidden; ++h) {
        T acc = model.b1[h];
        const T* row = model.w1.data() + static_cast<std::size_t>(h) * in;
        for (int f = 0; f < in; ++f) acc += row[f] * feat[f];
        hidden[h] = acc > T(0) ? acc : T(0);
    }
    T out = model.b2;
    for (int h = 0; h < DnafModel<T>::kHidden; ++h) out += model.w2[h] * hidden[h];

    if (state) {
        state->u.insert(state->u.end(), u, u + 4);
        state->inside.insert(state->inside.end(), inside, inside + 3);
        state->features.insert(state->features.end(), feat.begin(), feat.end());
        state->hidden.insert(state->hidden.end(), hidden.begin(), hidden.end());
        state->preact_out.push_back(out);
        ++state->count;
    }
    return out > T(0) ? out : T(0);
}

template <typename T>
struct DnafGradients {
    std::vector<T> tables3, tables4, w1, b1, w2;
    T b2 = T(0);
    std::vector<Vec3<T>> d_position;

    void resize_like(const DnafModel<T>& model, std::size_t samples) {
        tables3.assign(model.tables3.size(), T(0));
        tables4.assign(model.tables4.size(), T(0));
        w1.assign(model.w1.size(), T(0));
        b1.assign(model.b1.size(), T(0));
        w2.assign(model.w2.size(), T(0));
        b2 = T(0);
        d_position.assign(samples, Vec3<T>{});
    }
};

namespace detail {

// Scatter upstream feature gradients into one encoding's tables and add the
// interpolation-weight derivative contribution to the spatial gradient.
template <typename T>
void hash_encode_backward(const HashEncodingConfig& cfg, const std::vector<T>& tables,
                          const T u[4], const T* dfeat, std::vector<T>& dtables,
                          T du[4]) {
    const int fd = cfg.feature_dim;
    const int corners = 1 << cfg.input_dim;
    for (int l = 0; l < cfg.levels; ++l) {
        const auto cell = level_cell(cfg, l, u);
        const std::size_t level_off = static_cast<std::size_t>(l) * cfg.table_size * fd;
        for (int cbits = 0; cbits < corners; ++cbits) {
            T w = T(1);
            std::uint32_t coord[4] = {};
            T axis_w[4];
            for (int a = 0; a < cfg.input_dim; ++a) {
                const int bit = (cbits >> a) & 1;
                coord[a] = cell.base[a] + bit;
                axis_w[a] = bit ? cell.frac[a] : T(1) - cell.frac[a];
                w *= axis_w[a];
            }
            const std::uint32_t idx = hash_grid_index(coord, cfg.input_dim, cfg.table_size);
            const std::size_t entry = level_off + static_cast<std::size_t>(idx) * fd;
            T dot = T(0);
            for (int f = 0; f < fd; ++f) {
                dtables[entry + f] += w * dfeat[l * fd + f];
                dot += tables[entry + f] * dfeat[l * fd + f];
            }
            // d w / d u_a = sign * scale * prod of the other axes' weights
            for (int a = 0; a < cfg.input_dim; ++a) {
                T others = T(1);
                for (int o = 0; o < cfg.input_dim; ++o)
                    if (o != a) others *= axis_w[o];
                const T sign = ((cbits >> a) & 1) ? T(1) : T(-1);
                du[a] += dot * sign * cell.scale * others;
            }
        }
    }
}

}  // namespace detail

// Exact adjoint of dnaf_forward_one over a retained batch. upstream holds
// dL/drho per sample; ReLU subgradient at 0 is 0. Table gradients are
// accumulated in fixed batch order.
template <typename T>
void dnaf_backward(const DnafModel<T>& model, const DnafForwardState<T>& state,
                   const std::vector<T>& upstream, DnafGradients<T>& grads) {
    if (state.count == 0 && !upstream.empty())
        throw std::invalid_argument("dnaf_backward: missing forward state");
    if (upstream.size() != state.count)
        throw std::invalid_argument("dnaf_backward: upstream size mismatch");
    const int in = model.feature_count();
    const int H = DnafModel<T>::kHidden;
    grads.resize_like(model, state.count);

    std::vector<T> dfeat(in);
    for (std::size_t s = 0; s < state.count; ++s) {
        const T up = upstream[s];
        if (up == T(0)) continue;
        const T* u = state.u.data() + 4 * s;
        const std::uint8_t* inside = state.inside.data() + 3 * s;
        const T* feat = state.features.data() + static_cast<std::size_t>(s) * in;
        const T* hidden = state.hidden.data() + static_cast<std::size_t>(s) * H;
        if (state.preact_out[s] <= T(0)) continue;  // output ReLU clipped

        grads.b2 += up;
        std::fill(dfeat.begin(), dfeat.end(), T(0));
        for (int h = 0; h < H; ++h) {
            grads.w2[h] += up * hidden[h];
            if (hidden[h] <= T(0)) continue;
            const T dh = up * model.w2[h];
            grads.b1[h] += dh;
            const T* row = model.w1.data() + static_cast<std::size_t>(h) * in;
            T* grow = grads.w1.data() + static_cast<std::size_t>(h) * in;
            for (int f = 0; f < in; ++f) {
                grow[f] += dh * feat[f];
                dfeat[f] += dh * row[f];
            }
        }

        T du[4] = {T(0), T(0), T(0), T(0)};
        detail::hash_encode_backward(model.cfg3, model.tables3, u, dfeat.data(),
                                     grads.tables3, du);
        detail::hash_encode_backward(model.cfg4, model.tables4, u,
                                     dfeat.data() + model.cfg3.output_dim(),
                                     grads.tables4, du);
        Vec3<T> dp{};
        for (int a = 0; a < 3; ++a) {
            if (!inside[a]) continue;  // clamped coordinate: zero gradient
            dp[a] = du[a] / T(model.box_max[a] - model.box_min[a]);
        }
        grads.d_position[s] = dp;
    }
}

}  // namespace rgs
