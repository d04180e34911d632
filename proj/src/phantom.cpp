#include "rgs/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace rgs {

void VesselPhantom::validate() const {
    for (const auto& s : segments) {
        if (!(s.radius_start > 0.0) || !(s.radius_end > 0.0))
            throw std::invalid_argument("phantom: radii must be positive");
        if (s.arrival_time < 0.0 || s.arrival_time > 1.0)
            throw std::invalid_argument("phantom: arrival_time must lie in [0, 1]");
        if (s.peak_attenuation < 0.0)
            throw std::invalid_argument("phantom: peak attenuation must be >= 0");
    }
    if (!(scene_radius > 0.0))
        throw std::invalid_argument("phantom: scene radius must be positive");
}

static Vec3<double> bezier_point(const BezierSegment& s, double u) {
    const double v = 1.0 - u;
    return s.p0 * (v * v * v) + s.p1 * (3.0 * v * v * u) + s.p2 * (3.0 * v * u * u) +
           s.p3 * (u * u * u);
}

double bolus_factor(double t, double arrival) {
    const double u = (t - arrival) / 0.1;
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * (3.0 - 2.0 * u);
}

// 1 inside the radius, cubic-smoothstep down to 0 at 1.5x the radius.
static double radial_falloff(double dist, double radius) {
    if (dist <= radius) return 1.0;
    const double edge = 1.5 * radius;
    if (dist >= edge) return 0.0;
    const double u = (edge - dist) / (0.5 * radius);
    return u * u * (3.0 - 2.0 * u);
}

PhantomField::PhantomField(const VesselPhantom& phantom, int polyline_steps)
    : phantom_(phantom) {
    phantom_.validate();
    cache_.reserve(phantom_.segments.size());
    for (const auto& s : phantom_.segments) {
        SegmentCache c;
        c.points.resize(polyline_steps + 1);
        c.radii.resize(polyline_steps + 1);
        const double rmax = std::max(s.radius_start, s.radius_end);
        c.box_min = {std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
                     std::numeric_limits<double>::max()};
        c.box_max = {-c.box_min.x, -c.box_min.y, -c.box_min.z};
        for (int i = 0; i <= polyline_steps; ++i) {
            const double u = static_cast<double>(i) / polyline_steps;
            c.points[i] = bezier_point(s, u);
            c.radii[i] = s.radius_start + (s.radius_end - s.radius_start) * u;
            for (int a = 0; a < 3; ++a) {
                c.box_min[a] = std::min(c.box_min[a], c.points[i][a]);
                c.box_max[a] = std::max(c.box_max[a], c.points[i][a]);
            }
        }
        for (int a = 0; a < 3; ++a) {
            c.box_min[a] -= 1.5 * rmax;
            c.box_max[a] += 1.5 * rmax;
        }
        c.peak = s.peak_attenuation;
        c.arrival = s.arrival_time;
        cache_.push_back(std::move(c));
    }
}

double PhantomField::vessel(const Vec3<double>& x, double t) const {
    double total = 0.0;
    for (const auto& c : cache_) {
        const double b = bolus_factor(t, c.arrival);
        if (b <= 0.0 || c.peak <= 0.0) continue;
        if (x.x < c.box_min.x || x.x > c.box_max.x || x.y < c.box_min.y ||
            x.y > c.box_max.y || x.z < c.box_min.z || x.z > c.box_max.z)
            continue;
        // Nearest point on the polyline, tracking the radius at the foot.
        double best_d2 = std::numeric_limits<double>::max();
        double best_r = c.radii.front();
        for (std::size_t i = 0; i + 1 < c.points.size(); ++i) {
            const Vec3<double> a = c.points[i];
            const Vec3<double> ab = c.points[i + 1] - a;
            const double len2 = ab.norm2();
            double s = len2 > 0.0 ? (x - a).dot(ab) / len2 : 0.0;
            s = std::clamp(s, 0.0, 1.0);
            const Vec3<double> foot = a + ab * s;
            const double d2 = (x - foot).norm2();
            if (d2 < best_d2) {
                best_d2 = d2;
                best_r = c.radii[i] + (c.radii[i + 1] - c.radii[i]) * s;
            }
        }
        total += c.peak * radial_falloff(std::sqrt(best_d2), best_r) * b;
    }
    return total;
}

double PhantomField::tissue(const Vec3<double>& x) const {
    double total = 0.0;
    for (const auto& e : phantom_.background) {
        const Vec3<double> d = x - e.center;
        const double q = (d.x / e.semi_axes.x) * (d.x / e.semi_axes.x) +
                         (d.y / e.semi_axes.y) * (d.y / e.semi_axes.y) +
                         (d.z / e.semi_axes.z) * (d.z / e.semi_axes.z);
        if (q < 1.0) total += e.attenuation * (1.0 - q) * (1.0 - q);
    }
    return total;
}

VesselPhantom default_phantom() {
    VesselPhantom p;
    p.scene_radius = 90.0;
    auto seg = [](Vec3<double> a, Vec3<double> c1, Vec3<double> c2, Vec3<double> b,
                  double r0, double r1, double arrival) {
        BezierSegment s;
        s.p0 = a; s.p1 = c1; s.p2 = c2; s.p3 = b;
        s.radius_start = r0; s.radius_end = r1;
        s.peak_attenuation = 0.05;
        s.arrival_time = arrival;
        return s;
    };
    // Generation 1: trunk rising through the isocenter.
    p.segments.push_back(seg({0, 0, -32}, {2, 3, -22}, {-2, -3, -10}, {0, 0, 0},
                             4.0, 3.0, 0.0));
    // Generation 2: two daughters.
    p.segments.push_back(seg({0, 0, 0}, {6, 4, 6}, {12, 8, 12}, {18, 10, 18},
                             2.5, 2.0, 0.25));
    p.segments.push_back(seg({0, 0, 0}, {-6, 2, 6}, {-12, -2, 12}, {-16, -8, 18},
                             2.5, 2.0, 0.25));
    // Generation 3: four grand-daughters.
    p.segments.push_back(seg({18, 10, 18}, {22, 12, 22}, {26, 10, 26}, {28, 6, 30},
                             1.5, 1.0, 0.5));
    p.segments.push_back(seg({18, 10, 18}, {20, 14, 22}, {18, 18, 26}, {14, 20, 30},
                             1.5, 1.0, 0.5));
    p.segments.push_back(seg({-16, -8, 18}, {-20, -10, 22}, {-24, -8, 26}, {-26, -4, 30},
                             1.5, 1.0, 0.5));
    p.segments.push_back(seg({-16, -8, 18}, {-16, -12, 22}, {-14, -16, 26}, {-10, -18, 30},
                             1.5, 1.0, 0.5));
    p.background.push_back({{0, 0, 0}, {45, 45, 50}, 0.01});
    return p;
}

double oracle_project(const std::function<double(const Vec3<double>&, double)>& field,
                      const Ray& ray, double t, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("oracle_project: step must be > 0");
    if (!(ray.a_far > ray.a_near)) return 0.0;
    const double length = ray.a_far - ray.a_near;
    const int n = std::max(1, static_cast<int>(std::ceil(length / step)));
    const double h = length / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = ray.a_near + (i + 0.5) * h;
        const double v = field(ray.origin + a * ray.direction, t);
        if (!std::isfinite(v))
            throw std::runtime_error("oracle_project: non-finite field value");
        sum += v;
    }
    return sum * h;
}

ProjectionDataset synthesize_dsa_dataset(const VesselPhantom& phantom,
                                         const ScanGeometry& geometry,
                                         const SynthesisConfig& config) {
    if (!(config.source_intensity > 0.0))
        throw std::invalid_argument("synthesize_dsa_dataset: I0 must be > 0");
    geometry.validate();
    PhantomField field(phantom);

    ProjectionDataset ds;
    ds.geometry = geometry;
    ds.frames = frame_timestamps(geometry);
    ds.images.reserve(ds.frames.size());

    std::mt19937_64 rng(config.seed);
    const double I0 = config.source_intensity;

    for (const auto& frame : ds.frames) {
        Image<float> img(geometry.rows, geometry.cols);
        for (int r = 0; r < geometry.rows; ++r) {
            for (int c = 0; c < geometry.cols; ++c) {
                Ray ray = pixel_ray(geometry, frame, r, c);
                double line_tissue = 0.0, line_vessel = 0.0;
                if (clip_to_sphere(ray, phantom.scene_radius)) {
                    const double length = ray.a_far - ray.a_near;
                    const int n = std::max(
                        1, static_cast<int>(std::ceil(length / config.quadrature_step)));
                    const double h = length / n;
                    for (int i = 0; i < n; ++i) {
                        const double a = ray.a_near + (i + 0.5) * h;
                        const Vec3<double> x = ray.origin + a * ray.direction;
                        line_tissue += field.tissue(x);
                        line_vessel += field.vessel(x, frame.timestamp);
                    }
                    line_tissue *= h;
                    line_vessel *= h;
                }
                double mask = I0 * std::exp(-line_tissue);
                double fill = I0 * std::exp(-(line_tissue + line_vessel));
                if (config.poisson_noise) {
                    mask = std::poisson_distribution<long long>(mask)(rng);
                    fill = std::poisson_distribution<long long>(fill)(rng);
                    mask = std::max(mask, 1.0);
                    fill = std::max(fill, 1.0);
                }
                const double dsa = std::log(mask) - std::log(fill);
                img.at(r, c) = static_cast<float>(std::max(dsa, 0.0));
            }
        }
        ds.images.push_back(std::move(img));
    }
    return ds;
}

AttenuationVolume phantom_ground_truth(const VesselPhantom& phantom,
                                       const std::array<int, 3>& dims,
                                       const Vec3<double>& spacing,
                                       const Vec3<double>& origin) {
    PhantomField field(phantom);
    AttenuationVolume vol;
    vol.dims = dims;
    vol.spacing = spacing;
    vol.origin = origin;
    vol.allocate();
    for (int iz = 0; iz < dims[2]; ++iz)
        for (int iy = 0; iy < dims[1]; ++iy)
            for (int ix = 0; ix < dims[0]; ++ix)
                vol.at(ix, iy, iz) =
                    static_cast<float>(field.vessel(vol.voxel_center(ix, iy, iz), 1.0));
    return vol;
}

}  // namespace rgs
