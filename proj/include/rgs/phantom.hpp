#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rgs/dataset.hpp"
#include "rgs/geometry.hpp"
#include "rgs/vec.hpp"
#include "rgs/volume.hpp"

namespace rgs {

// One vessel branch: a cubic Bezier centerline with linearly interpolated
// radius and a contrast arrival time.
struct BezierSegment {
    Vec3<double> p0, p1, p2, p3;  // control points, mm
    double radius_start = 2.0;    // mm
    double radius_end = 2.0;      // mm
    double peak_attenuation = 0.05;  // mm^-1 once contrast has arrived
    double arrival_time = 0.0;       // normalized, in [0, 1]
};

struct TissueEllipsoid {
    Vec3<double> center;
    Vec3<double> semi_axes;  // mm
    double attenuation = 0.01;  // mm^-1, smooth quadratic falloff to the surface
};

struct VesselPhantom {
    std::vector<BezierSegment> segments;
    std::vector<TissueEllipsoid> background;
    double scene_radius = 90.0;  // bounding sphere for ray clipping, mm

    void validate() const;
};

// Branching 7-segment tree with staggered arrivals 0.0 / 0.25 / 0.5 inside a
// 128 mm cube, plus one tissue ellipsoid.
VesselPhantom default_phantom();

// Point evaluator with precomputed per-segment polylines for fast distance
// queries. Immutable after construction; safe to share across threads.
class PhantomField {
public:
    explicit PhantomField(const VesselPhantom& phantom, int polyline_steps = 128);

    // Dynamic contrast attenuation at (x, t).
    double vessel(const Vec3<double>& x, double t) const;
    // Static background tissue attenuation.
    double tissue(const Vec3<double>& x) const;

    const VesselPhantom& phantom() const { return phantom_; }

private:
    struct SegmentCache {
        std::vector<Vec3<double>> points;  // polyline samples
        std::vector<double> radii;         // radius at each sample
        Vec3<double> box_min, box_max;     // AABB inflated by 1.5 * max radius
        double peak;
        double arrival;
    };
    VesselPhantom phantom_;
    std::vector<SegmentCache> cache_;
};

// Cubic-smoothstep bolus: 0 before arrival, ramps to 1 over 0.1 time units.
double bolus_factor(double t, double arrival);

// Composite midpoint quadrature of an arbitrary attenuation field along a
// bounded ray; the independent ground truth for the rasterizer.
double oracle_project(const std::function<double(const Vec3<double>&, double)>& field,
                      const Ray& ray, double t, double step);

struct SynthesisConfig {
    double source_intensity = 1.0e5;  // I0, photons per pixel
    bool poisson_noise = false;
    std::uint64_t seed = 0;
    double quadrature_step = 0.5;  // mm; default set to 1/4 voxel by callers
};

// Mask/fill simulation and logarithmic subtraction, one DSA image per frame.
ProjectionDataset synthesize_dsa_dataset(const VesselPhantom& phantom,
                                         const ScanGeometry& geometry,
                                         const SynthesisConfig& config);

// Ground-truth vessel volume at full opacification (t = 1).
AttenuationVolume phantom_ground_truth(const VesselPhantom& phantom,
                                       const std::array<int, 3>& dims,
                                       const Vec3<double>& spacing,
                                       const Vec3<double>& origin);

}  // namespace rgs
