#pragma once

#include <cmath>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgs/vec.hpp"

namespace rgs {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

// Circular cone-beam trajectory in the z = 0 plane, isocenter at the origin,
// detector orthogonal to the central ray.
struct ScanGeometry {
    double source_to_object = 750.0;    // mm
    double source_to_detector = 1200.0; // mm
    int rows = 64;                      // detector H
    int cols = 64;                      // detector W
    double du = 2.0;                    // pixel width, mm
    double dv = 2.0;                    // pixel height, mm
    double angular_range = 198.0;       // degrees
    int frame_count = 133;              // T
    double angle0 = 0.0;                // starting angle, degrees
    int spin = +1;                      // +1 counterclockwise viewed from +z

    void validate() const;
};

struct FrameSpec {
    int index = 1;       // 1-based capture order j
    double angle = 0.0;  // degrees
    double timestamp = 1.0;  // t_j = j / T, in (0, 1]
};

struct Ray {
    Vec3<double> origin;
    Vec3<double> direction;  // unit
    double a_near = 0.0;
    double a_far = 0.0;      // a_near < a_far when bounded
};

// Uniformly spaced frames over the angular range; t_j = j / T.
std::vector<FrameSpec> frame_timestamps(const ScanGeometry& geom);

// Sparse training subset j_k = floor((k-1) * T / N) + 1, k = 1..N.
std::vector<int> subsample_views(int total, int n);

Vec3<double> source_position(const ScanGeometry& geom, double angle_deg);

// Detector basis at a frame angle: u along increasing column, v along
// increasing row (+z), both unit.
void detector_axes(const ScanGeometry& geom, double angle_deg,
                   Vec3<double>& u_axis, Vec3<double>& v_axis,
                   Vec3<double>& central);

// Ray through pixel (row, col) with subpixel offsets in [-0.5, 0.5].
// Unbounded (a_near = 0, a_far = +inf).
Ray pixel_ray(const ScanGeometry& geom, const FrameSpec& frame,
              int row, int col, double off_row = 0.0, double off_col = 0.0);

// Clip a ray to the sphere |x| <= radius. Returns false when it misses.
bool clip_to_sphere(Ray& ray, double radius);

// Geometry manifest, text key-value: sod sdd rows cols du dv arc_deg frames
// angle0 spin.
std::string geometry_to_manifest(const ScanGeometry& geom);
ScanGeometry geometry_from_manifest_text(const std::string& text);

}  // namespace rgs
