#include "rgs/geometry.hpp"

#include <limits>
#include <map>
#include <sstream>

namespace rgs {

void ScanGeometry::validate() const {
    if (!(source_to_detector > source_to_object) || !(source_to_object > 0.0))
        throw std::invalid_argument("geometry: require sdd > sod > 0");
    if (rows < 1 || cols < 1 || frame_count < 1)
        throw std::invalid_argument("geometry: rows, cols, frames must be >= 1");
    if (!(du > 0.0) || !(dv > 0.0))
        throw std::invalid_argument("geometry: pixel size must be positive");
    if (!(angular_range > 0.0) || angular_range > 360.0)
        throw std::invalid_argument("geometry: arc must lie in (0, 360]");
    if (spin != 1 && spin != -1)
        throw std::invalid_argument("geometry: spin must be +1 or -1");
}

std::vector<FrameSpec> frame_timestamps(const ScanGeometry& geom) {
    geom.validate();
    const int T = geom.frame_count;
    const double step = T > 1 ? geom.angular_range / (T - 1) : 0.0;
    std::vector<FrameSpec> frames(T);
    for (int j = 1; j <= T; ++j) {
        frames[j - 1].index = j;
        frames[j - 1].angle = geom.angle0 + (j - 1) * step;
        frames[j - 1].timestamp = static_cast<double>(j) / T;
    }
    return frames;
}

std::vector<int> subsample_views(int total, int n) {
    if (total < 1) throw std::invalid_argument("subsample_views: T must be >= 1");
    if (n < 1 || n > total)
        throw std::invalid_argument("subsample_views: require 1 <= N <= T");
    std::vector<int> idx(n);
    for (int k = 1; k <= n; ++k)
        idx[k - 1] = static_cast<int>((static_cast<long long>(k - 1) * total) / n) + 1;
    return idx;
}

Vec3<double> source_position(const ScanGeometry& geom, double angle_deg) {
    const double a = deg2rad(angle_deg) * geom.spin;
    return {geom.source_to_object * std::cos(a), geom.source_to_object * std::sin(a), 0.0};
}

void detector_axes(const ScanGeometry& geom, double angle_deg,
                   Vec3<double>& u_axis, Vec3<double>& v_axis, Vec3<double>& central) {
    const double a = deg2rad(angle_deg) * geom.spin;
    central = {-std::cos(a), -std::sin(a), 0.0};   // source -> isocenter
    u_axis = {-std::sin(a), std::cos(a), 0.0};
    v_axis = {0.0, 0.0, 1.0};
}

Ray pixel_ray(const ScanGeometry& geom, const FrameSpec& frame,
              int row, int col, double off_row, double off_col) {
    if (row < 0 || row >= geom.rows || col < 0 || col >= geom.cols)
        throw std::out_of_range("pixel_ray: pixel outside the detector");
    Vec3<double> u_axis, v_axis, central;
    detector_axes(geom, frame.angle, u_axis, v_axis, central);
    const Vec3<double> src = source_position(geom, frame.angle);
    const Vec3<double> det_center = src + geom.source_to_detector * central;
    const double u = (col + 0.5 + off_col - 0.5 * geom.cols) * geom.du;
    const double v = (row + 0.5 + off_row - 0.5 * geom.rows) * geom.dv;
    const Vec3<double> target = det_center + u * u_axis + v * v_axis;
    Ray ray;
    ray.origin = src;
    ray.direction = (target - src).normalized();
    ray.a_near = 0.0;
    ray.a_far = std::numeric_limits<double>::infinity();
    return ray;
}

bool clip_to_sphere(Ray& ray, double radius) {
    // |o + a d|^2 = r^2 with |d| = 1
    const double b = ray.origin.dot(ray.direction);
    const double c = ray.origin.norm2() - radius * radius;
    const double disc = b * b - c;
    if (disc <= 0.0) return false;
    const double s = std::sqrt(disc);
    ray.a_near = std::max(-b - s, 0.0);
    ray.a_far = -b + s;
    return ray.a_far > ray.a_near;
}

std::string geometry_to_manifest(const ScanGeometry& geom) {
    std::ostringstream os;
    os.precision(17);
    os << "sod " << geom.source_to_object << "\n"
       << "sdd " << geom.source_to_detector << "\n"
       << "rows " << geom.rows << "\n"
       << "cols " << geom.cols << "\n"
       << "du " << geom.du << "\n"
       << "dv " << geom.dv << "\n"
       << "arc_deg " << geom.angular_range << "\n"
       << "frames " << geom.frame_count << "\n"
       << "angle0 " << geom.angle0 << "\n"
       << "spin " << geom.spin << "\n";
    return os.str();
}

ScanGeometry geometry_from_manifest_text(const std::string& text) {
    ScanGeometry g;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') continue;
        if (key == "frame") continue;  // per-frame dataset lines share the file
        double val;
        if (!(ls >> val))
            throw std::runtime_error("manifest: missing value for key '" + key + "'");
        if (key == "sod") g.source_to_object = val;
        else if (key == "sdd") g.source_to_detector = val;
        else if (key == "rows") g.rows = static_cast<int>(val);
        else if (key == "cols") g.cols = static_cast<int>(val);
        else if (key == "du") g.du = val;
        else if (key == "dv") g.dv = val;
        else if (key == "arc_deg") g.angular_range = val;
        else if (key == "frames") g.frame_count = static_cast<int>(val);
        else if (key == "angle0") g.angle0 = val;
        else if (key == "spin") g.spin = static_cast<int>(val);
        else throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
    g.validate();
    return g;
}

}  // namespace rgs
