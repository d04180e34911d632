#include <doctest.h>

#include <cmath>
#include <random>

#include "rgs/kernels.hpp"

using namespace rgs;

namespace {

double sigmoid_oracle(double v) { return 1.0 / (1.0 + std::exp(-v)); }

RawKernelParams<double> random_raw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-50.0, 50.0);
    std::uniform_real_distribution<double> rot(-1.0, 1.0);
    std::uniform_real_distribution<double> sc(-3.0, 3.0);
    RawKernelParams<double> r;
    r.position = {pos(rng), pos(rng), pos(rng)};
    do {
        r.rotation = {rot(rng), rot(rng), rot(rng), rot(rng)};
    } while (r.rotation.norm() < 0.1);
    r.scale = {sc(rng), sc(rng), sc(rng)};
    return r;
}

// Cholesky factorization attempt; returns false when not SPD.
bool cholesky_ok(const Mat3<double>& a) {
    Mat3<double> l = Mat3<double>::zero();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) return false;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return true;
}

}  // namespace

TEST_CASE("activate_scale midpoint and bounds") {
    ScaleBounds b{0.1, 10.0};
    const Vec3<double> mid = activate_scale(Vec3<double>{0, 0, 0}, b);
    CHECK(mid.x == doctest::Approx(5.05).epsilon(1e-12));
    CHECK(mid.y == doctest::Approx(5.05).epsilon(1e-12));
    CHECK(mid.z == doctest::Approx(5.05).epsilon(1e-12));

    // Large raw values approach but never attain the bounds.
    const Vec3<double> hi = activate_scale(Vec3<double>{50, 50, 50}, b);
    CHECK(hi.x < 10.0);
    CHECK(hi.x > 9.999);
}

TEST_CASE("activate_scale matches a scalar sigmoid oracle") {
    ScaleBounds b{0.1, 10.0};
    const Vec3<double> raw{1.0, -1.0, 2.0};
    const Vec3<double> s = activate_scale(raw, b);
    for (int i = 0; i < 3; ++i) {
        const double expect = (10.0 - 0.1) * sigmoid_oracle(raw[i]) + 0.1;
        CHECK(s[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("activate_scale strictly bounded for random raws") {
    ScaleBounds b{0.2, 20.0};
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-100.0, 100.0);
    for (int i = 0; i < 20000; ++i) {
        const Vec3<double> s = activate_scale(Vec3<double>{dist(rng), dist(rng), dist(rng)}, b);
        for (int a = 0; a < 3; ++a) {
            CHECK(s[a] > b.s_min);
            CHECK(s[a] < b.s_max);
        }
    }
}

TEST_CASE("activate_scale derivative matches central differences") {
    ScaleBounds b{0.2, 20.0};
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    const double h = 1e-6;
    for (int i = 0; i < 200; ++i) {
        const Vec3<double> raw{dist(rng), dist(rng), dist(rng)};
        const Vec3<double> d = activate_scale_derivative(raw, b);
        for (int a = 0; a < 3; ++a) {
            Vec3<double> rp = raw, rm = raw;
            rp[a] += h;
            rm[a] -= h;
            const double fd = (activate_scale(rp, b)[a] - activate_scale(rm, b)[a]) / (2 * h);
            CHECK(d[a] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("invert_scale_activation round trip") {
    ScaleBounds b{0.1, 10.0};
    CHECK(invert_scale_activation(Vec3<double>{5.05, 5.05, 5.05}, b).x ==
          doctest::Approx(0.0).epsilon(1e-9));

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(0.11, 9.99);
    for (int i = 0; i < 100; ++i) {
        const Vec3<double> s{dist(rng), dist(rng), dist(rng)};
        const Vec3<double> back = activate_scale(invert_scale_activation(s, b), b);
        for (int a = 0; a < 3; ++a)
            CHECK(back[a] == doctest::Approx(s[a]).epsilon(1e-9));
    }

    // Values at (or beyond) the bounds clamp to a finite raw value.
    const Vec3<double> raw = invert_scale_activation(Vec3<double>{0.1, 10.0, 50.0}, b);
    for (int a = 0; a < 3; ++a) CHECK(std::isfinite(raw[a]));

    const double nan = std::nan("");
    CHECK_THROWS_AS(invert_scale_activation(Vec3<double>{nan, 1.0, 1.0}, b),
                    std::invalid_argument);
}

TEST_CASE("quaternion_to_rotation canonical cases") {
    const Mat3<double> I = quaternion_to_rotation(Vec4<double>{1, 0, 0, 0});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(I(r, c) == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-15));

    const Mat3<double> X = quaternion_to_rotation(Vec4<double>{0, 1, 0, 0});
    CHECK(X(0, 0) == doctest::Approx(1.0));
    CHECK(X(1, 1) == doctest::Approx(-1.0));
    CHECK(X(2, 2) == doctest::Approx(-1.0));

    CHECK_THROWS_AS(quaternion_to_rotation(Vec4<double>{0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("quaternion_to_rotation orthonormal with unit determinant") {
    std::mt19937_64 rng(14);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Vec4<double> q{n(rng), n(rng), n(rng), n(rng)};
        if (q.norm() < 1e-6) continue;
        const Mat3<double> R = quaternion_to_rotation(q);
        const Mat3<double> RtR = R.transposed() * R;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(RtR(r, c) - (r == c ? 1.0 : 0.0)) < 1e-12);
        const double det = R(0, 0) * (R(1, 1) * R(2, 2) - R(1, 2) * R(2, 1)) -
                           R(0, 1) * (R(1, 0) * R(2, 2) - R(1, 2) * R(2, 0)) +
                           R(0, 2) * (R(1, 0) * R(2, 1) - R(1, 1) * R(2, 0));
        CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("activated kernel covariance is SPD with correct inverse") {
    ScaleBounds b{0.2, 20.0};
    std::mt19937_64 rng(15);
    for (int i = 0; i < 100; ++i) {
        const auto k = activate_kernel(random_raw(rng), b);
        CHECK(k.rotation.norm() == doctest::Approx(1.0).epsilon(1e-9));
        for (int a = 0; a < 3; ++a) {
            CHECK(k.scale[a] > b.s_min);
            CHECK(k.scale[a] < b.s_max);
        }
        CHECK(cholesky_ok(k.covariance));
        // Symmetry and precision * covariance = identity.
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(k.covariance(r, c) - k.covariance(c, r)) <=
                      1e-9 * std::abs(k.covariance(r, c)) + 1e-12);
        const Mat3<double> PI = k.precision * k.covariance;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(PI(r, c) - (r == c ? 1.0 : 0.0)) < 1e-9);
    }
}

TEST_CASE("kernel_response canonical values") {
    ScaleBounds b{0.1, 10.0};
    RawKernelParams<double> raw;
    raw.position = {1.0, -2.0, 3.0};
    raw.rotation = {1, 0, 0, 0};
    raw.scale = invert_scale_activation(Vec3<double>{1.0, 1.0, 1.0}, b);
    const auto k = activate_kernel(raw, b);

    CHECK(kernel_response(k, 3.2, k.position) == doctest::Approx(3.2).epsilon(1e-9));
    const Vec3<double> off = k.position + Vec3<double>{1.0, 0.0, 0.0};
    CHECK(kernel_response(k, 1.0, off) == doctest::Approx(std::exp(-0.5)).epsilon(1e-7));
    CHECK(kernel_response(k, 0.0, off) == 0.0);
}

TEST_CASE("field_attenuation sums and validates") {
    ScaleBounds b{0.2, 20.0};
    std::mt19937_64 rng(16);

    // Empty population.
    CHECK(field_attenuation<double>({}, {}, Vec3<double>{0, 0, 0}) == 0.0);

    // Additivity of identical kernels.
    const auto k = activate_kernel(random_raw(rng), b);
    const Vec3<double> x{1.0, 2.0, 3.0};
    CHECK(field_attenuation<double>({k, k}, {0.7, 0.7}, x) ==
          doctest::Approx(2.0 * kernel_response(k, 0.7, x)).epsilon(1e-15));

    // Naive per-kernel summation oracle and reorder invariance.
    std::vector<ActivatedKernel<double>> ks;
    std::vector<double> rho;
    for (int i = 0; i < 5; ++i) {
        ks.push_back(activate_kernel(random_raw(rng), b));
        rho.push_back(0.1 * (i + 1));
    }
    std::uniform_real_distribution<double> pos(-40.0, 40.0);
    for (int p = 0; p < 20; ++p) {
        const Vec3<double> pt{pos(rng), pos(rng), pos(rng)};
        double naive = 0.0;
        for (std::size_t i = 0; i < ks.size(); ++i) {
            const Vec3<double> d = pt - ks[i].position;
            naive += rho[i] * std::exp(-0.5 * d.dot(ks[i].precision * d));
        }
        const double got = field_attenuation(ks, rho, pt);
        CHECK(got == doctest::Approx(naive).epsilon(1e-12));
    }

    CHECK_THROWS_AS(field_attenuation(ks, {0.1}, x), std::invalid_argument);
}

TEST_CASE("KernelSet consistency bookkeeping") {
    KernelSet<float> ks;
    ks.resize(3);
    ks.check_consistent();
    ks.atten_sum.push_back(0.0);
    CHECK_THROWS_AS(ks.check_consistent(), std::logic_error);
}
