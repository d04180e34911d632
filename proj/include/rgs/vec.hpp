#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace rgs {

template <typename T>
struct Vec3 {
    T x{}, y{}, z{};

    T& operator[](std::size_t i) { return (&x)[i]; }
    const T& operator[](std::size_t i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3 operator-() const { return {-x, -y, -z}; }

    T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    T norm2() const { return dot(*this); }
    T norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const { return *this / norm(); }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }

    template <typename U>
    Vec3<U> cast() const { return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)}; }
};

template <typename T>
Vec3<T> operator*(T s, const Vec3<T>& v) { return v * s; }

template <typename T>
struct Vec4 {
    T w{}, x{}, y{}, z{};

    T& operator[](std::size_t i) { return (&w)[i]; }
    const T& operator[](std::size_t i) const { return (&w)[i]; }

    Vec4 operator+(const Vec4& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
    Vec4 operator-(const Vec4& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
    Vec4 operator*(T s) const { return {w * s, x * s, y * s, z * s}; }
    Vec4 operator/(T s) const { return {w / s, x / s, y / s, z / s}; }

    T dot(const Vec4& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    T norm2() const { return dot(*this); }
    T norm() const { return std::sqrt(norm2()); }

    template <typename U>
    Vec4<U> cast() const {
        return {static_cast<U>(w), static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)};
    }
};

// Row-major 3x3 matrix, just enough for covariance algebra.
template <typename T>
struct Mat3 {
    std::array<T, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {T(1), 0, 0, 0, T(1), 0, 0, 0, T(1)};
        return r;
    }
    static Mat3 zero() { return Mat3{}; }

    T& operator()(int r, int c) { return m[3 * r + c]; }
    const T& operator()(int r, int c) const { return m[3 * r + c]; }

    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }
    Mat3 operator-(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
        return r;
    }
    Mat3 operator*(T s) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
        return r;
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                T s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Vec3<T> operator*(const Vec3<T>& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    T trace() const { return m[0] + m[4] + m[8]; }

    template <typename U>
    Mat3<U> cast() const {
        Mat3<U> r;
        for (int i = 0; i < 9; ++i) r.m[i] = static_cast<U>(m[i]);
        return r;
    }
};

// a * b^T
template <typename T>
Mat3<T> outer(const Vec3<T>& a, const Vec3<T>& b) {
    Mat3<T> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = a[i] * b[j];
    return r;
}

}  // namespace rgs
