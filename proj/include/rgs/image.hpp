#pragma once

#include <stdexcept>
#include <vector>

namespace rgs {

template <typename T>
struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<T> values;  // row-major

    Image() = default;
    Image(int r, int c, T fill = T(0)) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

    T& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return values.size(); }

    bool same_shape(const Image& o) const { return rows == o.rows && cols == o.cols; }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(rows, cols);
        for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
        return out;
    }
};

}  // namespace rgs
