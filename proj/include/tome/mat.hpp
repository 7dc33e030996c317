#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tome/common.hpp"

namespace tome {

// Dense row-major matrix. Vectors are 1 x n.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, T(0)) {}
    Mat(int r, int c, std::vector<T> data) : rows(r), cols(c), a(std::move(data)) {
        assert(a.size() == static_cast<std::size_t>(r) * c);
    }

    std::size_t size() const { return a.size(); }
    T* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const T* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    T& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    T at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(a.begin(), a.end(), v); }

    bool finite() const {
        for (T v : a)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> out(rows, cols);
        for (std::size_t i = 0; i < a.size(); ++i) out.a[i] = static_cast<U>(a[i]);
        return out;
    }
};

template <typename T>
Mat<T> random_normal_mat(int rows, int cols, T stddev, Rng& rng) {
    Mat<T> m(rows, cols);
    for (auto& v : m.a) v = truncated_normal(rng, stddev);
    return m;
}

template <typename T>
T dot(const T* x, const T* y, int n) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace tome
