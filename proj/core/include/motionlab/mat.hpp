#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace motionlab {

// Row-major dense matrix. Rows are tokens or samples, columns are features.
// Thin wrapper over a flat vector so tensors serialize and hash trivially;
// Eigen maps provide the arithmetic.
template <typename S>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<S> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, S(0)) {}
    Mat(int r, int c, S fill) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    size_t size() const { return data.size(); }
    S& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    S operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    S& at(size_t i) { return data[i]; }
    S at(size_t i) const { return data[i]; }

    using EigenMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstEigenMap =
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    EigenMap map() { return EigenMap(data.data(), rows, cols); }
    ConstEigenMap map() const { return ConstEigenMap(data.data(), rows, cols); }

    void set_zero() { std::fill(data.begin(), data.end(), S(0)); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    template <typename T>
    Mat<T> cast() const {
        Mat<T> out(rows, cols);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

}  // namespace motionlab
