#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nml {

// Dense row-major matrix of doubles. Everything in this library is 2-d:
// batches are rows, features are columns, scalars are 1x1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols) throw std::invalid_argument("tensor: data length != rows*cols");
    }

    std::size_t size() const { return rows * cols; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline Tensor scalar_tensor(double v) { return Tensor(1, 1, {v}); }

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nml
