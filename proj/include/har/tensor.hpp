#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor of 64-bit floats. Rank is at most 3 in practice
// (batch, steps, channels); kept generic to avoid shape gymnastics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}
    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeMismatch("tensor data does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    // Same data, new shape; sizes must agree.
    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size())
            throw ShapeMismatch("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

// C[m,n] += A[m,k] * B[k,n]. The ikj order keeps B and C accesses
// sequential; this single kernel carries all dense/conv/recurrent math.
inline void gemm_acc(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T  (B stored row-major as n x k).
inline void gemm_bt_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]  (gradient accumulation for weights).
inline void gemm_at_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

} // namespace har::nn
