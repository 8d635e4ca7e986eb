#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "terranet/errors.hpp"

namespace terranet {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

/// Dense rectangular numeric array, flat row-major storage. The single
/// currency of the numeric core; float for training/inference, double for
/// gradient verification.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), T{0}) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (count(shape_) != data_.size()) {
            throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                                 std::to_string(data_.size()) + " values");
        }
    }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

/// NaN/Inf rejection at layer boundaries.
template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
    if (!t.all_finite()) {
        throw NumericError(std::string(where) + ": non-finite value in tensor " +
                           shape_string(t.shape()));
    }
}

} // namespace terranet
