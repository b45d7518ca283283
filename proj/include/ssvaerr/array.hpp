#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ssvaerr/errors.hpp"

namespace ssvaerr::diff {

// Dense row-major fp64 tensor. Plain value type; ops live on the Tape.
class Array {
public:
    Array() = default;

    explicit Array(std::vector<int> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Array(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check(count(shape_) == static_cast<std::int64_t>(data_.size()),
              "Array: shape does not match data length");
    }

    static Array scalar(double v) { return Array({1}, {v}); }

    static Array full(std::vector<int> shape, double v) {
        Array a(std::move(shape));
        for (double& x : a.data_) x = v;
        return a;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Array& o) const { return shape_ == o.shape_; }

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            check(d >= 0, "Array: negative dimension");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace ssvaerr::diff
