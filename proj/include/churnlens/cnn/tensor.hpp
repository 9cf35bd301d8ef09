#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "churnlens/error.hpp"

namespace churnlens::cnn {

/// Dense row-major double tensor.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_)) {
            throw Error(ErrorCode::ShapeMismatch, "data holds " + std::to_string(data_.size()) + " values for shape " +
                                                      shape_string());
        }
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Contiguous slice of the leading dimension.
    std::span<const double> row(std::size_t i) const {
        const std::size_t stride = data_.size() / shape_.front();
        return std::span<const double>(data_).subspan(i * stride, stride);
    }

    bool all_finite() const {
        for (const double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) s += (i ? "," : "") + std::to_string(shape_[i]);
        return s + ")";
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace churnlens::cnn
