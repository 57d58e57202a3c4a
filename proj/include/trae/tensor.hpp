#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trae/error.hpp"

namespace trae {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles. The last axis is contiguous.
///
/// A default-constructed tensor is empty (rank 0, no elements) and only serves
/// as a placeholder; every constructed tensor has rank >= 1 and no zero dims.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* raw() noexcept { return data_.data(); }
    const double* raw() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    /// Same data, new shape; the element count must not change.
    Tensor reshaped(Shape shape) const;

    /// Contiguous sub-block along axis 0 (e.g. one channel of a [C,H,W] tensor).
    Tensor slice0(std::size_t index) const;
    void set_slice0(std::size_t index, const Tensor& block);

    void fill(double value);

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

inline Tensor tensor_new(Shape shape, double fill) { return Tensor(std::move(shape), fill); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

template <typename F>
Tensor elementwise_zip(const Tensor& a, const Tensor& b, F f) {
    require_same_shape(a, b, "elementwise_zip");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

template <typename F>
Tensor elementwise_map(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

double reduce_sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);

/// a += scale * b
void axpy(Tensor& a, const Tensor& b, double scale = 1.0);

}  // namespace trae
