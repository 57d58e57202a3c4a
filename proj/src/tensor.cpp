#include "trae/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace trae {

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw Error(ErrorKind::InvalidShape, "shape has no dimensions");
    for (std::size_t d : shape) {
        if (d == 0) throw Error(ErrorKind::InvalidShape, "zero dimension in " + shape_str(shape));
    }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw Error(ErrorKind::InvalidShape, "data length " + std::to_string(data_.size()) +
                                                 " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    validate_shape(shape);
    if (shape_size(shape) != size()) {
        throw Error(ErrorKind::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice0(std::size_t index) const {
    if (rank() < 2 || index >= shape_[0]) throw Error(ErrorKind::ShapeMismatch, "slice0 out of range");
    Shape sub(shape_.begin() + 1, shape_.end());
    const std::size_t block = shape_size(sub);
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * block);
    return Tensor(std::move(sub), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(block)));
}

void Tensor::set_slice0(std::size_t index, const Tensor& block) {
    if (rank() < 2 || index >= shape_[0]) throw Error(ErrorKind::ShapeMismatch, "set_slice0 out of range");
    if (!std::equal(shape_.begin() + 1, shape_.end(), block.shape().begin(), block.shape().end())) {
        throw Error(ErrorKind::ShapeMismatch, "set_slice0 block shape " + shape_str(block.shape()));
    }
    std::copy(block.data().begin(), block.data().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(index * block.size()));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorKind::ShapeMismatch,
                    std::string(where) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

double reduce_sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

void axpy(Tensor& a, const Tensor& b, double scale) {
    require_same_shape(a, b, "axpy");
    double* pa = a.raw();
    const double* pb = b.raw();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += scale * pb[i];
}

}  // namespace trae
