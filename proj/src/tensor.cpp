#include "prototsnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prototsnet {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    if (shape_.size() > 3) throw ShapeError("tensor rank above 3: " + shape_string(shape_));
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.size() > 3) throw ShapeError("tensor rank above 3: " + shape_string(shape_));
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor(Shape{static_cast<int>(values.size())}, std::vector<double>(values));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

std::size_t Tensor::index1(int i) const { return static_cast<std::size_t>(i); }

std::size_t Tensor::index2(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(j);
}

std::size_t Tensor::index3(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(shape_[2]) +
           static_cast<std::size_t>(k);
}

}  // namespace prototsnet
