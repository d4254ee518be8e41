#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prototsnet {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

// Dense row-major array of rank 0..3. Rank 0 is a scalar with one element.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor from(std::initializer_list<double> values);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int i) { return data_[index1(i)]; }
    double at(int i) const { return data_[index1(i)]; }
    double& at(int i, int j) { return data_[index2(i, j)]; }
    double at(int i, int j) const { return data_[index2(i, j)]; }
    double& at(int i, int j, int k) { return data_[index3(i, j, k)]; }
    double at(int i, int j, int k) const { return data_[index3(i, j, k)]; }

    double item() const;
    bool all_finite() const;
    void fill(double v);
    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor& other) const = default;

private:
    std::size_t index1(int i) const;
    std::size_t index2(int i, int j) const;
    std::size_t index3(int i, int j, int k) const;

    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_size(const Shape& shape);

}  // namespace prototsnet
