#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prectime {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. Every extent is positive and the element
// count always equals the product of the extents. A default-constructed
// tensor is "unset" (rank 0, no data) and is rejected by every operation.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    // 1-D convenience: Tensor::vector({1, 2, 3}) has shape [3].
    static Tensor vector(std::initializer_list<double> values);
    // 2-D convenience, rows must be equally long.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor scalar(double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    // Same data under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;
    // Throws NumericError naming `what` when a NaN or Inf is present.
    void require_finite(std::string_view what) const;

    void fill(double value);

    // Exact (bitwise on values) equality of shape and data.
    bool operator==(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace prectime
