#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tenrep {

/// Raised when operand shapes or dimensions disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

/**
 * Dense row-major array of doubles.
 *
 * Vectors are rank 1, matrices rank 2 (rows x cols), image batches rank 4.
 * The first dimension doubles as the batch dimension for the network code.
 */
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor from(std::initializer_list<double> values);
    static Tensor from_vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t axis) const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-2 access
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Number of elements in one slice along the first axis.
    std::size_t row_size() const;
    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    void reshape(Shape shape);
    Tensor reshaped(Shape shape) const;
    void fill(double value);

    bool all_finite() const noexcept;
    /// Throws NumericError naming `what` if any entry is NaN or Inf.
    void require_finite(std::string_view what) const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor zeros_like(const Tensor& t);

/// Gathers the listed rows of a rank >= 2 tensor.
Tensor select_rows(const Tensor& t, std::span<const std::size_t> rows);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace tenrep
