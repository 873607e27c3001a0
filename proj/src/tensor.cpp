#include "tenrep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tenrep {

std::size_t shape_product(const Shape& shape)
{
    std::size_t n = 1;
    for (auto s : shape)
        n *= s;
    return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill)
{
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_product(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
}

Tensor Tensor::from(std::initializer_list<double> values)
{
    return from_vector(std::vector<double>(values));
}

Tensor Tensor::from_vector(std::vector<double> values)
{
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill)
{
    return Tensor({rows, cols}, fill);
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    return shape_[axis];
}

std::size_t Tensor::row_size() const
{
    if (shape_.empty() || shape_[0] == 0)
        return 0;
    return data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t r)
{
    const auto w = row_size();
    return std::span<double>(data_).subspan(r * w, w);
}

std::span<const double> Tensor::row(std::size_t r) const
{
    const auto w = row_size();
    return std::span<const double>(data_).subspan(r * w, w);
}

void Tensor::reshape(Shape shape)
{
    if (shape_product(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const
{
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
}

void Tensor::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(std::string_view what) const
{
    if (!all_finite())
        throw NumericError(std::string(what) + ": non-finite value encountered");
}

Tensor zeros_like(const Tensor& t)
{
    return Tensor(t.shape());
}

Tensor select_rows(const Tensor& t, std::span<const std::size_t> rows)
{
    Shape shape = t.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    const auto w = t.row_size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = t.row(rows[i]);
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a)
{
    double s = 0.0;
    for (double v : a)
        s += v * v;
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ShapeError("squared_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace tenrep
