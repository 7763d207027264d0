#include "kinlevy/types.hpp"

#include <cmath>

namespace kinlevy {

Vec::Vec(int dim, double fill) : dim_(dim)
{
    if (dim < 1 || dim > kMaxDim) {
        throw Error("types", "bad_dimension", "dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    }
    for (int i = 0; i < dim; ++i) c_[static_cast<std::size_t>(i)] = fill;
}

Vec::Vec(std::initializer_list<double> values) : dim_(static_cast<int>(values.size()))
{
    if (dim_ < 1 || dim_ > kMaxDim) {
        throw Error("types", "bad_dimension", "dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    }
    std::size_t i = 0;
    for (double v : values) c_[i++] = v;
}

double Vec::norm2() const noexcept
{
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += (*this)[i] * (*this)[i];
    return s;
}

double Vec::norm() const noexcept
{
    if (dim_ == 1) return std::abs(c_[0]);
    return std::sqrt(norm2());
}

double Vec::dot(const Vec& o) const noexcept
{
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += (*this)[i] * o[i];
    return s;
}

Vec& Vec::operator+=(const Vec& o) noexcept
{
    for (int i = 0; i < dim_; ++i) (*this)[i] += o[i];
    return *this;
}

Vec& Vec::operator-=(const Vec& o) noexcept
{
    for (int i = 0; i < dim_; ++i) (*this)[i] -= o[i];
    return *this;
}

Vec& Vec::operator*=(double s) noexcept
{
    for (int i = 0; i < dim_; ++i) (*this)[i] *= s;
    return *this;
}

bool operator==(const Vec& a, const Vec& b) noexcept
{
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

double phase_norm(const State& s) noexcept
{
    return std::sqrt(s.x.norm2() + s.v.norm2());
}

Error::Error(std::string module, std::string code, const std::string& message)
    : std::runtime_error(module + ": " + message), module_(std::move(module)), code_(std::move(code))
{
}

}  // namespace kinlevy
