#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace kinlevy {

/// Largest spatial dimension supported by the fixed-capacity vectors.
inline constexpr int kMaxDim = 3;

/// Fixed-capacity vector used for positions, velocities and jump sizes.
/// Kept allocation free so the inner simulation loops stay cheap.
class Vec {
public:
    Vec() = default;
    explicit Vec(int dim, double fill = 0.0);
    Vec(std::initializer_list<double> values);

    int dim() const noexcept { return dim_; }
    double& operator[](int i) noexcept { return c_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const noexcept { return c_[static_cast<std::size_t>(i)]; }

    double norm() const noexcept;
    double norm2() const noexcept;
    double dot(const Vec& o) const noexcept;

    Vec& operator+=(const Vec& o) noexcept;
    Vec& operator-=(const Vec& o) noexcept;
    Vec& operator*=(double s) noexcept;

    friend Vec operator+(Vec a, const Vec& b) noexcept { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) noexcept { return a -= b; }
    friend Vec operator*(Vec a, double s) noexcept { return a *= s; }
    friend Vec operator*(double s, Vec a) noexcept { return a *= s; }
    friend bool operator==(const Vec& a, const Vec& b) noexcept;

private:
    std::array<double, kMaxDim> c_{};
    int dim_ = 0;
};

/// Phase-space point (x, v).
struct State {
    Vec x;
    Vec v;
};

/// Euclidean norm of (x, v) in R^{2d}.
double phase_norm(const State& s) noexcept;

/// Error raised for invalid inputs and unrecoverable numerical conditions.
/// `module` names the component, `code` is a short machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string code, const std::string& message);
    const std::string& module() const noexcept { return module_; }
    const std::string& code() const noexcept { return code_; }

private:
    std::string module_;
    std::string code_;
};

}  // namespace kinlevy
