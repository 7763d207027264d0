#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kinlevy/types.hpp"

namespace kinlevy {

namespace detail {
struct DomainImpl;
}

/// Open position-space set O; the killed process lives on O x R^d.
class Domain {
public:
    static Domain interval(double lo, double hi);
    static Domain box(const Vec& lo, const Vec& hi);
    static Domain ball(const Vec& center, double radius);
    static Domain union_of(std::vector<Domain> parts);
    /// Membership given by a predicate; `lo`/`hi` is a bounding box.
    static Domain predicate(std::function<bool(const Vec&)> inside, const Vec& lo, const Vec& hi);

    int dim() const noexcept;
    const std::string& kind() const noexcept;
    bool contains(const Vec& x) const;
    /// Distance from x to the complement of O (0 outside). Exact for
    /// interval, box and ball; a lower bound for unions and predicates.
    double boundary_distance(const Vec& x) const;
    const Vec& bbox_lo() const noexcept;
    const Vec& bbox_hi() const noexcept;

private:
    explicit Domain(std::shared_ptr<const detail::DomainImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const detail::DomainImpl> impl_;
};

/// First exit from O along the segment from `a` (inside) to `b`, as a
/// fraction s in (0, 1] of the segment, by bisection to `tol`. Returns a
/// negative value when `b` is inside (no exit detected on this step).
double segment_exit_fraction(const Domain& domain, const Vec& a, const Vec& b, double tol = 1e-10);

}  // namespace kinlevy
