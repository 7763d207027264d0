#include "kinlevy/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinlevy {

namespace detail {

enum class Shape { Box, Ball, Union, Predicate };

struct DomainImpl {
    std::string kind;
    Shape shape = Shape::Box;
    int dim = 1;
    Vec lo, hi;  // bounding box (exact region for boxes)
    Vec center;
    double radius = 0.0;
    std::vector<Domain> parts;
    std::function<bool(const Vec&)> inside;
};

}  // namespace detail

namespace {

void require_dims(const Vec& a, const Vec& b)
{
    if (a.dim() != b.dim()) throw Error("domain", "dimension_mismatch", "corner dimensions differ");
}

}  // namespace

Domain Domain::interval(double lo, double hi)
{
    return box(Vec{lo}, Vec{hi});
}

Domain Domain::box(const Vec& lo, const Vec& hi)
{
    require_dims(lo, hi);
    for (int i = 0; i < lo.dim(); ++i) {
        if (!(lo[i] < hi[i])) throw Error("domain", "empty_domain", "box must satisfy lo < hi on every axis");
    }
    auto d = std::make_shared<detail::DomainImpl>();
    d->kind = lo.dim() == 1 ? "interval" : "box";
    d->dim = lo.dim();
    d->lo = lo;
    d->hi = hi;
    return Domain(d);
}

Domain Domain::ball(const Vec& center, double radius)
{
    if (!(radius > 0)) throw Error("domain", "empty_domain", "ball radius must be positive");
    auto d = std::make_shared<detail::DomainImpl>();
    d->kind = "ball";
    d->shape = detail::Shape::Ball;
    d->dim = center.dim();
    d->center = center;
    d->radius = radius;
    d->lo = center - Vec(center.dim(), radius);
    d->hi = center + Vec(center.dim(), radius);
    return Domain(d);
}

Domain Domain::union_of(std::vector<Domain> parts)
{
    if (parts.empty()) throw Error("domain", "empty_domain", "union needs at least one part");
    auto d = std::make_shared<detail::DomainImpl>();
    d->kind = "union";
    d->shape = detail::Shape::Union;
    d->dim = parts.front().dim();
    d->lo = parts.front().bbox_lo();
    d->hi = parts.front().bbox_hi();
    for (const auto& p : parts) {
        if (p.dim() != d->dim) throw Error("domain", "dimension_mismatch", "union parts differ in dimension");
        for (int i = 0; i < d->dim; ++i) {
            d->lo[i] = std::min(d->lo[i], p.bbox_lo()[i]);
            d->hi[i] = std::max(d->hi[i], p.bbox_hi()[i]);
        }
    }
    d->parts = std::move(parts);
    return Domain(d);
}

Domain Domain::predicate(std::function<bool(const Vec&)> inside, const Vec& lo, const Vec& hi)
{
    require_dims(lo, hi);
    if (!inside) throw Error("domain", "bad_predicate", "predicate is empty");
    auto d = std::make_shared<detail::DomainImpl>();
    d->kind = "predicate";
    d->shape = detail::Shape::Predicate;
    d->dim = lo.dim();
    d->lo = lo;
    d->hi = hi;
    d->inside = std::move(inside);
    return Domain(d);
}

int Domain::dim() const noexcept { return impl_->dim; }
const std::string& Domain::kind() const noexcept { return impl_->kind; }
const Vec& Domain::bbox_lo() const noexcept { return impl_->lo; }
const Vec& Domain::bbox_hi() const noexcept { return impl_->hi; }

bool Domain::contains(const Vec& x) const
{
    const auto& d = *impl_;
    if (x.dim() != d.dim) throw Error("domain", "dimension_mismatch", "point has wrong dimension");
    if (d.shape == detail::Shape::Box) {
        for (int i = 0; i < d.dim; ++i) {
            if (!(x[i] > d.lo[i] && x[i] < d.hi[i])) return false;
        }
        return true;
    }
    if (d.shape == detail::Shape::Ball) return (x - d.center).norm() < d.radius;
    if (d.shape == detail::Shape::Union) {
        return std::any_of(d.parts.begin(), d.parts.end(), [&](const Domain& p) { return p.contains(x); });
    }
    return d.inside(x);
}

double Domain::boundary_distance(const Vec& x) const
{
    const auto& d = *impl_;
    if (!contains(x)) return 0.0;
    if (d.shape == detail::Shape::Box) {
        double m = std::numeric_limits<double>::infinity();
        for (int i = 0; i < d.dim; ++i) m = std::min({m, x[i] - d.lo[i], d.hi[i] - x[i]});
        return m;
    }
    if (d.shape == detail::Shape::Ball) return d.radius - (x - d.center).norm();
    if (d.shape == detail::Shape::Union) {
        double m = 0.0;
        for (const auto& p : d.parts) m = std::max(m, p.boundary_distance(x));
        return m;
    }
    // Predicate: march rays in a fixed set of directions and bisect the first
    // outside point. Lower bound up to the ray resolution.
    const int rays = d.dim == 1 ? 2 : 64;
    Vec span = d.hi - d.lo;
    const double reach = span.norm();
    double best = reach;
    for (int r = 0; r < rays; ++r) {
        Vec u(d.dim);
        if (d.dim == 1) {
            u[0] = r == 0 ? 1.0 : -1.0;
        } else {
            // Golden-angle spiral directions (d = 2 uses the first two coordinates).
            const double phi = 2.39996322972865332 * r;
            const double z = d.dim == 2 ? 0.0 : 1.0 - 2.0 * (r + 0.5) / rays;
            const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
            u[0] = rho * std::cos(phi);
            u[1] = rho * std::sin(phi);
            if (d.dim == 3) u[2] = z;
        }
        double lo = 0.0, hi = -1.0;
        const int marches = 256;
        for (int k = 1; k <= marches; ++k) {
            const double s = reach * k / marches;
            if (!d.inside(x + u * s)) {
                hi = s;
                break;
            }
            lo = s;
        }
        if (hi < 0) continue;
        for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            (d.inside(x + u * mid) ? lo : hi) = mid;
        }
        best = std::min(best, lo);
    }
    return best;
}

double segment_exit_fraction(const Domain& domain, const Vec& a, const Vec& b, double tol)
{
    if (domain.contains(b)) return -1.0;
    double lo = 0.0, hi = 1.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (domain.contains(a + (b - a) * mid)) lo = mid;
        else hi = mid;
    }
    return hi;
}

}  // namespace kinlevy
