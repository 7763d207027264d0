#include "kinlevy/quadrature.hpp"

#include <cmath>
#include <queue>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace kinlevy {

namespace {

struct Piece {
    double a, b, value, error;
    bool operator<(const Piece& o) const { return error < o.error; }
};

Piece estimate(const std::function<double(double)>& f, double a, double b)
{
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, a, b, 0, 0.0, &err);
    return {a, b, v, err};
}

}  // namespace

QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b, double abs_tol,
                              double rel_tol, int max_intervals)
{
    QuadResult out;
    if (a == b) return out;
    std::priority_queue<Piece> heap;
    Piece first = estimate(f, a, b);
    double total = first.value, err = first.error;
    heap.push(first);
    int count = 1;
    while (err > std::max(abs_tol, rel_tol * std::abs(total)) && count < max_intervals) {
        Piece worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (mid <= worst.a || mid >= worst.b) {
            // Interval cannot be split further in double precision.
            heap.push(worst);
            break;
        }
        Piece left = estimate(f, worst.a, mid);
        Piece right = estimate(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++count;
    }
    // Re-sum from the pieces to avoid drift in the running totals.
    total = 0.0;
    err = 0.0;
    while (!heap.empty()) {
        total += heap.top().value;
        err += heap.top().error;
        heap.pop();
    }
    out.value = total;
    out.error = err;
    out.intervals = count;
    out.converged = err <= std::max(abs_tol, rel_tol * std::abs(total));
    return out;
}

}  // namespace kinlevy
