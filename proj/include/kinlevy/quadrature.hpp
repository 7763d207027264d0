#pragma once

#include <functional>

namespace kinlevy {

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
    int intervals = 0;
};

/// Globally adaptive Gauss-Kronrod (21-point) integration on [a, b].
/// The interval with the largest error estimate is bisected until the total
/// error is below max(abs_tol, rel_tol * |value|) or `max_intervals` is hit.
QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b, double abs_tol,
                              double rel_tol = 1e-12, int max_intervals = 4000);

}  // namespace kinlevy
