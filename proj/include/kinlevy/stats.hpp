#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kinlevy {

/// Pairwise (cascade) summation in index order; deterministic and accurate.
double pairwise_sum(std::span<const double> values) noexcept;

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean and standard error of the mean.
MeanEstimate mean_estimate(std::span<const double> values);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic distribution
/// (effective-size correction of Stephens). Inputs need not be sorted.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda) noexcept;

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Weighted least squares line y = intercept + slope * x. Empty weights mean 1.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w = {});

/// Total variation 0.5 * sum |p - q|; both inputs are normalized first.
double tv_distance(std::span<const double> p, std::span<const double> q);

}  // namespace kinlevy
