#include "kinlevy/stats.hpp"

#include <algorithm>
#include <cmath>

#include "kinlevy/types.hpp"

namespace kinlevy {

double pairwise_sum(std::span<const double> values) noexcept
{
    const std::size_t n = values.size();
    if (n <= 16) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

MeanEstimate mean_estimate(std::span<const double> values)
{
    MeanEstimate out;
    out.count = values.size();
    if (values.empty()) return out;
    out.mean = pairwise_sum(values) / static_cast<double>(values.size());
    if (values.size() < 2) return out;
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - out.mean;
        dev[i] = d * d;
    }
    const double var = pairwise_sum(dev) / static_cast<double>(values.size() - 1);
    out.std_error = std::sqrt(var / static_cast<double>(values.size()));
    return out;
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z)
{
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
    if (successes == 0) ci.lo = 0.0;
    if (successes == trials) ci.hi = 1.0;
    return ci;
}

double kolmogorov_q(double lambda) noexcept
{
    if (lambda < 1e-3) return 1.0;
    if (lambda < 1.18) {
        // Small-lambda form converges faster: 1 - sqrt(2 pi)/lambda sum exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
        const double c = -M_PI * M_PI / (8.0 * lambda * lambda);
        double s = 0.0;
        for (int k = 1; k <= 8; ++k) {
            const double j = 2.0 * k - 1.0;
            s += std::exp(c * j * j);
        }
        return std::clamp(1.0 - std::sqrt(2.0 * M_PI) / lambda * s, 0.0, 1.0);
    }
    double s = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += sign * term;
        if (term < 1e-17) break;
        sign = -sign;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty()) throw Error("stats", "empty_sample", "KS test needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    KsResult r;
    r.statistic = d;
    r.p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    return r;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w)
{
    if (x.size() != y.size() || x.size() < 2 || (!w.empty() && w.size() != x.size())) {
        throw Error("stats", "bad_fit_input", "linear fit needs matching inputs with at least two points");
    }
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        sw += wi;
        sx += wi * x[i];
        sy += wi * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        sxx += wi * (x[i] - mx) * (x[i] - mx);
        sxy += wi * (x[i] - mx) * (y[i] - my);
        syy += wi * (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0) throw Error("stats", "degenerate_fit", "abscissae are all equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

double tv_distance(std::span<const double> p, std::span<const double> q)
{
    if (p.size() != q.size()) throw Error("stats", "size_mismatch", "histograms differ in size");
    const double sp = pairwise_sum(p), sq = pairwise_sum(q);
    if (sp <= 0 || sq <= 0) throw Error("stats", "empty_histogram", "histogram has no mass");
    std::vector<double> diff(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) diff[i] = std::abs(p[i] / sp - q[i] / sq);
    return 0.5 * pairwise_sum(diff);
}

}  // namespace kinlevy
