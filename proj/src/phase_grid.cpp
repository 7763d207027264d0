#include "kinlevy/phase_grid.hpp"

#include <cmath>

#include "kinlevy/stats.hpp"

namespace kinlevy {

PhaseGrid::PhaseGrid(const State& lo, const State& hi, int x_cells, int v_cells)
    : dim_(lo.x.dim()), lo_(lo), hi_(hi)
{
    if (x_cells < 1 || v_cells < 1) throw Error("phase_grid", "bad_grid", "cell counts must be positive");
    size_ = 1;
    volume_ = 1.0;
    for (int a = 0; a < 2 * dim_; ++a) {
        const double l = a < dim_ ? lo.x[a] : lo.v[a - dim_];
        const double h = a < dim_ ? hi.x[a] : hi.v[a - dim_];
        if (!(h > l)) throw Error("phase_grid", "bad_grid", "grid bounds must satisfy lo < hi");
        const int n = a < dim_ ? x_cells : v_cells;
        counts_.push_back(n);
        width_.push_back((h - l) / n);
        size_ *= static_cast<std::size_t>(n);
        volume_ *= (h - l) / n;
    }
}

PhaseGrid PhaseGrid::over(const Vec& x_lo, const Vec& x_hi, double vmax, int x_cells, int v_cells)
{
    const int d = x_lo.dim();
    return PhaseGrid(State{x_lo, Vec(d, -vmax)}, State{x_hi, Vec(d, vmax)}, x_cells, v_cells);
}

std::optional<std::size_t> PhaseGrid::cell_of(const State& s) const
{
    std::size_t idx = 0, stride = 1;
    for (int a = 0; a < 2 * dim_; ++a) {
        const double l = a < dim_ ? lo_.x[a] : lo_.v[a - dim_];
        const double val = a < dim_ ? s.x[a] : s.v[a - dim_];
        const double u = (val - l) / width_[static_cast<std::size_t>(a)];
        if (!(u >= 0.0)) return std::nullopt;
        const int n = counts_[static_cast<std::size_t>(a)];
        auto k = static_cast<long>(std::floor(u));
        if (k >= n) return std::nullopt;
        idx += static_cast<std::size_t>(k) * stride;
        stride *= static_cast<std::size_t>(n);
    }
    return idx;
}

std::vector<int> PhaseGrid::unflatten(std::size_t cell) const
{
    std::vector<int> k(static_cast<std::size_t>(2 * dim_));
    for (int a = 0; a < 2 * dim_; ++a) {
        const auto n = static_cast<std::size_t>(counts_[static_cast<std::size_t>(a)]);
        k[static_cast<std::size_t>(a)] = static_cast<int>(cell % n);
        cell /= n;
    }
    return k;
}

int PhaseGrid::v_index(std::size_t cell, int a) const
{
    return unflatten(cell)[static_cast<std::size_t>(dim_ + a)];
}

State PhaseGrid::cell_lo(std::size_t cell) const
{
    const auto k = unflatten(cell);
    State s{Vec(dim_), Vec(dim_)};
    for (int a = 0; a < 2 * dim_; ++a) {
        const double w = width_[static_cast<std::size_t>(a)] * k[static_cast<std::size_t>(a)];
        if (a < dim_) s.x[a] = lo_.x[a] + w;
        else s.v[a - dim_] = lo_.v[a - dim_] + w;
    }
    return s;
}

State PhaseGrid::cell_hi(std::size_t cell) const
{
    State s = cell_lo(cell);
    for (int a = 0; a < 2 * dim_; ++a) {
        if (a < dim_) s.x[a] += width_[static_cast<std::size_t>(a)];
        else s.v[a - dim_] += width_[static_cast<std::size_t>(a)];
    }
    return s;
}

State PhaseGrid::cell_center(std::size_t cell) const
{
    const State l = cell_lo(cell), h = cell_hi(cell);
    return State{(l.x + h.x) * 0.5, (l.v + h.v) * 0.5};
}

void PhaseHistogram::add(const State& s, double w)
{
    if (auto c = grid.cell_of(s)) mass[*c] += w;
    else outside += w;
}

double PhaseHistogram::total() const
{
    return pairwise_sum(mass) + outside;
}

std::vector<double> PhaseHistogram::normalized_with_outside() const
{
    std::vector<double> p(mass);
    p.push_back(outside);
    const double t = pairwise_sum(p);
    if (t > 0) {
        for (auto& x : p) x /= t;
    }
    return p;
}

double tv_distance(const PhaseHistogram& a, const PhaseHistogram& b)
{
    std::vector<double> p(a.mass), q(b.mass);
    p.push_back(a.outside);
    q.push_back(b.outside);
    return tv_distance(std::span<const double>(p), std::span<const double>(q));
}

}  // namespace kinlevy
