#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "kinlevy/types.hpp"

namespace kinlevy {

/// Rectangular grid on [x_lo, x_hi] x [v_lo, v_hi] in R^{2d}. Cells are
/// half-open; index order is x axes first, then v axes, first axis fastest.
class PhaseGrid {
public:
    PhaseGrid() = default;
    PhaseGrid(const State& lo, const State& hi, int x_cells, int v_cells);
    /// Symmetric velocity range [-vmax, vmax]^d.
    static PhaseGrid over(const Vec& x_lo, const Vec& x_hi, double vmax, int x_cells, int v_cells);

    int dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return size_; }
    int cells_on_axis(int axis) const noexcept { return counts_[static_cast<std::size_t>(axis)]; }
    const State& lo() const noexcept { return lo_; }
    const State& hi() const noexcept { return hi_; }

    std::optional<std::size_t> cell_of(const State& s) const;
    State cell_lo(std::size_t cell) const;
    State cell_hi(std::size_t cell) const;
    State cell_center(std::size_t cell) const;
    double cell_volume() const noexcept { return volume_; }
    /// Velocity index along axis a (0 <= a < d) of a cell.
    int v_index(std::size_t cell, int a) const;

private:
    int dim_ = 0;
    State lo_, hi_;
    std::vector<int> counts_;
    std::vector<double> width_;
    std::size_t size_ = 0;
    double volume_ = 0.0;

    std::vector<int> unflatten(std::size_t cell) const;
};

/// Histogram over a PhaseGrid plus an outside bucket.
struct PhaseHistogram {
    PhaseGrid grid;
    std::vector<double> mass;  // per cell
    double outside = 0.0;

    explicit PhaseHistogram(PhaseGrid g = {}) : grid(std::move(g)), mass(grid.size(), 0.0) {}
    void add(const State& s, double w = 1.0);
    double total() const;
    /// Probabilities over cells followed by the outside bucket.
    std::vector<double> normalized_with_outside() const;
};

/// Total variation between two histograms on the same grid, counting the
/// outside bucket as one more cell.
double tv_distance(const PhaseHistogram& a, const PhaseHistogram& b);

}  // namespace kinlevy
