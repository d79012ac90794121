#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "abp/errors.hpp"

namespace abp {

/// Uniform periodic grid on the unit torus [-1/2, 1/2)^d.
///
/// Axis 0 is the reaction coordinate x1. Supported layouts are d = m = 1 and
/// d = 2 with m = 1. Values are stored row-major: index = i0 * n1 + i1, and
/// node i on an axis sits at -1/2 + i * h.
class PeriodicGrid {
public:
    PeriodicGrid() = default;

    PeriodicGrid(int d, int m, std::array<int, 2> points) : d_(d), m_(m), n_(points)
    {
        if (d != 1 && d != 2) throw ParameterError("PeriodicGrid: dimension must be 1 or 2");
        if (m != 1) throw ParameterError("PeriodicGrid: reaction dimension must be 1");
        if (d == 1) n_[1] = 1;
        for (int a = 0; a < d; ++a) {
            if (n_[a] < 2 || n_[a] % 2 != 0)
                throw ParameterError("PeriodicGrid: points per axis must be even and >= 2, got " +
                                     std::to_string(n_[a]));
        }
    }

    static PeriodicGrid line(int n) { return PeriodicGrid(1, 1, {n, 1}); }
    static PeriodicGrid plane(int n0, int n1) { return PeriodicGrid(2, 1, {n0, n1}); }

    int dim() const { return d_; }
    int reaction_dim() const { return m_; }
    int points(int axis) const { return n_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return static_cast<std::size_t>(n_[0]) * static_cast<std::size_t>(n_[1]); }
    double spacing(int axis) const { return 1.0 / n_[static_cast<std::size_t>(axis)]; }
    double cell_volume() const { return 1.0 / static_cast<double>(size()); }
    double coord(int axis, int i) const { return -0.5 + i * spacing(axis); }
    std::size_t index(int i0, int i1 = 0) const
    {
        return static_cast<std::size_t>(i0) * static_cast<std::size_t>(n_[1]) + static_cast<std::size_t>(i1);
    }

    /// Grid on T^m carrying marginals.
    PeriodicGrid reaction_grid() const { return line(n_[0]); }

    bool operator==(const PeriodicGrid&) const = default;

private:
    int d_ = 1;
    int m_ = 1;
    std::array<int, 2> n_{2, 1};
};

/// Real function sampled on a periodic grid.
struct GridFunction {
    PeriodicGrid grid;
    std::vector<double> values;

    GridFunction() = default;
    explicit GridFunction(PeriodicGrid g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
    GridFunction(PeriodicGrid g, std::vector<double> v) : grid(g), values(std::move(v))
    {
        if (values.size() != grid.size()) throw ParameterError("GridFunction: value count does not match grid");
    }

    template <class F>
    static GridFunction from(const PeriodicGrid& g, F&& f)
    {
        GridFunction out(g);
        if constexpr (std::is_invocable_v<F&, double, double>) {
            if (g.dim() != 2) throw ParameterError("GridFunction::from: two-argument function needs a 2D grid");
            for (int i0 = 0; i0 < g.points(0); ++i0)
                for (int i1 = 0; i1 < g.points(1); ++i1) out.values[g.index(i0, i1)] = f(g.coord(0, i0), g.coord(1, i1));
        } else {
            // functions of x1 alone are extended constantly along x2
            for (int i0 = 0; i0 < g.points(0); ++i0)
                for (int i1 = 0; i1 < g.points(1); ++i1) out.values[g.index(i0, i1)] = f(g.coord(0, i0));
        }
        return out;
    }

    double integral() const
    {
        return std::accumulate(values.begin(), values.end(), 0.0) * grid.cell_volume();
    }
    double sup_norm() const
    {
        double s = 0.0;
        for (double v : values) s = std::max(s, std::abs(v));
        return s;
    }
    double min() const { return *std::min_element(values.begin(), values.end()); }
    double max() const { return *std::max_element(values.begin(), values.end()); }
    double oscillation() const { return max() - min(); }
    double l2_norm() const
    {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s * grid.cell_volume());
    }

    GridFunction& operator+=(const GridFunction& o)
    {
        require_same_grid(o);
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o)
    {
        require_same_grid(o);
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
        return *this;
    }
    GridFunction& operator*=(double s)
    {
        for (double& v : values) v *= s;
        return *this;
    }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double s, GridFunction a) { return a *= s; }

    void require_same_grid(const GridFunction& o) const
    {
        if (!(grid == o.grid)) throw ParameterError("grid functions live on different grids");
    }
};

/// Extend a function of x1 (on the reaction grid) constantly along x2.
inline GridFunction extend_along_x2(const GridFunction& f1, const PeriodicGrid& full)
{
    if (f1.grid != full.reaction_grid()) throw ParameterError("extend_along_x2: reaction grid mismatch");
    GridFunction out(full);
    const int n1 = full.points(1);
    for (int i0 = 0; i0 < full.points(0); ++i0)
        std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(full.index(i0)), n1, f1.values[static_cast<std::size_t>(i0)]);
    return out;
}

/// Nonnegative grid function with unit mass (sum * cell_volume == 1).
class GridDensity {
public:
    static constexpr double mass_tolerance = 1e-12;

    GridDensity() = default;

    /// Wraps an already-normalized function; throws if it is not a density.
    explicit GridDensity(GridFunction f) : f_(std::move(f))
    {
        for (double v : f_.values)
            if (!(v >= 0.0)) throw ParameterError("GridDensity: negative or NaN value");
        const double mass = f_.integral();
        if (std::abs(mass - 1.0) > mass_tolerance)
            throw ParameterError("GridDensity: mass " + std::to_string(mass) + " differs from 1");
    }

    /// Rescales a nonnegative function to unit mass.
    static GridDensity normalize(GridFunction f)
    {
        for (double v : f.values)
            if (!(v >= 0.0)) throw ParameterError("GridDensity::normalize: negative or NaN value");
        const double mass = f.integral();
        if (!(mass > 0.0) || !std::isfinite(mass)) throw ParameterError("GridDensity::normalize: zero or infinite mass");
        f *= 1.0 / mass;
        return GridDensity(std::move(f));
    }

    static GridDensity uniform(const PeriodicGrid& g) { return GridDensity(GridFunction(g, 1.0)); }

    /// Normalized exp(-w), evaluated with a max-shift for stability.
    static GridDensity gibbs(const GridFunction& w)
    {
        GridFunction e(w.grid);
        const double wmin = w.min();
        for (std::size_t i = 0; i < e.values.size(); ++i) e.values[i] = std::exp(-(w.values[i] - wmin));
        return normalize(std::move(e));
    }

    const PeriodicGrid& grid() const { return f_.grid; }
    const std::vector<double>& values() const { return f_.values; }
    const GridFunction& function() const { return f_; }
    double operator[](std::size_t i) const { return f_.values[i]; }

private:
    GridFunction f_;
};

}  // namespace abp
