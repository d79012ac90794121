#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abp/grid.hpp"
#include "abp/spectral.hpp"

namespace abp {

/// A(x1) = -ln of the integral of exp(-V) over x2, shifted so that
/// exp(-A) integrates to one on T^m. In 1D this is V + ln Z.
inline GridFunction free_energy_A(const GridFunction& V)
{
    const PeriodicGrid& g = V.grid;
    const PeriodicGrid r = g.reaction_grid();
    const int n1 = g.points(1);
    const double vmin = V.min();
    GridFunction partial(r);
    for (int i0 = 0; i0 < g.points(0); ++i0) {
        double s = 0.0;
        for (int i1 = 0; i1 < n1; ++i1) s += std::exp(-(V.values[g.index(i0, i1)] - vmin));
        partial.values[static_cast<std::size_t>(i0)] = s * g.spacing(1);
    }
    const double z = partial.integral();
    GridFunction A(r);
    for (std::size_t i = 0; i < A.values.size(); ++i) A.values[i] = -std::log(partial.values[i] / z);
    return A;
}

/// Potential V on T^d, either tabulated or given in closed form, with the
/// derived free energy A cached.
class Potential {
public:
    using Point = std::array<double, 2>;
    using ValueFn = std::function<double(const Point&)>;
    using GradientFn = std::function<Point(const Point&)>;

    static Potential tabulated(std::string name, GridFunction V)
    {
        for (double v : V.values)
            if (!std::isfinite(v)) throw ParameterError("Potential: tabulated values must be finite");
        return Potential(std::move(name), std::move(V), {}, {});
    }

    static Potential closed_form(std::string name, const PeriodicGrid& g, ValueFn value, GradientFn gradient)
    {
        GridFunction V(g);
        for (int i0 = 0; i0 < g.points(0); ++i0)
            for (int i1 = 0; i1 < g.points(1); ++i1) {
                const Point x{g.coord(0, i0), g.dim() == 2 ? g.coord(1, i1) : 0.0};
                V.values[g.index(i0, i1)] = value(x);
            }
        return Potential(std::move(name), std::move(V), std::move(value), std::move(gradient));
    }

    const std::string& name() const { return name_; }
    const PeriodicGrid& grid() const { return V_.grid; }
    const GridFunction& values() const { return V_; }
    const GridFunction& free_energy_A() const { return A_; }
    const std::vector<GridFunction>& grid_gradient() const { return grad_; }
    bool is_closed_form() const { return static_cast<bool>(value_fn_); }

    /// Gradient at an arbitrary point: analytic when available, otherwise
    /// periodic linear interpolation of the spectral grid gradient.
    Point gradient_at(const Point& x) const
    {
        if (gradient_fn_) return gradient_fn_(x);
        Point out{0.0, 0.0};
        for (int a = 0; a < grid().dim(); ++a) out[static_cast<std::size_t>(a)] = interpolate(grad_[static_cast<std::size_t>(a)], x);
        return out;
    }

    double value_at(const Point& x) const { return value_fn_ ? value_fn_(x) : interpolate(V_, x); }

    /// Periodic multilinear interpolation of a grid function.
    static double interpolate(const GridFunction& f, const Point& x)
    {
        const PeriodicGrid& g = f.grid;
        auto locate = [&](int axis, double xi, int& i, double& w) {
            const int n = g.points(axis);
            double s = (xi + 0.5) * n;
            s -= n * std::floor(s / n);
            const double fl = std::floor(s);
            i = static_cast<int>(fl) % n;
            w = s - fl;
        };
        int i0 = 0;
        double w0 = 0.0;
        locate(0, x[0], i0, w0);
        const int j0 = (i0 + 1) % g.points(0);
        if (g.dim() == 1) return (1.0 - w0) * f.values[g.index(i0)] + w0 * f.values[g.index(j0)];
        int i1 = 0;
        double w1 = 0.0;
        locate(1, x[1], i1, w1);
        const int j1 = (i1 + 1) % g.points(1);
        return (1.0 - w0) * ((1.0 - w1) * f.values[g.index(i0, i1)] + w1 * f.values[g.index(i0, j1)]) +
               w0 * ((1.0 - w1) * f.values[g.index(j0, i1)] + w1 * f.values[g.index(j0, j1)]);
    }

private:
    Potential(std::string name, GridFunction V, ValueFn value, GradientFn gradient)
        : name_(std::move(name)), V_(std::move(V)), value_fn_(std::move(value)), gradient_fn_(std::move(gradient))
    {
        A_ = abp::free_energy_A(V_);
        grad_ = spectral::gradient(V_);
    }

    std::string name_;
    GridFunction V_;
    GridFunction A_;
    std::vector<GridFunction> grad_;
    ValueFn value_fn_;
    GradientFn gradient_fn_;
};

inline GridFunction free_energy_A(const Potential& potential) { return free_energy_A(potential.values()); }

/// Builtin potentials:
///   cosine-1d       V = c cos(2 pi x)
///   double-well-1d  V = c cos(4 pi x) + 0.2 cos(2 pi x)
///   coupled-2d      V = c1 cos(2 pi x1) + c2 cos(2 pi x2) + c3 cos(2 pi x1) cos(2 pi x2)
/// Missing coefficients default to 1.
inline Potential builtin_potential(std::string_view name, std::span<const double> coefficients, int points_per_axis)
{
    constexpr double tp = 2.0 * std::numbers::pi;
    auto coef = [&](std::size_t i) { return i < coefficients.size() ? coefficients[i] : 1.0; };
    using Point = Potential::Point;
    if (name == "cosine-1d") {
        if (coefficients.size() > 1) throw ParameterError("cosine-1d takes one coefficient");
        const double c = coef(0);
        return Potential::closed_form(
            "cosine-1d", PeriodicGrid::line(points_per_axis), [c](const Point& x) { return c * std::cos(tp * x[0]); },
            [c](const Point& x) { return Point{-c * tp * std::sin(tp * x[0]), 0.0}; });
    }
    if (name == "double-well-1d") {
        if (coefficients.size() > 1) throw ParameterError("double-well-1d takes one coefficient");
        const double c = coef(0);
        return Potential::closed_form(
            "double-well-1d", PeriodicGrid::line(points_per_axis),
            [c](const Point& x) { return c * std::cos(2.0 * tp * x[0]) + 0.2 * std::cos(tp * x[0]); },
            [c](const Point& x) {
                return Point{-2.0 * c * tp * std::sin(2.0 * tp * x[0]) - 0.2 * tp * std::sin(tp * x[0]), 0.0};
            });
    }
    if (name == "coupled-2d") {
        if (coefficients.size() > 3) throw ParameterError("coupled-2d takes three coefficients");
        const double c1 = coef(0), c2 = coef(1), c3 = coef(2);
        return Potential::closed_form(
            "coupled-2d", PeriodicGrid::plane(points_per_axis, points_per_axis),
            [=](const Point& x) {
                const double a = std::cos(tp * x[0]), b = std::cos(tp * x[1]);
                return c1 * a + c2 * b + c3 * a * b;
            },
            [=](const Point& x) {
                const double a = std::cos(tp * x[0]), b = std::cos(tp * x[1]);
                const double da = -tp * std::sin(tp * x[0]), db = -tp * std::sin(tp * x[1]);
                return Point{c1 * da + c3 * da * b, c2 * db + c3 * a * db};
            });
    }
    throw ParameterError("unknown builtin potential '" + std::string(name) + "'");
}

}  // namespace abp
