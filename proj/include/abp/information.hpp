#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "abp/grid.hpp"
#include "abp/spectral.hpp"

namespace abp {

/// Marginal on T^m: sums the trailing axis with its spacing.
inline GridDensity marginal(const GridDensity& rho)
{
    const PeriodicGrid& g = rho.grid();
    if (g.dim() == 1) return rho;
    GridFunction out(g.reaction_grid());
    const int n1 = g.points(1);
    const double h1 = g.spacing(1);
    for (int i0 = 0; i0 < g.points(0); ++i0) {
        double s = 0.0;
        for (int i1 = 0; i1 < n1; ++i1) s += rho[g.index(i0, i1)];
        out.values[static_cast<std::size_t>(i0)] = s * h1;
    }
    return GridDensity::normalize(std::move(out));
}

/// Integral of rho ln rho (rectangle rule, 0 ln 0 = 0).
inline double entropy(const GridDensity& rho)
{
    double s = 0.0;
    for (double v : rho.values())
        if (v > 0.0) s += v * std::log(v);
    return s * rho.grid().cell_volume();
}

namespace detail {

// r ln r - r + 1, accurate near r = 1.
inline double bregman_phi(double r)
{
    if (r == 0.0) return 1.0;
    const double d = r - 1.0;
    if (std::abs(d) < 0.5) return r * std::log1p(d) - d;
    return r * std::log(r) - r + 1.0;
}

// Sum of mu * phi(rho/mu) over the grid. Equals the integral of
// rho ln(rho/mu) when both have the same mass, but every term is >= 0.
inline double bregman_entropy(const std::vector<double>& rho, const std::vector<double>& mu, double cell)
{
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (mu[i] > 0.0)
            s += mu[i] * bregman_phi(rho[i] / mu[i]);
        else if (rho[i] > 0.0)
            return std::numeric_limits<double>::infinity();
    }
    return s * cell;
}

}  // namespace detail

/// H(rho | mu). Returns +infinity when rho charges a cell where mu vanishes.
inline double relative_entropy(const GridDensity& rho, const GridDensity& mu)
{
    if (rho.grid() != mu.grid()) throw ParameterError("relative_entropy: densities live on different grids");
    return detail::bregman_entropy(rho.values(), mu.values(), rho.grid().cell_volume());
}

/// Integral of |grad ln(rho/mu)|^2 rho with spectral gradients.
inline double fisher_information(const GridDensity& rho, const GridDensity& mu)
{
    if (rho.grid() != mu.grid()) throw ParameterError("fisher_information: densities live on different grids");
    GridFunction log_ratio(rho.grid());
    for (std::size_t i = 0; i < log_ratio.values.size(); ++i) {
        if (!(rho[i] > 0.0) || !(mu[i] > 0.0)) throw DomainError("fisher_information: densities must be strictly positive");
        log_ratio.values[i] = std::log(rho[i] / mu[i]);
    }
    double s = 0.0;
    for (const GridFunction& d : spectral::gradient(log_ratio))
        for (std::size_t i = 0; i < d.values.size(); ++i) s += d.values[i] * d.values[i] * rho[i];
    return s * rho.grid().cell_volume();
}

struct Distances {
    double tv = 0.0;
    double sup = 0.0;
    double l2 = 0.0;
    double h1 = 0.0;  // ||f||_2 + ||grad f||_2 of the difference
    std::optional<double> w1_1d;
};

/// W1 on the circle between two line densities: the integral of
/// |D - median(D)| with D the difference of cumulative distributions.
inline double wasserstein1_circle(const GridDensity& rho, const GridDensity& mu)
{
    const PeriodicGrid& g = rho.grid();
    if (g.dim() != 1) throw ParameterError("wasserstein1_circle: 1D densities required");
    const double h = g.spacing(0);
    std::vector<double> cum(rho.values().size());
    double c = 0.0;
    for (std::size_t i = 0; i < cum.size(); ++i) {
        c += (rho[i] - mu[i]) * h;
        cum[i] = c;
    }
    std::vector<double> sorted = cum;
    auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double median = *mid;
    double w = 0.0;
    for (double v : cum) w += std::abs(v - median);
    return w * h;
}

inline Distances distances(const GridDensity& rho, const GridDensity& mu)
{
    if (rho.grid() != mu.grid()) throw ParameterError("distances: densities live on different grids");
    const GridFunction diff = rho.function() - mu.function();
    Distances d;
    double abs_sum = 0.0;
    for (double v : diff.values) abs_sum += std::abs(v);
    d.tv = 0.5 * abs_sum * rho.grid().cell_volume();
    d.sup = diff.sup_norm();
    d.l2 = diff.l2_norm();
    double grad_sq = 0.0;
    for (const GridFunction& g : spectral::gradient(diff))
        for (double v : g.values) grad_sq += v * v;
    d.h1 = d.l2 + std::sqrt(grad_sq * rho.grid().cell_volume());
    if (rho.grid().dim() == 1) d.w1_1d = wasserstein1_circle(rho, mu);
    return d;
}

}  // namespace abp
