#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "abp/grid.hpp"
#include "abp/spectral.hpp"

namespace abp {

/// Periodized Gaussian of variance epsilon on T^m,
///   K(x) = prod_j sum_n (2 pi eps)^{-1/2} exp(-(x_j + n)^2 / (2 eps)),
/// with Fourier coefficients exp(-2 pi^2 |k|^2 eps).
class WrappedGaussianKernel {
public:
    explicit WrappedGaussianKernel(double epsilon, int m = 1)
        : WrappedGaussianKernel(epsilon, m, default_wrap_terms(epsilon), default_spectral_cutoff(epsilon))
    {
    }

    WrappedGaussianKernel(double epsilon, int m, int wrap_terms, int spectral_cutoff)
        : eps_(epsilon), m_(m), wrap_(wrap_terms), cutoff_(spectral_cutoff)
    {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw ParameterError("WrappedGaussianKernel: epsilon must be positive, got " + std::to_string(epsilon));
        if (m < 1) throw ParameterError("WrappedGaussianKernel: dimension must be positive");
        if (wrap_terms < 1 || spectral_cutoff < 1)
            throw ParameterError("WrappedGaussianKernel: truncation parameters must be positive");
    }

    // 8.6 standard deviations past the nearest image leaves e^{-37} < 1e-16.
    static int default_wrap_terms(double epsilon)
    {
        return static_cast<int>(std::ceil(8.6 * std::sqrt(std::max(epsilon, 0.0)))) + 2;
    }

    /// Smallest k with exp(-2 pi^2 k^2 eps) < 1e-16.
    static int default_spectral_cutoff(double epsilon)
    {
        if (!(epsilon > 0.0)) return 1;
        const double k = std::sqrt(std::log(1e16) / (2.0 * std::numbers::pi * std::numbers::pi * epsilon));
        return static_cast<int>(std::floor(k)) + 1;
    }

    double epsilon() const { return eps_; }
    int dim() const { return m_; }
    int wrap_terms() const { return wrap_; }
    int spectral_cutoff() const { return cutoff_; }

    /// Multiplier for squared wavenumber |k|^2.
    double multiplier(double k_sq) const
    {
        return std::exp(-2.0 * std::numbers::pi * std::numbers::pi * k_sq * eps_);
    }

    /// One-dimensional truncated lattice sum.
    double eval_1d(double x) const
    {
        x = std::abs(x - std::floor(x + 0.5));
        const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * eps_);
        double s = 0.0;
        // accumulate from the far images inward
        for (int n = wrap_; n >= 1; --n) {
            s += std::exp(-(x + n) * (x + n) / (2.0 * eps_));
            s += std::exp(-(x - n) * (x - n) / (2.0 * eps_));
        }
        s += std::exp(-x * x / (2.0 * eps_));
        return norm * s;
    }

    double operator()(std::span<const double> x) const
    {
        if (static_cast<int>(x.size()) != m_) throw ParameterError("WrappedGaussianKernel: point has wrong dimension");
        double v = 1.0;
        for (double xi : x) v *= eval_1d(xi);
        return v;
    }

private:
    double eps_;
    int m_;
    int wrap_;
    int cutoff_;
};

inline double eval_kernel(const WrappedGaussianKernel& kernel, std::span<const double> x) { return kernel(x); }

inline double fourier_coeff(const WrappedGaussianKernel& kernel, std::span<const int> k)
{
    double k_sq = 0.0;
    for (int ki : k) k_sq += static_cast<double>(ki) * ki;
    return kernel.multiplier(k_sq);
}

/// Samples the kernel (centered at the origin) on a grid; kernel dimension
/// must not exceed the grid dimension, trailing axes are constant.
inline GridFunction sample_kernel(const WrappedGaussianKernel& kernel, const PeriodicGrid& g)
{
    if (kernel.dim() > g.dim()) throw ParameterError("sample_kernel: kernel dimension exceeds grid dimension");
    if (kernel.dim() == 1) return GridFunction::from(g, [&](double x) { return kernel.eval_1d(x); });
    return GridFunction::from(g, [&](double x0, double x1) { return kernel.eval_1d(x0) * kernel.eval_1d(x1); });
}

/// Periodic convolution as a Fourier multiplier acting on the first m axes.
/// Modes above the kernel's spectral cutoff are dropped.
inline GridFunction convolve(const WrappedGaussianKernel& kernel, const GridFunction& f)
{
    if (kernel.dim() > f.grid.dim())
        throw ParameterError("convolve: kernel dimension " + std::to_string(kernel.dim()) +
                             " exceeds grid dimension " + std::to_string(f.grid.dim()));
    const int cutoff = kernel.spectral_cutoff();
    const bool both = kernel.dim() == 2;
    return spectral::apply_multiplier(f, [&](const spectral::Wave& w) {
        const int a0 = std::abs(w.k0);
        const int a1 = both ? w.k1 : 0;
        if (a0 > cutoff || a1 > cutoff) return spectral::Complex(0.0, 0.0);
        const double k_sq = static_cast<double>(a0) * a0 + static_cast<double>(a1) * a1;
        return spectral::Complex(kernel.multiplier(k_sq), 0.0);
    });
}

/// Convolution of a density. Roundoff negatives down to -1e-13 are clipped
/// and the mass restored; anything below that is a numerical failure.
inline GridDensity convolve(const WrappedGaussianKernel& kernel, const GridDensity& rho)
{
    GridFunction out = convolve(kernel, rho.function());
    constexpr double clip = 1e-13;
    for (double& v : out.values) {
        if (v < -clip) throw DomainError("convolve: spectral ringing produced value " + std::to_string(v));
        if (v < 0.0) v = 0.0;
    }
    return GridDensity::normalize(std::move(out));
}

/// ||g - K * g||_inf.
inline double smoothing_gap(const GridFunction& g, const WrappedGaussianKernel& kernel)
{
    return (g - convolve(kernel, g)).sup_norm();
}

/// ||ln g - K * ln(K * g)||_inf for strictly positive g.
inline double log_commutator_gap(const GridFunction& g, const WrappedGaussianKernel& kernel)
{
    for (double v : g.values)
        if (!(v > 0.0)) throw DomainError("log_commutator_gap: g must be strictly positive");
    GridFunction log_g(g.grid);
    for (std::size_t i = 0; i < g.values.size(); ++i) log_g.values[i] = std::log(g.values[i]);
    GridFunction smoothed = convolve(kernel, g);
    for (double& v : smoothed.values) {
        if (!(v > 0.0)) throw DomainError("log_commutator_gap: smoothed function is not positive");
        v = std::log(v);
    }
    return (log_g - convolve(kernel, smoothed)).sup_norm();
}

}  // namespace abp
