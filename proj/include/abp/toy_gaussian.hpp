#pragma once

#include <cmath>
#include <string>

#include "abp/errors.hpp"

namespace abp {

/// Scalar Gaussian model: e^{-V} has variance sigma0_sq, the minimizer has
/// variance sigma^2 solving 1/sigma^2 = 1/sigma0^2 - alpha/(sigma^2 + eps).
struct ToyGaussianParams {
    double sigma0_sq = 1.0;
    double alpha = 0.0;
    double epsilon = 0.0;

    void validate() const
    {
        if (!(sigma0_sq > 0.0) || !std::isfinite(sigma0_sq)) throw ParameterError("toy: sigma0_sq must be positive");
        if (!std::isfinite(alpha)) throw ParameterError("toy: alpha must be finite");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("toy: epsilon must be >= 0");
    }
};

/// Larger root of s^2 - (sigma0^2 (1 + alpha) - eps) s - eps sigma0^2 = 0.
inline double toy_gaussian_sigma(const ToyGaussianParams& p)
{
    p.validate();
    const double b = p.sigma0_sq * (1.0 + p.alpha) - p.epsilon;
    const double c = p.epsilon * p.sigma0_sq;
    const double disc = b * b + 4.0 * c;
    const double sq = std::sqrt(disc);
    // cancellation-free form of (b + sq) / 2
    const double root = b >= 0.0 ? 0.5 * (b + sq) : (sq - b > 0.0 ? 2.0 * c / (sq - b) : 0.0);
    if (!(root > 0.0)) throw DomainError("toy: no positive root for alpha = " + std::to_string(p.alpha));
    return root;
}

struct ToyIteration {
    double inverse_variance = 0.0;  // u = 1/sigma^2
    int iterations = 0;
    bool converged = false;
};

/// Iterates u <- 1/sigma0^2 - alpha u / (1 + eps u) from u0 until successive
/// iterates differ by at most tol. A contraction for 0 <= alpha < 1.
inline ToyIteration toy_inverse_iteration(const ToyGaussianParams& p, double u0, double tol = 1e-14, int max_iter = 100000)
{
    p.validate();
    if (!(u0 >= 0.0)) throw ParameterError("toy: starting value must be >= 0");
    ToyIteration it;
    double u = u0;
    const double a = 1.0 / p.sigma0_sq;
    while (it.iterations < max_iter) {
        const double next = a - p.alpha * u / (1.0 + p.epsilon * u);
        ++it.iterations;
        const double step = std::abs(next - u);
        u = next;
        if (step <= tol * std::max(1.0, std::abs(u))) {
            it.converged = true;
            break;
        }
    }
    it.inverse_variance = u;
    return it;
}

}  // namespace abp
