#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "abp/information.hpp"
#include "abp/kernel.hpp"
#include "abp/potential.hpp"

namespace abp {

/// Parameters of the regularized free energy
///   F(rho) = int rho ln rho + beta int V rho + alpha H(K_eps * rho^1).
/// Free energies are dimensionless (units of 1/beta). epsilon = 0 selects the
/// unregularized closed forms; alpha = infinity selects the flat-marginal limit.
struct AbpParams {
    double alpha = 0.0;
    double beta = 1.0;
    double epsilon = 0.0;
    int m = 1;

    static constexpr double alpha_infinity = std::numeric_limits<double>::infinity();

    bool alpha_is_infinite() const { return std::isinf(alpha); }

    void validate() const
    {
        if (!(alpha >= 0.0)) throw ParameterError("AbpParams: alpha must be >= 0");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw ParameterError("AbpParams: beta must be positive");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("AbpParams: epsilon must be >= 0");
        if (m != 1) throw ParameterError("AbpParams: only m = 1 is supported");
    }

    /// Kernel for epsilon > 0; nullopt for the unregularized case.
    std::optional<WrappedGaussianKernel> kernel() const
    {
        if (epsilon > 0.0) return WrappedGaussianKernel(epsilon, m);
        return std::nullopt;
    }
};

namespace detail {

inline void require_finite_alpha(const AbpParams& p, const char* what)
{
    p.validate();
    if (p.alpha_is_infinite()) throw ParameterError(std::string(what) + ": alpha must be finite");
}

inline GridFunction scaled(const GridFunction& V, double beta)
{
    GridFunction out = V;
    out *= beta;
    return out;
}

/// K * rho^1 on the reaction grid (rho^1 itself when epsilon = 0).
inline GridDensity smoothed_marginal(const GridDensity& rho, const AbpParams& p)
{
    GridDensity m = marginal(rho);
    if (auto k = p.kernel()) return convolve(*k, m);
    return m;
}

/// K * ln g on the reaction grid (ln g when epsilon = 0).
inline GridFunction smoothed_log(const GridDensity& g, const AbpParams& p)
{
    GridFunction lg(g.grid());
    for (std::size_t i = 0; i < lg.values.size(); ++i) {
        if (!(g[i] > 0.0)) throw DomainError("bias_potential: marginal vanishes on the grid");
        lg.values[i] = std::log(g[i]);
    }
    if (auto k = p.kernel()) return convolve(*k, lg);
    return lg;
}

}  // namespace detail

/// alpha K * ln(K * rho^1) on the reaction grid T^m (dimensionless; divide by
/// beta for the force).
inline GridFunction bias_potential(const GridDensity& rho, const AbpParams& params)
{
    detail::require_finite_alpha(params, "bias_potential");
    const PeriodicGrid r = rho.grid().reaction_grid();
    if (params.alpha == 0.0) return GridFunction(r, 0.0);
    GridFunction b = detail::smoothed_log(detail::smoothed_marginal(rho, params), params);
    b *= params.alpha;
    return b;
}

inline double free_energy(const GridDensity& rho, const GridFunction& V, const AbpParams& params)
{
    detail::require_finite_alpha(params, "free_energy");
    if (V.grid != rho.grid()) throw ParameterError("free_energy: potential and density live on different grids");
    double pot = 0.0;
    for (std::size_t i = 0; i < V.values.size(); ++i) pot += V.values[i] * rho[i];
    double f = entropy(rho) + params.beta * pot * rho.grid().cell_volume();
    if (params.alpha > 0.0) f += params.alpha * entropy(detail::smoothed_marginal(rho, params));
    return f;
}

inline double free_energy(const GridDensity& rho, const Potential& V, const AbpParams& params)
{
    return free_energy(rho, V.values(), params);
}

/// Local equilibrium: normalized exp(-beta V - alpha K * ln(K * rho^1)).
inline GridDensity gamma_map(const GridDensity& rho, const GridFunction& V, const AbpParams& params)
{
    if (V.grid != rho.grid()) throw ParameterError("gamma_map: potential and density live on different grids");
    GridFunction w = detail::scaled(V, params.beta);
    if (params.alpha > 0.0) w += extend_along_x2(bias_potential(rho, params), V.grid);
    else params.validate();
    return GridDensity::gibbs(w);
}

inline GridDensity gamma_map(const GridDensity& rho, const Potential& V, const AbpParams& params)
{
    return gamma_map(rho, V.values(), params);
}

/// Unregularized minimizer, normalized exp(-beta V + alpha/(alpha+1) A), where
/// A is the free energy of beta V. alpha = infinity gives exp(-beta V + A).
inline GridDensity closed_form_minimizer(const GridFunction& V, const AbpParams& params)
{
    params.validate();
    if (params.epsilon != 0.0 && !params.alpha_is_infinite())
        throw ParameterError("closed_form_minimizer: requires epsilon = 0 (or alpha = infinity)");
    const GridFunction bv = detail::scaled(V, params.beta);
    const double w = params.alpha_is_infinite() ? 1.0 : params.alpha / (params.alpha + 1.0);
    GridFunction A = free_energy_A(bv);
    A *= -w;
    return GridDensity::gibbs(bv + extend_along_x2(A, V.grid));
}

inline GridDensity closed_form_minimizer(const Potential& V, const AbpParams& params)
{
    return closed_form_minimizer(V.values(), params);
}

struct FixedPointOptions {
    double tol = 1e-10;
    int max_iter = 10000;
    std::optional<double> damping;         // default: min(1, 2/(alpha+2))
    std::optional<GridDensity> initial;  // default: uniform
    bool record_residuals = true;
};

struct FixedPointReport {
    int iterations = 0;
    double final_residual_sup = 0.0;
    double damping_used = 1.0;
    bool converged = false;
    double tolerance = 0.0;
    std::vector<double> residual_trace;
};

struct FixedPointResult {
    GridDensity rho;
    FixedPointReport report;
};

inline double default_damping(double alpha) { return std::min(1.0, 2.0 / (alpha + 2.0)); }

/// Damped iteration rho <- (1 - theta) rho + theta Gamma(rho) until
/// ||Gamma(rho) - rho||_inf <= tol. Non-convergence is reported, not thrown.
inline FixedPointResult fixed_point_solve(const GridFunction& V, const AbpParams& params, const FixedPointOptions& opt = {})
{
    detail::require_finite_alpha(params, "fixed_point_solve");
    if (!(params.epsilon > 0.0)) throw ParameterError("fixed_point_solve: epsilon must be positive");
    const double theta = opt.damping.value_or(default_damping(params.alpha));
    if (!(theta > 0.0 && theta <= 1.0)) throw ParameterError("fixed_point_solve: damping must lie in (0, 1]");
    if (!(opt.tol > 0.0) || opt.max_iter < 0) throw ParameterError("fixed_point_solve: bad tolerance or iteration cap");

    GridDensity rho = opt.initial ? *opt.initial : GridDensity::uniform(V.grid);
    if (rho.grid() != V.grid) throw ParameterError("fixed_point_solve: initial density on the wrong grid");

    FixedPointReport rep;
    rep.damping_used = theta;
    rep.tolerance = opt.tol;
    GridDensity g = gamma_map(rho, V, params);
    double r = (g.function() - rho.function()).sup_norm();
    if (opt.record_residuals) rep.residual_trace.push_back(r);
    while (r > opt.tol && rep.iterations < opt.max_iter && std::isfinite(r)) {
        GridFunction next = rho.function();
        for (std::size_t i = 0; i < next.values.size(); ++i) next.values[i] = (1.0 - theta) * next.values[i] + theta * g[i];
        rho = GridDensity::normalize(std::move(next));
        g = gamma_map(rho, V, params);
        r = (g.function() - rho.function()).sup_norm();
        ++rep.iterations;
        if (opt.record_residuals) rep.residual_trace.push_back(r);
    }
    rep.final_residual_sup = r;
    rep.converged = r <= opt.tol;
    return {std::move(rho), std::move(rep)};
}

inline FixedPointResult fixed_point_solve(const Potential& V, const AbpParams& params, const FixedPointOptions& opt = {})
{
    return fixed_point_solve(V.values(), params, opt);
}

struct SandwichGap {
    double lower = 0.0;   // H(rho | rho*)
    double middle = 0.0;  // F(rho) - F(rho*)
    double upper = 0.0;   // H(rho | Gamma(rho))

    bool ordered(double tol) const { return lower <= middle + tol && middle <= upper + tol; }
};

/// The three sandwich terms. The middle one is evaluated as
///   H(rho|rho*) + alpha H(g|g*) + int (rho - rho*) (l* - mean l*),
/// g = K * rho^1, l* = ln rho* + beta V + alpha K * ln g*, which equals
/// F(rho) - F(rho*) exactly but keeps full relative accuracy near rho*.
/// The last integral vanishes when rho* is an exact fixed point.
inline SandwichGap sandwich_gap(const GridDensity& rho, const GridFunction& V, const AbpParams& params, const GridDensity& rho_star)
{
    detail::require_finite_alpha(params, "sandwich_gap");
    if (rho.grid() != V.grid || rho_star.grid() != V.grid) throw ParameterError("sandwich_gap: grid mismatch");
    const PeriodicGrid& grid = V.grid;
    SandwichGap s;
    s.lower = relative_entropy(rho, rho_star);
    s.upper = relative_entropy(rho, gamma_map(rho, V, params));

    double smoothing = 0.0;
    GridFunction ell(grid);
    for (std::size_t i = 0; i < ell.values.size(); ++i) {
        if (!(rho_star[i] > 0.0)) throw DomainError("sandwich_gap: reference density vanishes");
        ell.values[i] = std::log(rho_star[i]) + params.beta * V.values[i];
    }
    if (params.alpha > 0.0) {
        const GridDensity g = detail::smoothed_marginal(rho, params);
        const GridDensity g_star = detail::smoothed_marginal(rho_star, params);
        smoothing = params.alpha * relative_entropy(g, g_star);
        GridFunction b = detail::smoothed_log(g_star, params);
        b *= params.alpha;
        ell += extend_along_x2(b, grid);
    }
    const double mean_ell = ell.integral();
    double residual = 0.0;
    for (std::size_t i = 0; i < ell.values.size(); ++i) residual += (rho[i] - rho_star[i]) * (ell.values[i] - mean_ell);
    s.middle = s.lower + smoothing + residual * grid.cell_volume();
    return s;
}

inline SandwichGap sandwich_gap(const GridDensity& rho, const Potential& V, const AbpParams& params, const GridDensity& rho_star)
{
    return sandwich_gap(rho, V.values(), params, rho_star);
}

/// Potential V(x1, x2) = (K * B)(x1) + w(x2) on a 2D grid; its free energy is
/// K * B up to a constant.
inline GridFunction preimage_potential(const GridFunction& B, const GridFunction& w, const WrappedGaussianKernel& kernel)
{
    if (B.grid.dim() != 1 || w.grid.dim() != 1) throw ParameterError("preimage_potential: B and w must be 1D");
    const GridFunction kb = convolve(kernel, B);
    const PeriodicGrid g = PeriodicGrid::plane(B.grid.points(0), w.grid.points(0));
    GridFunction V(g);
    for (int i0 = 0; i0 < g.points(0); ++i0)
        for (int i1 = 0; i1 < g.points(1); ++i1)
            V.values[g.index(i0, i1)] = kb.values[static_cast<std::size_t>(i0)] + w.values[static_cast<std::size_t>(i1)];
    return V;
}

struct AlphaLimit {
    double entropy = 0.0;  // H(rho* | rho*_{eps,alpha})
    FixedPointReport report;
    std::optional<double> bound;  // osc(B) sqrt(int A / (2 alpha)) when B is given
};

/// Distance of the regularized minimizer from the alpha = infinity limit
/// exp(-beta V + A). With a kernel preimage B of A, also the explicit bound
/// 2 min_c ||B - c||_inf * TV-Pinsker term.
inline AlphaLimit alpha_limit_entropy(const GridFunction& V, const AbpParams& params, const std::optional<GridFunction>& kernel_preimage_B = std::nullopt,
                                      const FixedPointOptions& opt = {})
{
    AbpParams inf = params;
    inf.alpha = AbpParams::alpha_infinity;
    const GridDensity limit = closed_form_minimizer(V, inf);
    FixedPointResult fp = fixed_point_solve(V, params, opt);
    AlphaLimit out;
    out.entropy = relative_entropy(limit, fp.rho);
    out.report = std::move(fp.report);
    if (kernel_preimage_B && params.alpha > 0.0) {
        const GridFunction A = free_energy_A(detail::scaled(V, params.beta));
        out.bound = kernel_preimage_B->oscillation() * std::sqrt(std::max(A.integral(), 0.0) / (2.0 * params.alpha));
    }
    return out;
}

inline AlphaLimit alpha_limit_entropy(const Potential& V, const AbpParams& params, const std::optional<GridFunction>& kernel_preimage_B = std::nullopt,
                                      const FixedPointOptions& opt = {})
{
    return alpha_limit_entropy(V.values(), params, kernel_preimage_B, opt);
}

}  // namespace abp
