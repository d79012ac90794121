#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "abp/free_energy.hpp"

namespace abp {

struct OverdampedState {
    GridDensity rho;
    double t = 0.0;
};

namespace detail {

/// Values within this of zero are roundoff: clipped, mass restored.
inline constexpr double positivity_slack = 1e-10;

inline GridDensity restore_density(GridFunction f, const char* who)
{
    for (double& v : f.values) {
        if (!std::isfinite(v) || v < -positivity_slack)
            throw StepSizeError(std::string(who) + ": negative density " + std::to_string(v) + ", reduce dt");
        if (v < 0.0) v = 0.0;
    }
    return GridDensity::normalize(std::move(f));
}

}  // namespace detail

/// Exponential-Euler integrator for
///   d_t rho = beta^{-1} Lap rho + div(rho grad W),  W = V + bias(rho) / beta.
/// Diffusion is integrated exactly in Fourier space; the drift flux is
/// explicit with the exponential weight (e^{L dt} - 1) / L, so discrete
/// stationary states of the continuous-time semi-discretization are exactly
/// preserved.
class OverdampedIntegrator {
public:
    OverdampedIntegrator(GridFunction V, AbpParams params) : V_(std::move(V)), params_(params)
    {
        params_.validate();
        if (params_.alpha_is_infinite()) throw ParameterError("OverdampedIntegrator: alpha must be finite");
        if (params_.alpha > 0.0 && !(params_.epsilon > 0.0))
            throw ParameterError("OverdampedIntegrator: biased dynamics need epsilon > 0");
        grad_V_ = spectral::gradient(V_);
    }

    const AbpParams& params() const { return params_; }
    const GridFunction& potential() const { return V_; }

    void set_alpha(double alpha)
    {
        AbpParams p = params_;
        p.alpha = alpha;
        p.validate();
        params_ = p;
    }

    /// Effective potential W = V + bias / beta on the full grid.
    GridFunction effective_potential(const GridDensity& rho) const
    {
        GridFunction W = V_;
        if (params_.alpha > 0.0) {
            GridFunction b = extend_along_x2(bias_potential(rho, params_), V_.grid);
            b *= 1.0 / params_.beta;
            W += b;
        }
        return W;
    }

    std::vector<GridFunction> drift_field(const GridDensity& rho) const
    {
        if (params_.alpha == 0.0) return grad_V_;
        return spectral::gradient(effective_potential(rho));
    }

    /// Advective CFL step 0.1 h / (||grad W||_inf + 1e-12).
    double default_dt(const GridDensity& rho) const
    {
        double gmax = 0.0;
        for (const GridFunction& g : drift_field(rho)) gmax = std::max(gmax, g.sup_norm());
        double h = V_.grid.spacing(0);
        if (V_.grid.dim() == 2) h = std::min(h, V_.grid.spacing(1));
        return 0.1 * h / (gmax + 1e-12);
    }

    OverdampedState step(const OverdampedState& s, double dt) const
    {
        if (!(dt >= 0.0) || !std::isfinite(dt)) throw ParameterError("overdamped_step: dt must be >= 0");
        if (s.rho.grid() != V_.grid) throw ParameterError("overdamped_step: state on the wrong grid");
        if (dt == 0.0) return s;
        const PeriodicGrid& g = V_.grid;
        const spectral::Plan& plan = spectral::plan_for(g);
        const auto drift = drift_field(s.rho);

        // flux F = rho grad W, then N = div F
        std::vector<spectral::Complex> div(plan.spectrum_size(), spectral::Complex(0.0, 0.0));
        const auto& waves = plan.waves();
        for (int a = 0; a < g.dim(); ++a) {
            GridFunction flux(g);
            for (std::size_t i = 0; i < flux.values.size(); ++i) flux.values[i] = s.rho[i] * drift[static_cast<std::size_t>(a)].values[i];
            const auto fh = plan.forward(flux.values);
            for (std::size_t k = 0; k < fh.size(); ++k) {
                const int kk = a == 0 ? waves[k].k0 : waves[k].k1;
                const bool nyq = a == 0 ? waves[k].nyquist0 : waves[k].nyquist1;
                if (!nyq) div[k] += spectral::Complex(0.0, two_pi * kk) * fh[k];
            }
        }
        std::vector<spectral::Complex> rh = plan.forward(s.rho.values());
        for (std::size_t k = 0; k < rh.size(); ++k) {
            const double k_sq = static_cast<double>(waves[k].k0) * waves[k].k0 + static_cast<double>(waves[k].k1) * waves[k].k1;
            const double lam = -two_pi * two_pi * k_sq / params_.beta;
            const double e = std::exp(lam * dt);
            const double phi = lam == 0.0 ? dt : std::expm1(lam * dt) / lam;
            rh[k] = e * rh[k] + phi * div[k];
        }
        GridFunction next(g, plan.backward(rh));
        return {detail::restore_density(std::move(next), "overdamped_step"), s.t + dt};
    }

private:
    static constexpr double two_pi = 2.0 * std::numbers::pi;

    GridFunction V_;
    AbpParams params_;
    std::vector<GridFunction> grad_V_;
};

inline OverdampedState overdamped_step(const OverdampedState& s, const GridFunction& V, const AbpParams& params, double dt)
{
    return OverdampedIntegrator(V, params).step(s, dt);
}

inline OverdampedState overdamped_step(const OverdampedState& s, const Potential& V, const AbpParams& params, double dt)
{
    return overdamped_step(s, V.values(), params, dt);
}

/// Rate of free-energy dissipation, I(rho | Gamma(rho)) / beta.
inline double dissipation_rate(const GridDensity& rho, const GridFunction& V, const AbpParams& params)
{
    return fisher_information(rho, gamma_map(rho, V, params)) / params.beta;
}

/// Max over consecutive states of |(F_{n+1} - F_n)/dt + I(rho_n | Gamma(rho_n))/beta|.
/// States must be equally spaced in time.
inline double dissipation_identity_check(const std::vector<OverdampedState>& trace, const GridFunction& V, const AbpParams& params)
{
    if (trace.size() < 2) return 0.0;
    const double dt = trace[1].t - trace[0].t;
    if (!(dt > 0.0)) throw ParameterError("dissipation_identity_check: states must advance in time");
    double worst = 0.0;
    double f_prev = free_energy(trace[0].rho, V, params);
    for (std::size_t n = 0; n + 1 < trace.size(); ++n) {
        const double step = trace[n + 1].t - trace[n].t;
        if (std::abs(step - dt) > 1e-9 * dt) throw ParameterError("dissipation_identity_check: non-uniform time step");
        const double f_next = free_energy(trace[n + 1].rho, V, params);
        const double defect = std::abs((f_next - f_prev) / dt + dissipation_rate(trace[n].rho, V, params));
        worst = std::max(worst, defect);
        f_prev = f_next;
    }
    return worst;
}

inline double dissipation_identity_check(const std::vector<OverdampedState>& trace, const Potential& V, const AbpParams& params)
{
    return dissipation_identity_check(trace, V.values(), params);
}

}  // namespace abp
