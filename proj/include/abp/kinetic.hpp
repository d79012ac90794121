#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "abp/overdamped.hpp"

namespace abp {

/// Normalized Hermite functions h_m(s) = He_m(s) / sqrt(m!) for m < count.
inline std::vector<double> hermite_values(double s, int count)
{
    std::vector<double> h(static_cast<std::size_t>(std::max(count, 1)));
    h[0] = 1.0;
    if (count > 1) h[1] = s;
    for (int m = 1; m + 1 < count; ++m)
        h[static_cast<std::size_t>(m + 1)] = (s * h[static_cast<std::size_t>(m)] - std::sqrt(static_cast<double>(m)) * h[static_cast<std::size_t>(m - 1)]) /
                                             std::sqrt(static_cast<double>(m + 1));
    return h;
}

/// Phase-space density on T x [-v_max, v_max], sampled at nv equally spaced
/// velocities including both ends. Row-major: index = ix * nv + iv.
struct PhaseSpaceDensity {
    PeriodicGrid x_grid;
    int nv = 0;
    double v_max = 0.0;
    std::vector<double> values;

    double dv() const { return 2.0 * v_max / (nv - 1); }
    double velocity(int iv) const { return -v_max + iv * dv(); }
    double weight(int iv) const { return (iv == 0 || iv == nv - 1 ? 0.5 : 1.0) * dv(); }
    double at(int ix, int iv) const { return values[static_cast<std::size_t>(ix) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(iv)]; }

    double mass() const
    {
        double s = 0.0;
        for (int ix = 0; ix < x_grid.points(0); ++ix)
            for (int iv = 0; iv < nv; ++iv) s += at(ix, iv) * weight(iv);
        return s * x_grid.spacing(0);
    }

    double peak() const { return *std::max_element(values.begin(), values.end()); }

    /// Largest |nu| on the two boundary velocity rows relative to the peak.
    double boundary_ratio() const
    {
        double b = 0.0;
        for (int ix = 0; ix < x_grid.points(0); ++ix) b = std::max({b, std::abs(at(ix, 0)), std::abs(at(ix, nv - 1))});
        return b / peak();
    }

    GridFunction x_marginal() const
    {
        GridFunction out(x_grid);
        for (int ix = 0; ix < x_grid.points(0); ++ix) {
            double s = 0.0;
            for (int iv = 0; iv < nv; ++iv) s += at(ix, iv) * weight(iv);
            out.values[static_cast<std::size_t>(ix)] = s;
        }
        return out;
    }

    std::vector<double> v_marginal() const
    {
        std::vector<double> out(static_cast<std::size_t>(nv), 0.0);
        for (int ix = 0; ix < x_grid.points(0); ++ix)
            for (int iv = 0; iv < nv; ++iv) out[static_cast<std::size_t>(iv)] += at(ix, iv) * x_grid.spacing(0);
        return out;
    }
};

/// Kinetic state in a Hermite basis in velocity:
///   nu(x, v) = sum_m a_m(x) h_m(sqrt(beta) v) g(v),  g = N(0, 1/beta) density.
/// The x-marginal is a_0; the first moment of v is a_1 / sqrt(beta).
struct KineticState {
    std::vector<GridFunction> modes;
    double t = 0.0;
    double v_max = 0.0;
    double beta = 1.0;

    int mode_count() const { return static_cast<int>(modes.size()); }
    const GridFunction& x_marginal() const { return modes.front(); }

    /// rho (x) N(0, 1/beta).
    static KineticState local_equilibrium(const GridDensity& rho, int mode_count, double v_max, double beta)
    {
        if (rho.grid().dim() != 1) throw ParameterError("KineticState: kinetic grids are one-dimensional in x");
        if (mode_count < 2) throw ParameterError("KineticState: need at least two Hermite modes");
        KineticState s;
        s.modes.assign(static_cast<std::size_t>(mode_count), GridFunction(rho.grid()));
        s.modes[0] = rho.function();
        s.v_max = v_max;
        s.beta = beta;
        return s;
    }

    /// rho (x) N(u, 1/beta): coefficients (sqrt(beta) u)^m / sqrt(m!).
    static KineticState shifted_velocity(const GridDensity& rho, double u, int mode_count, double v_max, double beta)
    {
        KineticState s = local_equilibrium(rho, mode_count, v_max, beta);
        const double tau = std::sqrt(beta) * u;
        double c = 1.0;
        for (int m = 1; m < mode_count; ++m) {
            c *= tau / std::sqrt(static_cast<double>(m));
            s.modes[static_cast<std::size_t>(m)] = c * rho.function();
        }
        return s;
    }

    /// Projects a sampled phase-space density onto the first mode_count modes.
    static KineticState project(const PhaseSpaceDensity& nu, int mode_count, double beta)
    {
        KineticState s;
        s.modes.assign(static_cast<std::size_t>(mode_count), GridFunction(nu.x_grid));
        s.v_max = nu.v_max;
        s.beta = beta;
        const double sb = std::sqrt(beta);
        for (int iv = 0; iv < nu.nv; ++iv) {
            const auto h = hermite_values(sb * nu.velocity(iv), mode_count);
            for (int ix = 0; ix < nu.x_grid.points(0); ++ix)
                for (int m = 0; m < mode_count; ++m)
                    s.modes[static_cast<std::size_t>(m)].values[static_cast<std::size_t>(ix)] += nu.at(ix, iv) * h[static_cast<std::size_t>(m)] * nu.weight(iv);
        }
        return s;
    }

    PhaseSpaceDensity phase_space(int nv) const
    {
        if (nv < 3) throw ParameterError("phase_space: need at least three velocity points");
        PhaseSpaceDensity d{modes[0].grid, nv, v_max, {}};
        const int nx = d.x_grid.points(0);
        d.values.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(nv), 0.0);
        const double sb = std::sqrt(beta);
        const double gnorm = std::sqrt(beta / (2.0 * std::numbers::pi));
        for (int iv = 0; iv < nv; ++iv) {
            const double s = sb * d.velocity(iv);
            const auto h = hermite_values(s, mode_count());
            const double g = gnorm * std::exp(-0.5 * s * s);
            for (int ix = 0; ix < nx; ++ix) {
                double acc = 0.0;
                for (int m = mode_count() - 1; m >= 0; --m) acc += modes[static_cast<std::size_t>(m)].values[static_cast<std::size_t>(ix)] * h[static_cast<std::size_t>(m)];
                d.values[static_cast<std::size_t>(ix) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(iv)] = acc * g;
            }
        }
        return d;
    }

    /// Mass carried by |v| > v_max, summed as h sum_x (|upper tail(x)| + |lower tail(x)|).
    /// Uses int_c^inf He_m g ds = He_{m-1}(c) g(c) for m >= 1.
    double boundary_mass() const
    {
        const double c = std::sqrt(beta) * v_max;
        const double gc = std::exp(-0.5 * c * c) / std::sqrt(2.0 * std::numbers::pi);
        const auto hp = hermite_values(c, mode_count());
        const auto hm = hermite_values(-c, mode_count());
        std::vector<double> up(modes.size()), dn(modes.size());
        up[0] = dn[0] = 0.5 * std::erfc(c / std::sqrt(2.0));
        for (std::size_t m = 1; m < modes.size(); ++m) {
            const double r = gc / std::sqrt(static_cast<double>(m));
            up[m] = hp[m - 1] * r;
            dn[m] = -hm[m - 1] * r;
        }
        double total = 0.0;
        for (std::size_t ix = 0; ix < modes[0].values.size(); ++ix) {
            double a = 0.0, b = 0.0;
            for (std::size_t m = 0; m < modes.size(); ++m) {
                a += modes[m].values[ix] * up[m];
                b += modes[m].values[ix] * dn[m];
            }
            total += std::abs(a) + std::abs(b);
        }
        return total * modes[0].grid.cell_volume();
    }
};

struct KineticOptions {
    int modes = 32;
    double v_max = 0.0;  // 0: 8 / sqrt(beta)
    double boundary_tolerance = 1e-10;
};

/// Kinetic Langevin Fokker-Planck with unit friction,
///   d_t nu = -v d_x nu + d_v(W' nu) + d_v(v nu) + beta^{-1} d_vv nu,
/// W = V + bias(nu^1)/beta, in the Hermite basis. Per Fourier mode k the
/// streaming + friction part is a constant matrix L_k which is exponentiated
/// exactly; the force coupling is explicit with exponential weights.
class KineticIntegrator {
public:
    KineticIntegrator(GridFunction V, AbpParams params, KineticOptions opt = {})
        : overdamped_(std::move(V), params), opt_(opt)
    {
        if (overdamped_.potential().grid.dim() != 1) throw ParameterError("KineticIntegrator: kinetic dynamics are restricted to d = 1");
        if (opt_.modes < 2) throw ParameterError("KineticIntegrator: need at least two Hermite modes");
        if (opt_.v_max == 0.0) opt_.v_max = 8.0 / std::sqrt(params.beta);
        if (!(opt_.v_max > 0.0)) throw ParameterError("KineticIntegrator: v_max must be positive");
    }

    const AbpParams& params() const { return overdamped_.params(); }
    const KineticOptions& options() const { return opt_; }
    void set_alpha(double alpha) { overdamped_.set_alpha(alpha); }

    KineticState equilibrium_state(const GridDensity& rho) const
    {
        return KineticState::local_equilibrium(rho, opt_.modes, opt_.v_max, params().beta);
    }

    /// Explicit force coupling limit: 0.25 / (sqrt(beta M) ||W'||_inf), capped at 0.05.
    double default_dt(const KineticState& s) const
    {
        const double w = overdamped_.drift_field(marginal_density(s))[0].sup_norm();
        return std::min(0.05, 0.25 / (std::sqrt(params().beta * opt_.modes) * w + 1e-12));
    }

    KineticState step(const KineticState& s, double dt) const
    {
        if (!(dt >= 0.0) || !std::isfinite(dt)) throw ParameterError("kinetic_step: dt must be >= 0");
        if (s.mode_count() != opt_.modes || s.modes[0].grid != overdamped_.potential().grid)
            throw ParameterError("kinetic_step: state does not match the integrator");
        if (dt == 0.0) return s;
        const PeriodicGrid& g = s.modes[0].grid;
        const spectral::Plan& plan = spectral::plan_for(g);
        const Propagators& prop = propagators(dt);
        const int M = opt_.modes;
        const double beta = params().beta;
        const GridFunction force = overdamped_.drift_field(marginal_density(s))[0];

        std::vector<std::vector<spectral::Complex>> a_hat(static_cast<std::size_t>(M)), n_hat(static_cast<std::size_t>(M));
        GridFunction tmp(g);
        for (int m = 0; m < M; ++m) {
            a_hat[static_cast<std::size_t>(m)] = plan.forward(s.modes[static_cast<std::size_t>(m)].values);
            if (m == 0) {
                n_hat[0].assign(plan.spectrum_size(), spectral::Complex(0.0, 0.0));
                continue;
            }
            const double c = -std::sqrt(beta * m);
            const auto& prev = s.modes[static_cast<std::size_t>(m - 1)].values;
            for (std::size_t i = 0; i < tmp.values.size(); ++i) tmp.values[i] = c * force.values[i] * prev[i];
            n_hat[static_cast<std::size_t>(m)] = plan.forward(tmp.values);
        }

        Eigen::VectorXcd a(M), n(M), out(M);
        std::vector<std::vector<spectral::Complex>> next_hat(static_cast<std::size_t>(M), std::vector<spectral::Complex>(plan.spectrum_size()));
        for (std::size_t k = 0; k < plan.spectrum_size(); ++k) {
            for (int m = 0; m < M; ++m) {
                a(m) = a_hat[static_cast<std::size_t>(m)][k];
                n(m) = n_hat[static_cast<std::size_t>(m)][k];
            }
            out = prop.exp[k] * a + prop.phi[k] * n;
            for (int m = 0; m < M; ++m) next_hat[static_cast<std::size_t>(m)][k] = out(m);
        }
        KineticState next = s;
        next.t = s.t + dt;
        for (int m = 0; m < M; ++m) next.modes[static_cast<std::size_t>(m)] = GridFunction(g, plan.backward(next_hat[static_cast<std::size_t>(m)]));
        // mass is exactly conserved by the scheme; pin it against roundoff drift
        const double mass = next.modes[0].integral();
        for (auto& mode : next.modes) mode *= 1.0 / mass;
        for (double v : next.modes[0].values)
            if (!std::isfinite(v) || v < -detail::positivity_slack)
                throw StepSizeError("kinetic_step: negative x-marginal " + std::to_string(v) + ", reduce dt");
        const double tail = next.boundary_mass();
        if (tail > opt_.boundary_tolerance) {
            std::ostringstream msg;
            msg << "kinetic_step: mass beyond |v| = v_max is " << std::scientific << std::setprecision(3) << tail
                << ", raise v_max or the mode count";
            throw TruncationError(msg.str());
        }
        return next;
    }

    /// Clipped x-marginal as a density (drives the bias).
    static GridDensity marginal_density(const KineticState& s)
    {
        return detail::restore_density(s.modes[0], "kinetic_step");
    }

private:
    struct Propagators {
        std::vector<Eigen::MatrixXcd> exp;
        std::vector<Eigen::MatrixXcd> phi;  // dt * phi_1(L dt)
    };

    const Propagators& propagators(double dt) const
    {
        auto it = cache_.find(dt);
        if (it != cache_.end()) return it->second;
        const PeriodicGrid& g = overdamped_.potential().grid;
        const spectral::Plan& plan = spectral::plan_for(g);
        const int M = opt_.modes;
        const double sb = std::sqrt(params().beta);
        Propagators p;
        for (const spectral::Wave& w : plan.waves()) {
            const double k = w.nyquist0 ? 0.0 : static_cast<double>(w.k0);
            const std::complex<double> c(0.0, -2.0 * std::numbers::pi * k / sb);
            Eigen::MatrixXcd aug = Eigen::MatrixXcd::Zero(2 * M, 2 * M);
            for (int i = 0; i < M; ++i) {
                aug(i, i) = -static_cast<double>(i) * dt;
                if (i > 0) aug(i, i - 1) = c * std::sqrt(static_cast<double>(i)) * dt;
                if (i + 1 < M) aug(i, i + 1) = c * std::sqrt(static_cast<double>(i + 1)) * dt;
                aug(i, M + i) = dt;
            }
            const Eigen::MatrixXcd e = aug.exp();
            p.exp.push_back(e.topLeftCorner(M, M));
            p.phi.push_back(e.topRightCorner(M, M));
        }
        return cache_.emplace(dt, std::move(p)).first->second;
    }

    OverdampedIntegrator overdamped_;
    KineticOptions opt_;
    mutable std::map<double, Propagators> cache_;
};

inline KineticState kinetic_step(const KineticState& s, const GridFunction& V, const AbpParams& params, double dt, const KineticOptions& opt = {})
{
    KineticOptions o = opt;
    o.modes = s.mode_count();
    o.v_max = s.v_max;
    return KineticIntegrator(V, params, o).step(s, dt);
}

/// Extended free energy F(nu^1) + H(nu | nu^1 (x) g) - ln(2 pi / beta) / 2,
/// i.e. int nu ln nu + beta int (V + v^2/2) nu + alpha H(K * nu^1).
/// Velocity integrals use a trapezoid rule in s = sqrt(beta) v over |s| <= 10.
inline double kinetic_free_energy(const KineticState& s, const GridFunction& V, const AbpParams& params)
{
    const GridDensity rho = KineticIntegrator::marginal_density(s);
    double h = 0.0;
    if (s.mode_count() > 1) {
        constexpr int ns = 401;
        constexpr double smax = 10.0;
        const double ds = 2.0 * smax / (ns - 1);
        std::vector<std::vector<double>> herm;
        std::vector<double> w;
        for (int j = 0; j < ns; ++j) {
            const double x = -smax + j * ds;
            herm.push_back(hermite_values(x, s.mode_count()));
            w.push_back((j == 0 || j == ns - 1 ? 0.5 : 1.0) * ds * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi));
        }
        for (std::size_t ix = 0; ix < rho.values().size(); ++ix) {
            const double a0 = s.modes[0].values[ix];
            if (!(a0 > 0.0)) continue;
            double inner = 0.0;
            for (int j = 0; j < ns; ++j) {
                double r = 0.0;
                for (std::size_t m = 0; m < s.modes.size(); ++m) r += s.modes[m].values[ix] * herm[static_cast<std::size_t>(j)][m];
                r /= a0;
                inner += w[static_cast<std::size_t>(j)] * (r > 0.0 ? detail::bregman_phi(r) : 1.0);
            }
            h += rho[ix] * inner;
        }
        h *= rho.grid().cell_volume();
    }
    return free_energy(rho, V, params) + h - 0.5 * std::log(2.0 * std::numbers::pi / params.beta);
}

}  // namespace abp
