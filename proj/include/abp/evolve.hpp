#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "abp/kinetic.hpp"
#include "abp/overdamped.hpp"
#include "abp/schedule.hpp"

namespace abp {

struct DiagnosticsRow {
    double t = 0.0;
    double alpha = 0.0;
    double free_energy = 0.0;       // F_{eps,alpha(t)}(rho_t); x-marginal for kinetic runs
    double free_energy_star = 0.0;  // F_{eps,alpha(t)}(rho*)
    SandwichGap sandwich;           // middle = F - F*
    double fisher = 0.0;            // I(rho_t | Gamma(rho_t))
    double tv = 0.0;                // TV(rho_t, rho*)
    std::optional<double> envelope;                // (F - F*) sqrt(t+1) / ln(t+2), moving schedules
    std::optional<double> extended_free_energy;    // kinetic runs
};

struct DiagnosticsTrace {
    std::vector<DiagnosticsRow> rows;

    std::vector<double> times() const
    {
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r.t);
        return out;
    }
    std::vector<double> excess() const
    {
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r.sandwich.middle);
        return out;
    }
    /// Largest violation of lower <= middle <= upper over the trace.
    double sandwich_violation() const
    {
        double v = 0.0;
        for (const auto& r : rows) v = std::max({v, r.sandwich.lower - r.sandwich.middle, r.sandwich.middle - r.sandwich.upper});
        return v;
    }
};

struct EvolveOptions {
    std::optional<double> dt;  // default: integrator's stability estimate at t = 0
    int record_every = 1;
    double reference_tol = 1e-12;  // fixed-point tolerance for rho*_{eps,alpha(t)}
    int reference_max_iter = 100000;
    bool keep_partial = false;     // on a step failure return the partial trace instead of throwing
};

template <class State>
struct EvolveResult {
    DiagnosticsTrace trace;
    State final_state;
    double dt = 0.0;
    long steps = 0;
    std::optional<std::string> failure;
};

namespace detail {

/// rho*_{eps,alpha} per distinct alpha, warm-started from the previous solve.
class ReferenceCache {
public:
    ReferenceCache(const GridFunction& V, AbpParams params, double tol, int max_iter) : V_(V), params_(params)
    {
        opt_.tol = tol;
        opt_.max_iter = max_iter;
        opt_.record_residuals = false;
    }

    const GridDensity& at(double alpha)
    {
        if (rho_ && alpha == alpha_) return *rho_;
        AbpParams p = params_;
        p.alpha = alpha;
        FixedPointOptions o = opt_;
        if (rho_) o.initial = *rho_;
        FixedPointResult r = fixed_point_solve(V_, p, o);
        if (!r.report.converged)
            throw Error("reference fixed point did not converge at alpha = " + std::to_string(alpha) + " (residual " +
                        std::to_string(r.report.final_residual_sup) + ")");
        rho_ = std::move(r.rho);
        alpha_ = alpha;
        return *rho_;
    }

private:
    const GridFunction& V_;
    AbpParams params_;
    FixedPointOptions opt_;
    std::optional<GridDensity> rho_;
    double alpha_ = 0.0;
};

inline DiagnosticsRow diagnose(const GridDensity& rho, double t, const GridFunction& V, AbpParams p, const AlphaSchedule& schedule, ReferenceCache& refs)
{
    DiagnosticsRow row;
    row.t = t;
    row.alpha = alpha_at(schedule, t);
    p.alpha = row.alpha;
    const GridDensity& star = refs.at(row.alpha);
    row.free_energy = free_energy(rho, V, p);
    row.free_energy_star = free_energy(star, V, p);
    row.sandwich = sandwich_gap(rho, V, p, star);
    row.fisher = fisher_information(rho, gamma_map(rho, V, p));
    row.tv = distances(rho, star).tv;
    if (!schedule.is_constant()) row.envelope = envelope_statistic(t, row.sandwich.middle);
    return row;
}

template <class State, class Integrator, class Density, class Extra>
EvolveResult<State> run(Integrator& integ, const State& initial, const GridFunction& V, const AbpParams& params, const AlphaSchedule& schedule,
                        double t_end, double default_dt, const EvolveOptions& opt, Density&& density_of, Extra&& extra)
{
    if (!(t_end >= 0.0)) throw ParameterError("evolve: t_end must be >= 0");
    if (opt.record_every < 1) throw ParameterError("evolve: record_every must be >= 1");
    validate_schedule(schedule, t_end);
    ReferenceCache refs(V, params, opt.reference_tol, opt.reference_max_iter);
    EvolveResult<State> res{{}, initial, opt.dt.value_or(default_dt), 0, std::nullopt};
    if (!(res.dt > 0.0)) throw ParameterError("evolve: dt must be positive");
    const long steps = t_end == 0.0 ? 0 : std::max(1L, std::lround(t_end / res.dt));
    if (steps > 0) res.dt = t_end / static_cast<double>(steps);

    auto record = [&](const State& s) {
        DiagnosticsRow row = diagnose(density_of(s), s.t, V, params, schedule, refs);
        extra(row, s);
        res.trace.rows.push_back(row);
    };
    integ.set_alpha(alpha_at(schedule, 0.0));
    record(res.final_state);
    for (long n = 0; n < steps; ++n) {
        try {
            integ.set_alpha(alpha_at(schedule, res.final_state.t));
            res.final_state = integ.step(res.final_state, res.dt);
        } catch (const Error& e) {
            if (!opt.keep_partial) throw;
            res.failure = e.what();
            break;
        }
        // exact grid time avoids drift from repeated addition
        res.final_state.t = static_cast<double>(n + 1) * res.dt;
        res.steps = n + 1;
        if ((n + 1) % opt.record_every == 0 || n + 1 == steps) record(res.final_state);
    }
    return res;
}

}  // namespace detail

/// Overdamped grid flow with a (possibly moving) alpha schedule.
inline EvolveResult<OverdampedState> evolve(const OverdampedState& initial, const GridFunction& V, const AbpParams& params, const AlphaSchedule& schedule,
                                            double t_end, const EvolveOptions& opt = {})
{
    AbpParams p = params;
    p.alpha = alpha_at(schedule, 0.0);
    OverdampedIntegrator integ(V, p);
    const double dt0 = opt.dt ? *opt.dt : integ.default_dt(initial.rho);
    return detail::run(integ, initial, V, params, schedule, t_end, dt0, opt, [](const OverdampedState& s) -> const GridDensity& { return s.rho; },
                       [](DiagnosticsRow&, const OverdampedState&) {});
}

/// Kinetic grid flow; diagnostics use the x-marginal plus the extended free energy.
inline EvolveResult<KineticState> evolve(const KineticState& initial, const GridFunction& V, const AbpParams& params, const AlphaSchedule& schedule,
                                         double t_end, const EvolveOptions& opt = {}, KineticOptions kopt = {})
{
    AbpParams p = params;
    p.alpha = alpha_at(schedule, 0.0);
    kopt.modes = initial.mode_count();
    kopt.v_max = initial.v_max;
    KineticIntegrator integ(V, p, kopt);
    const double dt0 = opt.dt ? *opt.dt : integ.default_dt(initial);
    return detail::run(
        integ, initial, V, params, schedule, t_end, dt0, opt, [](const KineticState& s) { return KineticIntegrator::marginal_density(s); },
        [&](DiagnosticsRow& row, const KineticState& s) {
            AbpParams q = params;
            q.alpha = row.alpha;
            row.extended_free_energy = kinetic_free_energy(s, V, q);
        });
}

}  // namespace abp
