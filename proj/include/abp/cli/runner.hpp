#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "abp/cli/config.hpp"
#include "abp/evolve.hpp"
#include "abp/free_energy.hpp"
#include "abp/io.hpp"
#include "abp/kinetic.hpp"
#include "abp/overdamped.hpp"
#include "abp/particles.hpp"
#include "abp/potential.hpp"
#include "abp/schedule.hpp"
#include "abp/toy_gaussian.hpp"

namespace abp::cli {

namespace fs = std::filesystem;
using io::Json;

/// One pass/fail flag of a run. relation is "<=", ">=", "<" or "==";
/// value is compared against threshold.
struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    std::string relation;
    double threshold = 0.0;
    std::string note;
};

inline Check make_check(std::string name, double value, std::string relation, double threshold, std::string note = {})
{
    bool ok = false;
    if (relation == "<=") ok = value <= threshold;
    else if (relation == ">=") ok = value >= threshold;
    else if (relation == "<") ok = value < threshold;
    else if (relation == "==") ok = value == threshold;
    else throw ParameterError("make_check: unknown relation " + relation);
    return {std::move(name), ok, value, std::move(relation), threshold, std::move(note)};
}

struct RunSummary {
    std::string command;
    std::string config_echo;
    Json results = Json::object();
    std::vector<Check> checks;

    bool all_passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }

    Json to_json() const
    {
        Json j;
        j["command"] = command;
        j["config_echo"] = config_echo;
        j["results"] = results;
        Json cs = Json::array();
        for (const auto& c : checks) {
            Json e;
            e["name"] = c.name;
            e["passed"] = c.passed;
            e["value"] = io::number(c.value);
            e["relation"] = c.relation;
            e["threshold"] = io::number(c.threshold);
            if (!c.note.empty()) e["note"] = c.note;
            cs.push_back(std::move(e));
        }
        j["checks"] = std::move(cs);
        j["all_passed"] = all_passed();
        return j;
    }
};

inline RunSummary start_summary(std::string command, const ExperimentConfig& c)
{
    RunSummary s;
    s.command = std::move(command);
    s.config_echo = echo(c);
    return s;
}

struct Problem {
    Potential V;
    std::optional<GridFunction> preimage;  // B with A = K * B, for preimage-2d
};

inline double coefficient(const ProblemConfig& p, std::size_t i, double fallback)
{
    return i < p.coefficients.size() ? p.coefficients[i] : fallback;
}

/// preimage-2d: V = K * B (x1) + w(x2), B = c1 cos(2 pi x1) + c2 cos(4 pi x1),
/// w = c3 cos(2 pi x2); defaults (1, 0.5, 1).
inline Problem make_problem(const ExperimentConfig& c)
{
    const auto& p = c.problem;
    if (p.potential == "file") {
        GridFunction V = io::read_grid_csv(fs::path(p.file));
        return {Potential::tabulated("file:" + p.file, std::move(V)), std::nullopt};
    }
    if (p.potential == "preimage-2d") {
        constexpr double tp = 2.0 * std::numbers::pi;
        const PeriodicGrid line = PeriodicGrid::line(p.points);
        const double c1 = coefficient(p, 0, 1.0), c2 = coefficient(p, 1, 0.5), c3 = coefficient(p, 2, 1.0);
        const GridFunction B = GridFunction::from(line, [&](double x) { return c1 * std::cos(tp * x) + c2 * std::cos(2.0 * tp * x); });
        const GridFunction w = GridFunction::from(line, [&](double x) { return c3 * std::cos(tp * x); });
        GridFunction V = preimage_potential(B, w, WrappedGaussianKernel(c.params.epsilon));
        // the free energy of beta V is beta K * B, so beta B is the preimage
        GridFunction bB = B;
        bB *= c.params.beta;
        return {Potential::tabulated("preimage-2d", std::move(V)), std::move(bB)};
    }
    return {builtin_potential(p.potential, p.coefficients, p.points), std::nullopt};
}

inline GridDensity initial_density(const ExperimentConfig& c, const Potential& V)
{
    const auto& d = c.dynamics;
    if (d.initial == "kernel") return GridDensity::normalize(sample_kernel(WrappedGaussianKernel(d.initial_width), V.grid()));
    if (d.initial == "fixed-point") {
        auto fp = fixed_point_solve(V, c.params, c.fixed_point_options());
        if (!fp.report.converged) throw FitError("initial fixed point did not converge");
        return std::move(fp.rho);
    }
    return GridDensity::uniform(V.grid());
}

inline void write_grid(const fs::path& dir, const std::string& stem, const GridFunction& f, const OutputConfig& out)
{
    for (const auto& fmt : out.formats) {
        if (fmt == "csv") io::write_grid_csv(dir / (stem + ".csv"), f);
        else io::write_grid_binary(dir / (stem + ".bin"), f);
    }
}

inline Json row_json(const DiagnosticsRow& r)
{
    Json j;
    j["t"] = r.t;
    j["alpha"] = r.alpha;
    j["free_energy"] = io::number(r.free_energy);
    j["free_energy_star"] = io::number(r.free_energy_star);
    j["lower"] = io::number(r.sandwich.lower);
    j["excess"] = io::number(r.sandwich.middle);
    j["upper"] = io::number(r.sandwich.upper);
    j["fisher"] = io::number(r.fisher);
    j["tv"] = io::number(r.tv);
    if (r.envelope) j["envelope"] = io::number(*r.envelope);
    if (r.extended_free_energy) j["extended_free_energy"] = io::number(*r.extended_free_energy);
    return j;
}

// ---------------------------------------------------------------- fixed-point

inline RunSummary cmd_fixed_point(const ExperimentConfig& c, const fs::path& dir)
{
    RunSummary s = start_summary("fixed-point", c);
    const Problem prob = make_problem(c);
    const auto fp = fixed_point_solve(prob.V, c.params, c.fixed_point_options());
    write_grid(dir, "rho_star", fp.rho.function(), c.output);
    write_grid(dir, "rho_star_marginal", marginal(fp.rho).function(), c.output);
    s.results["potential"] = prob.V.name();
    s.results["solver"] = io::to_json(fp.report);
    s.results["free_energy"] = io::number(free_energy(fp.rho, prob.V, c.params));
    AbpParams unreg = c.params;
    unreg.epsilon = 0.0;
    s.results["closed_form_sup_gap"] = io::number((fp.rho.function() - closed_form_minimizer(prob.V, unreg).function()).sup_norm());
    s.checks.push_back(make_check("converged", fp.report.final_residual_sup, "<=", fp.report.tolerance,
                                  "sup residual of Gamma(rho) - rho after " + std::to_string(fp.report.iterations) + " iterations"));
    return s;
}

// ---------------------------------------------------------------------- sweep

inline std::optional<RateFit> loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() < 2) return std::nullopt;
    std::vector<double> lx;
    for (double v : x) lx.push_back(std::log(v));
    try {
        return fit_exponential_rate(lx, y, {lx.front(), lx.back()});
    } catch (const FitError&) {
        return std::nullopt;
    }
}

inline RunSummary cmd_sweep(const ExperimentConfig& c, const fs::path& dir)
{
    RunSummary s = start_summary("sweep", c);
    const auto& sw = c.sweep;
    if (sw.values.empty()) throw ConfigError("sweep.values: required for the sweep command");
    const FixedPointOptions fpo = c.fixed_point_options();
    auto out = io::open_out(dir / "sweep.csv");
    const bool eps_axis = sw.axis == "epsilon";
    io::CsvWriter table(out, eps_axis ? std::vector<std::string>{"epsilon", "iterations", "residual", "sup_gap", "h1_gap", "entropy_gamma",
                                                                  "entropy_gamma_over_sqrt_eps", "entropy_star"}
                                      : std::vector<std::string>{"alpha", "iterations", "residual", "entropy", "bound"});
    std::vector<double> xs, metric, h1s;
    bool all_converged = true;
    double ordering = -HUGE_VAL, bound_excess = -HUGE_VAL;
    std::optional<std::string> failure;
    std::optional<Problem> fixed_problem;
    if (!eps_axis) fixed_problem = make_problem(c);

    for (double v : sw.values) {
        ExperimentConfig point = c;
        (eps_axis ? point.params.epsilon : point.params.alpha) = v;
        try {
            if (eps_axis) {
                const Problem prob = make_problem(point);
                AbpParams unreg = point.params;
                unreg.epsilon = 0.0;
                const GridDensity rho0 = closed_form_minimizer(prob.V, unreg);
                const auto fp = fixed_point_solve(prob.V, point.params, fpo);
                if (!fp.report.converged) throw FitError("fixed point did not converge at epsilon = " + io::format_double(v));
                const Distances dist = distances(fp.rho, rho0);
                const double hg = relative_entropy(rho0, gamma_map(rho0, prob.V, point.params));
                const double hs = relative_entropy(rho0, fp.rho);
                table.row({v, double(fp.report.iterations), fp.report.final_residual_sup, dist.sup, dist.h1, hg, hg / std::sqrt(v), hs});
                xs.push_back(v);
                metric.push_back(dist.sup);
                h1s.push_back(dist.h1);
                ordering = std::max(ordering, hs - hg);
            } else {
                const auto lim = alpha_limit_entropy(fixed_problem->V, point.params, fixed_problem->preimage, fpo);
                if (!lim.report.converged) throw FitError("fixed point did not converge at alpha = " + io::format_double(v));
                table.row({v, double(lim.report.iterations), lim.report.final_residual_sup, lim.entropy, lim.bound.value_or(std::nan(""))});
                xs.push_back(v);
                metric.push_back(lim.entropy);
                if (lim.bound) bound_excess = std::max(bound_excess, lim.entropy - *lim.bound);
            }
        } catch (const Error& e) {
            failure = e.what();
            all_converged = false;
            break;
        }
    }
    s.results["axis"] = sw.axis;
    s.results["rows"] = xs.size();
    s.results["partial"] = failure.has_value();
    if (failure) s.results["failure"] = *failure;
    const auto slope = loglog_slope(xs, metric);
    if (slope) s.results["slope"] = io::to_json(*slope);
    if (eps_axis)
        if (const auto h1 = loglog_slope(xs, h1s)) s.results["h1_slope"] = io::to_json(*h1);

    s.checks.push_back(make_check("all_converged", all_converged ? 1.0 : 0.0, "==", 1.0, failure.value_or("")));
    if (eps_axis && !xs.empty())
        s.checks.push_back(make_check("entropy_ordering", ordering, "<=", 1e-10, "max of H(rho0|rho_eps) - H(rho0|Gamma(rho0))"));
    if (!eps_axis && std::isfinite(bound_excess))
        s.checks.push_back(make_check("within_bound", bound_excess, "<=", 0.0, "max of entropy - explicit bound"));
    if (sw.slope_min || sw.slope_max) {
        const double v = slope ? slope->slope : std::nan("");
        if (sw.slope_min) s.checks.push_back(make_check("slope_min", v, ">=", *sw.slope_min, slope ? "" : "slope unavailable"));
        if (sw.slope_max) s.checks.push_back(make_check("slope_max", v, "<=", *sw.slope_max, slope ? "" : "slope unavailable"));
    }
    return s;
}

// --------------------------------------------------------------------- evolve

inline void summarize_grid_trace(RunSummary& s, const DiagnosticsTrace& trace, const ExperimentConfig& c)
{
    const auto& rows = trace.rows;
    s.results["rows"] = rows.size();
    if (!rows.empty()) s.results["terminal"] = row_json(rows.back());
    s.results["sandwich_max_violation"] = io::number(trace.sandwich_violation());
    s.checks.push_back(make_check("sandwich_ordered", trace.sandwich_violation(), "<=", c.dynamics.sandwich_tol,
                                  "max of lower - excess and excess - upper over recorded rows"));
    const AlphaSchedule sched = c.alpha_schedule();
    if (sched.is_constant()) {
        try {
            const auto t = trace.times();
            const auto e = trace.excess();
            const RateFit fit = fit_exponential_rate(t, e, decay_window(t, e));
            s.results["rate_fit"] = io::to_json(fit);
            s.checks.push_back(make_check("rate_negative", fit.slope, "<", 0.0, "slope of ln(F - F*) over the decay window"));
        } catch (const FitError& e) {
            s.results["rate_fit"] = nullptr;
            s.results["rate_fit_note"] = e.what();
        }
    } else {
        const double burn = burn_in_time(c.dynamics.t_end);
        double peak = 0.0, rise = 0.0, prev = HUGE_VAL;
        for (const auto& r : rows) {
            if (r.t < burn || !r.envelope) continue;
            peak = std::max(peak, *r.envelope);
            if (prev != HUGE_VAL) rise = std::max(rise, *r.envelope - prev);
            prev = *r.envelope;
        }
        Json env;
        env["burn_in"] = burn;
        env["max_after_burn_in"] = io::number(peak);
        env["max_increase_after_burn_in"] = io::number(rise);
        s.results["envelope"] = std::move(env);
    }
}

inline RunSummary cmd_evolve(const ExperimentConfig& c, const fs::path& dir)
{
    RunSummary s = start_summary("evolve", c);
    const Problem prob = make_problem(c);
    const auto& d = c.dynamics;
    const AlphaSchedule sched = c.alpha_schedule();
    validate_schedule(sched, d.t_end);
    const GridDensity rho0 = initial_density(c, prob.V);
    s.results["integrator"] = d.integrator;
    s.results["potential"] = prob.V.name();

    std::optional<std::string> failure;
    if (!d.is_particles()) {
        EvolveOptions eo;
        eo.dt = d.dt;
        eo.record_every = d.record_every;
        eo.keep_partial = true;
        auto out = io::open_out(dir / "trace.csv");
        if (d.integrator == "grid-overdamped") {
            const auto res = evolve(OverdampedState{rho0, 0.0}, prob.V.values(), c.params, sched, d.t_end, eo);
            io::write_trace_csv(out, res.trace);
            write_grid(dir, "final_density", res.final_state.rho.function(), c.output);
            s.results["dt"] = res.dt;
            s.results["steps"] = res.steps;
            summarize_grid_trace(s, res.trace, c);
            failure = res.failure;
        } else {
            KineticOptions ko;
            ko.modes = d.modes;
            ko.v_max = d.v_max.value_or(0.0);
            AbpParams p0 = c.params;
            p0.alpha = alpha_at(sched, 0.0);
            const KineticState start = KineticIntegrator(prob.V.values(), p0, ko).equilibrium_state(rho0);
            const auto res = evolve(start, prob.V.values(), c.params, sched, d.t_end, eo, ko);
            io::write_trace_csv(out, res.trace);
            write_grid(dir, "final_density", KineticIntegrator::marginal_density(res.final_state).function(), c.output);
            s.results["dt"] = res.dt;
            s.results["steps"] = res.steps;
            s.results["modes"] = start.mode_count();
            s.results["v_max"] = start.v_max;
            summarize_grid_trace(s, res.trace, c);
            failure = res.failure;
        }
    } else {
        const bool kinetic = d.integrator == "particles-kinetic";
        const std::uint64_t seed = *c.particles.seed;
        ParticleEnsemble e = ParticleEnsemble::sample(rho0, c.particles.n, seed, kinetic, c.params.beta);
        AbpParams ref_params = c.params;
        ref_params.alpha = alpha_at(sched, d.t_end);
        const auto ref = fixed_point_solve(prob.V, ref_params, c.fixed_point_options());
        ParticleRunOptions po;
        po.dt = d.dt.value_or(1e-3);
        po.record_every = d.record_every;
        po.bias_points = c.particles.bias_points;
        const auto run = simulate_particles(std::move(e), prob.V, c.params, sched,
                                            kinetic ? ParticleDynamics::kinetic : ParticleDynamics::overdamped, d.t_end, ref.rho, po);
        auto out = io::open_out(dir / "trace.csv");
        io::write_particle_trace_csv(out, run.rows, !sched.is_constant());
        auto ens = io::open_out(dir / "final_ensemble.csv");
        io::write_ensemble_csv(ens, run.final_state);
        write_grid(dir, "final_kde", kde_marginal(run.final_state, *c.params.kernel(), PeriodicGrid::line(c.particles.bias_points)).function(),
                   c.output);
        s.results["dt"] = run.dt;
        s.results["steps"] = run.steps;
        s.results["particles"] = run.final_state.size();
        s.results["seed"] = seed;
        s.results["reference"] = io::to_json(ref.report);
        if (!run.rows.empty()) {
            const auto& last = run.rows.back();
            Json t;
            t["t"] = last.t;
            t["alpha"] = last.alpha;
            t["tv_kde"] = io::number(last.diag.tv_kde);
            t["tv_kde_smoothed"] = io::number(last.diag.tv_kde_smoothed);
            t["free_energy_est"] = io::number(last.diag.free_energy_est);
            t["ess_x1"] = io::number(last.diag.ess_x1);
            s.results["terminal"] = std::move(t);
        }
        s.checks.push_back(make_check("reference_converged", ref.report.final_residual_sup, "<=", ref.report.tolerance));
        failure = run.failure;
    }
    if (failure) s.results["failure"] = *failure;
    s.checks.insert(s.checks.begin(), make_check("completed", failure ? 0.0 : 1.0, "==", 1.0, failure.value_or("")));
    return s;
}

// ------------------------------------------------------------------------ toy

inline RunSummary cmd_toy(const ExperimentConfig& c, const fs::path& dir)
{
    RunSummary s = start_summary("toy", c);
    const auto& t = c.toy;
    const ToyGaussianParams base{t.sigma0_sq, t.alpha, t.epsilon};
    const double limit = (t.alpha + 1.0) * t.sigma0_sq;
    s.results["limit"] = limit;

    std::optional<double> sigma;
    try {
        sigma = toy_gaussian_sigma(base);
        s.results["sigma_sq"] = *sigma;
        s.checks.push_back(make_check("root_exists", 1.0, "==", 1.0));
    } catch (const DomainError& e) {
        s.results["sigma_sq"] = nullptr;
        s.checks.push_back(make_check("root_exists", 0.0, "==", 1.0, e.what()));
    }

    {
        auto out = io::open_out(dir / "toy_epsilon.csv");
        io::CsvWriter w(out, {"epsilon", "sigma_sq", "gap_to_limit"});
        double last_gap = std::nan("");
        for (double eps : t.epsilon_values) {
            const double sq = toy_gaussian_sigma({t.sigma0_sq, t.alpha, eps});
            last_gap = std::abs(sq - limit);
            w.row({eps, sq, last_gap});
        }
        if (!t.epsilon_values.empty())
            s.checks.push_back(make_check("epsilon_limit", last_gap, "<=", t.limit_tol,
                                          "|sigma^2 - (alpha+1) sigma0^2| at epsilon = " + io::format_double(t.epsilon_values.back())));
    }
    {
        auto out = io::open_out(dir / "toy_alpha.csv");
        io::CsvWriter w(out, {"alpha", "sigma_sq", "sigma_sq_over_alpha_plus_one"});
        for (double a : t.alpha_values) {
            const double sq = toy_gaussian_sigma({t.sigma0_sq, a, t.epsilon});
            w.row({a, sq, sq / (a + 1.0)});
        }
    }

    Json its = Json::array();
    bool all_converged = true;
    double spread = 0.0, lo = HUGE_VAL, hi = -HUGE_VAL;
    for (double u0 : t.starts) {
        const auto it = toy_inverse_iteration(base, u0);
        all_converged = all_converged && it.converged;
        lo = std::min(lo, it.inverse_variance);
        hi = std::max(hi, it.inverse_variance);
        Json j;
        j["start"] = u0;
        j["iterations"] = it.iterations;
        j["converged"] = it.converged;
        j["inverse_variance"] = io::number(it.inverse_variance);
        its.push_back(std::move(j));
    }
    spread = hi - lo;
    s.results["iteration"] = std::move(its);
    s.results["iteration_spread"] = io::number(spread);
    if (t.alpha < 1.0) {
        s.checks.push_back(make_check("iteration_converged", all_converged ? 1.0 : 0.0, "==", 1.0));
        s.checks.push_back(make_check("iteration_agreement", spread, "<=", t.agreement_tol, "max - min of the limits over starts"));
        if (sigma)
            s.checks.push_back(make_check("iteration_matches_root", std::abs(hi - 1.0 / *sigma) * *sigma, "<=", t.agreement_tol,
                                          "relative gap between the iterate and 1/sigma^2"));
    } else {
        s.results["iteration_note"] = "alpha >= 1: the map is not a contraction, no check asserted";
    }
    return s;
}

// --------------------------------------------------------------------- report

/// Prints the checks of an earlier run; true when all of them passed.
inline bool cmd_report(const fs::path& dir, std::ostream& out)
{
    const Json j = io::read_json(dir / "summary.json");
    out << "run " << dir.string() << " (" << j.at("command").get<std::string>() << ")\n";
    for (const auto& c : j.at("checks")) {
        out << (c.at("passed").get<bool>() ? "  PASS " : "  FAIL ") << c.at("name").get<std::string>() << "  value=" << c.at("value").dump()
            << ' ' << c.at("relation").get<std::string>() << ' ' << c.at("threshold").dump();
        if (c.contains("note")) out << "  (" << c.at("note").get<std::string>() << ')';
        out << '\n';
    }
    const bool ok = j.at("all_passed").get<bool>();
    out << (ok ? "all checks passed\n" : "some checks failed\n");
    return ok;
}

/// Runs one subcommand into dir: config.echo, summary.json and the command's
/// own files, plus wall-clock timings in timings.json (kept apart so the
/// other outputs are byte-reproducible).
inline RunSummary run_command(const std::string& command, const ExperimentConfig& c, const fs::path& dir)
{
    using Cmd = std::function<RunSummary(const ExperimentConfig&, const fs::path&)>;
    static const std::map<std::string, Cmd> table{
        {"fixed-point", cmd_fixed_point}, {"sweep", cmd_sweep}, {"evolve", cmd_evolve}, {"toy", cmd_toy}};
    const auto it = table.find(command);
    if (it == table.end()) throw ConfigError("unknown command " + command);
    validate(c);
    fs::create_directories(dir);
    {
        auto out = io::open_out(dir / "config.echo");
        out << echo(c);
    }
    const auto t0 = std::chrono::steady_clock::now();
    RunSummary s = it->second(c, dir);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_json(dir / "summary.json", s.to_json());
    Json timing;
    timing["command"] = command;
    timing["wall_seconds"] = wall;
    io::write_json(dir / "timings.json", timing);
    return s;
}

}  // namespace abp::cli
