#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "abp/evolve.hpp"
#include "test_support.hpp"

using namespace abp;
using abp::testing::two_pi;

namespace {

const PeriodicGrid line = PeriodicGrid::line(256);

GridFunction cosine(double c = 1.0)
{
    return GridFunction::from(line, [c](double x) { return c * std::cos(two_pi * x); });
}

GridFunction double_well()
{
    return GridFunction::from(line, [](double x) { return std::cos(2.0 * two_pi * x) + 0.2 * std::cos(two_pi * x); });
}

AbpParams params(double alpha, double eps, double beta = 1.0) { return AbpParams{alpha, beta, eps, 1}; }

GridDensity kernel_density(double eps) { return GridDensity::normalize(sample_kernel(WrappedGaussianKernel(eps), line)); }

GridDensity solved(const GridFunction& V, const AbpParams& p)
{
    FixedPointOptions opt;
    opt.tol = 1e-13;
    opt.max_iter = 100000;
    auto r = fixed_point_solve(V, p, opt);
    EXPECT_TRUE(r.report.converged);
    return r.rho;
}

std::vector<OverdampedState> trajectory(const OverdampedIntegrator& integ, OverdampedState s, double dt, int steps)
{
    std::vector<OverdampedState> out{s};
    for (int n = 0; n < steps; ++n) out.push_back(s = integ.step(s, dt));
    return out;
}

}  // namespace

TEST(Overdamped, HeatFlowIsExact)
{
    const OverdampedIntegrator integ(GridFunction(line, 0.0), params(0.0, 0.0));
    const auto traj = trajectory(integ, {kernel_density(0.01), 0.0}, 0.01, 5);
    const auto exact = kernel_density(0.01 + 2.0 * 0.05);
    EXPECT_LE((traj.back().rho.function() - exact.function()).sup_norm(), 1e-8);
    EXPECT_NEAR(traj.back().t, 0.05, 1e-15);
    // beta rescales the diffusion coefficient
    const OverdampedIntegrator cold(GridFunction(line, 0.0), params(0.0, 0.0, 2.0));
    EXPECT_LE((cold.step({kernel_density(0.01), 0.0}, 0.05).rho.function() - kernel_density(0.06).function()).sup_norm(), 1e-8);
}

TEST(Overdamped, ZeroStepIsIdentity)
{
    const OverdampedIntegrator integ(double_well(), params(2.0, 0.01));
    const OverdampedState s{kernel_density(0.05), 1.5};
    const auto out = integ.step(s, 0.0);
    EXPECT_EQ(out.rho.values(), s.rho.values());
    EXPECT_EQ(out.t, 1.5);
    EXPECT_THROW(integ.step(s, -1.0), ParameterError);
}

TEST(Overdamped, FixedPointIsStationary)
{
    const auto V = double_well();
    for (double alpha : {0.5, 2.0}) {
        const auto p = params(alpha, 0.01);
        const OverdampedIntegrator integ(V, p);
        OverdampedState s{solved(V, p), 0.0};
        const auto start = s.rho;
        const double dt = integ.default_dt(s.rho);
        for (int n = 0; n < 100; ++n) s = integ.step(s, dt);
        EXPECT_LE((s.rho.function() - start.function()).sup_norm(), 1e-9);
    }
}

TEST(Overdamped, MassPositivityAndLyapunov)
{
    const auto V = double_well();
    const auto p = params(2.0, 0.01);
    const OverdampedIntegrator integ(V, p);
    OverdampedState s{kernel_density(0.002), 0.0};
    double f = free_energy(s.rho, V, p);
    for (int n = 0; n < 200; ++n) {
        s = integ.step(s, 1e-3);
        EXPECT_NEAR(s.rho.function().integral(), 1.0, 1e-12);
        for (double v : s.rho.values()) EXPECT_GE(v, 0.0);
        const double fn = free_energy(s.rho, V, p);
        EXPECT_LE(fn, f + 1e-9);
        f = fn;
    }
}

TEST(Overdamped, NegativeDefectAborts)
{
    GridFunction f(line, 1.0);
    f.values[3] = -1e-11;
    EXPECT_NO_THROW(detail::restore_density(f, "t"));
    f.values[3] = -1e-6;
    EXPECT_THROW(detail::restore_density(f, "t"), StepSizeError);
}

TEST(Overdamped, UnbiasedConvergesToGibbs)
{
    const auto V = cosine();
    const auto p = params(0.0, 0.01);
    const auto gibbs = GridDensity::gibbs(V);
    const OverdampedIntegrator integ(V, p);
    OverdampedState s{kernel_density(0.01), 0.0};
    std::vector<double> t, h;
    for (int n = 0; n < 300; ++n) {
        s = integ.step(s, 1e-3);
        t.push_back(s.t);
        h.push_back(relative_entropy(s.rho, gibbs));
    }
    const auto fit = fit_exponential_rate(t, h, {0.05, 0.25});
    EXPECT_LT(fit.slope, 0.0);
    EXPECT_GE(fit.r_squared, 0.99);
    EXPECT_LT(h.back(), 1e-6);
}

TEST(Dissipation, StationaryTrace)
{
    const auto V = double_well();
    const auto p = params(2.0, 0.01);
    const OverdampedIntegrator integ(V, p);
    const auto traj = trajectory(integ, {solved(V, p), 0.0}, 1e-3, 20);
    EXPECT_LE(dissipation_identity_check(traj, V, p), 1e-9);
}

TEST(Dissipation, HeatFlowMatchesAnalyticEntropyRate)
{
    // d/dt H(K_{e0+2t}) via a central difference of the exact solution
    const double t = 0.02, e0 = 0.01, h = 1e-6;
    const double rate = (entropy(kernel_density(e0 + 2 * (t + h))) - entropy(kernel_density(e0 + 2 * (t - h)))) / (2 * h);
    const auto rho = kernel_density(e0 + 2 * t);
    EXPECT_NEAR(-dissipation_rate(rho, GridFunction(line, 0.0), params(0.0, 0.0)), rate, 1e-6);
}

TEST(Dissipation, FirstOrderInTimeStep)
{
    const auto V = double_well();
    const auto p = params(2.0, 0.01);
    const OverdampedIntegrator integ(V, p);
    const OverdampedState s0{kernel_density(0.01), 0.0};
    const double d1 = dissipation_identity_check(trajectory(integ, s0, 2e-3, 50), V, p);
    const double d2 = dissipation_identity_check(trajectory(integ, s0, 1e-3, 100), V, p);
    EXPECT_GE(d1 / d2, 1.5);
    EXPECT_LE(d1 / d2, 2.5);
}

TEST(Kinetic, HermiteRecurrence)
{
    // He_3(s) = s^3 - 3 s, He_4(s) = s^4 - 6 s^2 + 3
    const auto h = hermite_values(1.7, 5);
    EXPECT_NEAR(h[3] * std::sqrt(6.0), std::pow(1.7, 3) - 3 * 1.7, 1e-13);
    EXPECT_NEAR(h[4] * std::sqrt(24.0), std::pow(1.7, 4) - 6 * 1.7 * 1.7 + 3, 1e-13);
}

TEST(Kinetic, PhaseSpaceRoundTrip)
{
    const auto rho = kernel_density(0.05);
    const auto s = KineticState::shifted_velocity(rho, 0.5, 16, 10.0, 1.0);
    const auto nu = s.phase_space(401);
    EXPECT_NEAR(nu.mass(), 1.0, 1e-9);
    EXPECT_LE((nu.x_marginal() - rho.function()).sup_norm(), 1e-9);
    const auto back = KineticState::project(nu, 16, 1.0);
    for (int m = 0; m < 16; ++m) EXPECT_LE((back.modes[m] - s.modes[m]).sup_norm(), 1e-10) << m;
    double mean = 0.0;
    const auto vm = nu.v_marginal();
    for (int j = 0; j < nu.nv; ++j) mean += vm[j] * nu.velocity(j) * nu.weight(j);
    EXPECT_NEAR(mean, 0.5, 1e-9);
}

TEST(Kinetic, EquilibriumIsStationary)
{
    for (double beta : {1.0, 2.0}) {
        const auto V = cosine();
        const auto p = params(1.0, 0.01, beta);
        const KineticIntegrator integ(V, p);
        auto s = integ.equilibrium_state(solved(V, p));
        const auto start = s;
        const double dt = integ.default_dt(s);
        for (int n = 0; n < 100; ++n) s = integ.step(s, dt);
        for (int m = 0; m < s.mode_count(); ++m) EXPECT_LE((s.modes[m] - start.modes[m]).sup_norm(), 1e-7) << m;
        EXPECT_LE(s.boundary_mass(), 1e-10);
    }
}

TEST(Kinetic, OrnsteinUhlenbeckRelaxation)
{
    const double beta = 2.0;
    const KineticIntegrator integ(GridFunction(line, 0.0), params(0.0, 0.0, beta), {24, 8.0 / std::sqrt(beta)});
    auto s = KineticState::shifted_velocity(GridDensity::uniform(line), 1.0, 24, 8.0 / std::sqrt(beta), beta);
    for (int n = 0; n < 100; ++n) s = integ.step(s, 0.02);
    // mean velocity a_1 / sqrt(beta) decays like exp(-t); second moment of v relaxes to 1/beta
    EXPECT_NEAR(s.modes[1].values[7] / std::sqrt(beta), std::exp(-2.0), 1e-12);
    const auto nu = s.phase_space(401);
    const auto vm = nu.v_marginal();
    double m2 = 0.0;
    for (int j = 0; j < nu.nv; ++j) m2 += vm[j] * nu.velocity(j) * nu.velocity(j) * nu.weight(j);
    EXPECT_NEAR(m2, 1.0 / beta + std::exp(-4.0), 1e-9);
}

TEST(Kinetic, MassAndExtendedFreeEnergy)
{
    const auto V = cosine();
    const auto p = params(1.0, 0.01);
    const KineticIntegrator integ(V, p);
    auto s = integ.equilibrium_state(kernel_density(0.02));
    const double dt = integ.default_dt(s);
    double prev = kinetic_free_energy(s, V, p);
    for (int n = 0; n < 300; ++n) {
        s = integ.step(s, dt);
        EXPECT_NEAR(s.x_marginal().integral(), 1.0, 1e-12);
        if (n % 10 == 9) {
            const double f = kinetic_free_energy(s, V, p);
            EXPECT_LE(f, prev + 1e-9) << s.t;
            prev = f;
        }
    }
}

TEST(Kinetic, TruncationIsDetected)
{
    const KineticIntegrator integ(GridFunction(line, 0.0), params(0.0, 0.0), {24, 7.0});
    const auto s = KineticState::shifted_velocity(GridDensity::uniform(line), 2.0, 24, 7.0, 1.0);
    EXPECT_THROW(integ.step(s, 0.01), TruncationError);
    EXPECT_THROW(KineticIntegrator(GridFunction(PeriodicGrid::plane(8, 8), 0.0), params(0.0, 0.0)), ParameterError);
}

TEST(Kinetic, MatchesOverdampedMarginal)
{
    const auto V = cosine();
    const auto p = params(0.0, 0.01);
    const KineticIntegrator integ(V, p);
    auto s = integ.equilibrium_state(GridDensity::uniform(line));
    const double dt = integ.default_dt(s);
    while (s.t < 30.0) s = integ.step(s, dt);
    EXPECT_LE(distances(KineticIntegrator::marginal_density(s), GridDensity::gibbs(V)).tv, 1e-6);
}

TEST(Evolve, ZeroHorizonIsSingleRow)
{
    const auto V = double_well();
    const auto res = evolve(OverdampedState{kernel_density(0.05), 0.0}, V, params(2.0, 0.01), AlphaSchedule::constant(2.0), 0.0);
    ASSERT_EQ(res.trace.rows.size(), 1u);
    EXPECT_EQ(res.trace.rows[0].t, 0.0);
    EXPECT_FALSE(res.trace.rows[0].envelope);
}

TEST(Evolve, ConstantScheduleDecays)
{
    const auto V = double_well();
    EvolveOptions opt;
    opt.dt = 1e-3;
    opt.record_every = 5;
    const auto res = evolve(OverdampedState{kernel_density(0.05), 0.0}, V, params(2.0, 0.01), AlphaSchedule::constant(2.0), 0.3, opt);
    ASSERT_EQ(res.trace.rows.size(), 61u);
    EXPECT_LE(res.trace.sandwich_violation(), 1e-9);
    for (std::size_t i = 1; i < res.trace.rows.size(); ++i) EXPECT_LE(res.trace.rows[i].free_energy, res.trace.rows[i - 1].free_energy + 1e-9);
    const auto t = res.trace.times();
    const auto f = res.trace.excess();
    const auto fit = fit_exponential_rate(t, f, decay_window(t, f));
    EXPECT_LT(fit.slope, 0.0);
    EXPECT_GE(fit.r_squared, 0.99);
}

TEST(Evolve, LogarithmicScheduleHasEnvelope)
{
    const auto V = double_well();
    EvolveOptions opt;
    opt.dt = 5e-3;
    opt.record_every = 20;
    const auto res = evolve(OverdampedState{GridDensity::uniform(line), 0.0}, V, params(1.0, 0.01), AlphaSchedule::logarithmic(0.005, 1.0), 1.0, opt);
    for (const auto& r : res.trace.rows) {
        ASSERT_TRUE(r.envelope);
        EXPECT_NEAR(r.alpha, 0.005 * std::log1p(r.t) + 1.0, 1e-15);
    }
}

TEST(Evolve, KineticTraceCarriesExtendedEnergy)
{
    const auto V = cosine();
    EvolveOptions opt;
    opt.record_every = 50;
    const auto p = params(1.0, 0.01);
    const KineticIntegrator integ(V, p);
    const auto res = evolve(integ.equilibrium_state(kernel_density(0.05)), V, p, AlphaSchedule::constant(1.0), 2.0, opt);
    for (const auto& r : res.trace.rows) EXPECT_TRUE(r.extended_free_energy);
    EXPECT_NEAR(res.final_state.t, 2.0, 1e-12);
}
