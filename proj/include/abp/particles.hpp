#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abp/free_energy.hpp"
#include "abp/information.hpp"
#include "abp/kernel.hpp"
#include "abp/potential.hpp"
#include "abp/schedule.hpp"
#include "abp/spectral.hpp"

namespace abp {

/// Philox4x32-10 counter-based generator.
namespace philox {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Block block(Block c, Key k)
{
    constexpr std::uint64_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        const std::uint64_t p0 = m0 * c[0];
        const std::uint64_t p1 = m1 * c[2];
        c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
        k[0] += w0;
        k[1] += w1;
    }
    return c;
}

/// Stream tags keep the draws of different sub-steps independent.
enum class Purpose : std::uint32_t { init_position = 1, init_velocity = 2, diffusion = 3, friction = 4 };

/// Two standard normals for (particle, purpose, step) under a seed.
inline std::array<double, 2> normals(std::uint64_t seed, std::uint32_t particle, Purpose purpose, std::uint64_t step)
{
    const Block out = block({particle, static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(step),
                             static_cast<std::uint32_t>(step >> 32)},
                            {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    constexpr double scale = 0x1.0p-53;
    // 53-bit uniforms in (0, 1]
    const double u1 = ((static_cast<std::uint64_t>(out[0] >> 5) << 26 | out[1] >> 6) + 1) * scale;
    const double u2 = ((static_cast<std::uint64_t>(out[2] >> 5) << 26 | out[3] >> 6) + 1) * scale;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

/// Two uniforms in [0, 1).
inline std::array<double, 2> uniforms(std::uint64_t seed, std::uint32_t particle, Purpose purpose, std::uint64_t step)
{
    const Block out = block({particle, static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(step),
                             static_cast<std::uint32_t>(step >> 32)},
                            {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    constexpr double scale = 0x1.0p-53;
    return {(static_cast<std::uint64_t>(out[0] >> 5) << 26 | out[1] >> 6) * scale,
            (static_cast<std::uint64_t>(out[2] >> 5) << 26 | out[3] >> 6) * scale};
}

}  // namespace philox

namespace detail {

inline double wrap(double x) { return x - std::floor(x + 0.5); }

constexpr std::size_t sum_chunk = 4096;

/// Sum of f(i) over [0, n) with a fixed chunking, so the result does not
/// depend on the thread count.
template <class T, class F>
T chunked_sum(std::size_t n, T zero, F&& f)
{
    const std::size_t chunks = (n + sum_chunk - 1) / sum_chunk;
    std::vector<T> partial(chunks, zero);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
        T s = zero;
        const std::size_t lo = static_cast<std::size_t>(c) * sum_chunk;
        const std::size_t hi = std::min(n, lo + sum_chunk);
        for (std::size_t i = lo; i < hi; ++i) s += f(i);
        partial[static_cast<std::size_t>(c)] = s;
    }
    T total = zero;
    for (const T& p : partial) total += p;
    return total;
}

}  // namespace detail

class ParticleEnsemble {
public:
    using Point = Potential::Point;

    /// positions is N x d, row-major; velocities empty or N x d.
    ParticleEnsemble(int dim, std::vector<double> positions, std::vector<double> velocities, std::uint64_t seed)
        : d_(dim), x_(std::move(positions)), v_(std::move(velocities)), seed_(seed)
    {
        if (d_ != 1 && d_ != 2) throw ParameterError("ParticleEnsemble: dimension must be 1 or 2");
        if (x_.empty() || x_.size() % static_cast<std::size_t>(d_) != 0)
            throw ParameterError("ParticleEnsemble: need at least one particle");
        if (!v_.empty() && v_.size() != x_.size()) throw ParameterError("ParticleEnsemble: velocity array has the wrong size");
        if (size() > 0xFFFFFFFFu) throw ParameterError("ParticleEnsemble: too many particles");
        for (double& x : x_) x = detail::wrap(x);
    }

    /// N particles drawn from a grid density (each cell is a uniform box
    /// centered at its node). Velocities, if requested, are N(0, 1/beta).
    static ParticleEnsemble sample(const GridDensity& rho, std::size_t n, std::uint64_t seed, bool with_velocities = false,
                                   double beta = 1.0)
    {
        if (n == 0) throw ParameterError("ParticleEnsemble::sample: need at least one particle");
        if (with_velocities && !(beta > 0.0)) throw ParameterError("ParticleEnsemble::sample: beta must be positive");
        const PeriodicGrid& g = rho.grid();
        const int d = g.dim();
        std::vector<double> cdf(rho.values().size());
        double acc = 0.0;
        for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = acc += rho[i];
        std::vector<double> x(n * static_cast<std::size_t>(d)), v;
        if (with_velocities) v.resize(x.size());
        for (std::size_t p = 0; p < n; ++p) {
            const auto pid = static_cast<std::uint32_t>(p);
            const auto u = philox::uniforms(seed, pid, philox::Purpose::init_position, 0);
            const auto j = philox::uniforms(seed, pid, philox::Purpose::init_position, 1);
            const double target = u[0] * acc;
            const std::size_t cell =
                std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin(), cdf.size() - 1);
            const int i0 = static_cast<int>(cell / static_cast<std::size_t>(g.points(1)));
            const int i1 = static_cast<int>(cell % static_cast<std::size_t>(g.points(1)));
            x[p * d] = g.coord(0, i0) + (j[0] - 0.5) * g.spacing(0);
            if (d == 2) x[p * d + 1] = g.coord(1, i1) + (j[1] - 0.5) * g.spacing(1);
            if (with_velocities) {
                const auto z = philox::normals(seed, pid, philox::Purpose::init_velocity, 0);
                for (int a = 0; a < d; ++a) v[p * d + a] = z[static_cast<std::size_t>(a)] / std::sqrt(beta);
            }
        }
        return ParticleEnsemble(d, std::move(x), std::move(v), seed);
    }

    int dim() const { return d_; }
    std::size_t size() const { return x_.size() / static_cast<std::size_t>(d_); }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t steps_taken() const { return step_; }
    bool has_velocities() const { return !v_.empty(); }

    const std::vector<double>& positions() const { return x_; }
    const std::vector<double>& velocities() const { return v_; }
    std::vector<double>& positions() { return x_; }
    std::vector<double>& velocities() { return v_; }

    double x1(std::size_t i) const { return x_[i * static_cast<std::size_t>(d_)]; }
    Point position(std::size_t i) const
    {
        const std::size_t b = i * static_cast<std::size_t>(d_);
        return {x_[b], d_ == 2 ? x_[b + 1] : 0.0};
    }

    void advance_counter() { ++step_; }

private:
    int d_;
    std::vector<double> x_;
    std::vector<double> v_;
    std::uint64_t seed_;
    std::uint64_t step_ = 0;
};

/// Empirical Fourier coefficients c_k = (1/N) sum_i exp(-2 pi i k x_i) of the
/// first coordinate, k = 0..kmax.
inline std::vector<spectral::Complex> empirical_coefficients(const ParticleEnsemble& e, int kmax)
{
    using C = spectral::Complex;
    constexpr std::size_t block = 256;
    const std::size_t n = e.size();
    const std::size_t K = static_cast<std::size_t>(kmax) + 1;
    const std::size_t chunks = (n + detail::sum_chunk - 1) / detail::sum_chunk;
    std::vector<std::vector<C>> partial(chunks, std::vector<C>(K, C(0.0, 0.0)));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
        auto& s = partial[static_cast<std::size_t>(c)];
        const std::size_t lo = static_cast<std::size_t>(c) * detail::sum_chunk;
        const std::size_t hi = std::min(n, lo + detail::sum_chunk);
        std::array<double, block> zr, zi, re, im;
        for (std::size_t b0 = lo; b0 < hi; b0 += block) {
            const std::size_t m = std::min(block, hi - b0);
            for (std::size_t j = 0; j < m; ++j) {
                const double a = -2.0 * std::numbers::pi * e.x1(b0 + j);
                zr[j] = std::cos(a);
                zi[j] = std::sin(a);
                re[j] = 1.0;
                im[j] = 0.0;
            }
            for (std::size_t k = 0; k < K; ++k) {
                double sr = 0.0, si = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    sr += re[j];
                    si += im[j];
                }
                s[k] += C(sr, si);
                if ((k + 1) % 16 == 0) {
                    // re-anchor periodically to bound the recurrence drift
                    for (std::size_t j = 0; j < m; ++j) {
                        const double a = -2.0 * std::numbers::pi * e.x1(b0 + j) * static_cast<double>(k + 1);
                        re[j] = std::cos(a);
                        im[j] = std::sin(a);
                    }
                } else {
                    for (std::size_t j = 0; j < m; ++j) {
                        const double t = re[j] * zr[j] - im[j] * zi[j];
                        im[j] = re[j] * zi[j] + im[j] * zr[j];
                        re[j] = t;
                    }
                }
            }
        }
    }
    std::vector<C> total(K, C(0.0, 0.0));
    for (const auto& p : partial)
        for (std::size_t k = 0; k < K; ++k) total[k] += p[k];
    for (C& c : total) c /= static_cast<double>(n);
    return total;
}

/// K * (empirical first marginal) on a line grid: the wrapped-Gaussian mixture
/// evaluated through its Fourier series.
inline GridDensity kde_marginal(const ParticleEnsemble& e, const WrappedGaussianKernel& kernel, const PeriodicGrid& line)
{
    if (line.dim() != 1) throw ParameterError("kde_marginal: expects a line grid");
    if (kernel.dim() != 1) throw ParameterError("kde_marginal: kernel must act on one axis");
    const int kmax = std::min(kernel.spectral_cutoff(), (line.points(0) - 1) / 2);
    auto c = empirical_coefficients(e, kmax);
    for (int k = 0; k <= kmax; ++k) c[static_cast<std::size_t>(k)] *= kernel.multiplier(static_cast<double>(k) * k);
    GridFunction f = spectral::synthesize_line(line, c);
    for (double& v : f.values) {
        if (v < -1e-12) throw DomainError("kde_marginal: kernel too narrow for the grid");
        v = std::max(v, 0.0);
    }
    return GridDensity::normalize(std::move(f));
}

/// Full-dimensional density proxy: exact KDE in 1D; in 2D a cloud-in-cell
/// deposit smoothed by the product kernel.
inline GridDensity kde_density(const ParticleEnsemble& e, const WrappedGaussianKernel& kernel, const PeriodicGrid& g)
{
    if (g.dim() != e.dim()) throw ParameterError("kde_density: grid and ensemble dimensions differ");
    if (g.dim() == 1) return kde_marginal(e, kernel, g);
    GridFunction h(g, 0.0);
    const int n0 = g.points(0), n1 = g.points(1);
    for (std::size_t i = 0; i < e.size(); ++i) {
        const auto p = e.position(i);
        const double s0 = (p[0] + 0.5) * n0, s1 = (p[1] + 0.5) * n1;
        const double f0 = std::floor(s0), f1 = std::floor(s1);
        const double w0 = s0 - f0, w1 = s1 - f1;
        const int i0 = ((static_cast<int>(f0) % n0) + n0) % n0, i1 = ((static_cast<int>(f1) % n1) + n1) % n1;
        const int j0 = (i0 + 1) % n0, j1 = (i1 + 1) % n1;
        h.values[g.index(i0, i1)] += (1 - w0) * (1 - w1);
        h.values[g.index(i0, j1)] += (1 - w0) * w1;
        h.values[g.index(j0, i1)] += w0 * (1 - w1);
        h.values[g.index(j0, j1)] += w0 * w1;
    }
    GridFunction s = convolve(WrappedGaussianKernel(kernel.epsilon(), 2), h);
    for (double& v : s.values) v = std::max(v, 0.0);
    return GridDensity::normalize(std::move(s));
}

/// The bias seen by particles: potential alpha K * ln(KDE) and its force
/// -(1/beta) d/dx1 of it, both on the line grid.
struct BiasField {
    GridFunction potential;
    GridFunction force;

    double force_at(double x1) const { return Potential::interpolate(force, {x1, 0.0}); }
    double potential_at(double x1) const { return Potential::interpolate(potential, {x1, 0.0}); }
};

/// alpha K * ln(g) for an already smoothed marginal g.
inline GridFunction bias_from_smoothed(const GridDensity& g, const AbpParams& params)
{
    GridFunction b = detail::smoothed_log(g, params);
    b *= params.alpha;
    return b;
}

inline BiasField bias_force(const ParticleEnsemble& e, const AbpParams& params, const PeriodicGrid& line)
{
    detail::require_finite_alpha(params, "bias_force");
    if (!(params.epsilon > 0.0)) throw ParameterError("bias_force: epsilon must be positive");
    if (params.alpha == 0.0) return {GridFunction(line, 0.0), GridFunction(line, 0.0)};
    const GridDensity kde = kde_marginal(e, *params.kernel(), line);
    BiasField b{bias_from_smoothed(kde, params), GridFunction(line)};
    b.force = spectral::derivative(b.potential, 0);
    b.force *= -1.0 / params.beta;
    return b;
}

/// Line grid used for the bias field and KDE diagnostics.
inline constexpr int default_bias_points = 256;

/// Euler-Maruyama: x <- wrap(x - grad W dt + sqrt(2 dt / beta) xi) with the
/// bias frozen at the pre-step ensemble.
inline void overdamped_particle_step(ParticleEnsemble& e, const Potential& V, const AbpParams& params, double dt,
                                     const PeriodicGrid& line = PeriodicGrid::line(default_bias_points))
{
    if (!(dt >= 0.0)) throw ParameterError("overdamped_particle_step: dt must be >= 0");
    if (V.grid().dim() != e.dim()) throw ParameterError("overdamped_particle_step: potential and ensemble dimensions differ");
    if (dt == 0.0) return;
    const BiasField b = bias_force(e, params, line);
    const bool biased = params.alpha > 0.0;
    const double noise = std::sqrt(2.0 * dt / params.beta);
    const int d = e.dim();
    const std::uint64_t step = e.steps_taken();
    auto& x = e.positions();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(e.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto p = e.position(i);
        auto f = V.gradient_at(p);
        const auto z = philox::normals(e.seed(), static_cast<std::uint32_t>(i), philox::Purpose::diffusion, step);
        double drift0 = -f[0];
        if (biased) drift0 += b.force_at(p[0]);
        x[i * d] = detail::wrap(p[0] + drift0 * dt + noise * z[0]);
        if (d == 2) x[i * d + 1] = detail::wrap(p[1] - f[1] * dt + noise * z[1]);
    }
    e.advance_counter();
}

/// Langevin dynamics with unit friction, dx = v dt, dv = -grad W dt - v dt +
/// sqrt(2/beta) dB, integrated by the splitting kick/2, drift/2, exact OU,
/// drift/2, kick/2. The bias field is frozen for the whole step.
inline void kinetic_particle_step(ParticleEnsemble& e, const Potential& V, const AbpParams& params, double dt,
                                  const PeriodicGrid& line = PeriodicGrid::line(default_bias_points))
{
    if (!e.has_velocities()) throw ParameterError("kinetic_particle_step: ensemble has no velocities");
    if (!(dt >= 0.0)) throw ParameterError("kinetic_particle_step: dt must be >= 0");
    if (V.grid().dim() != e.dim()) throw ParameterError("kinetic_particle_step: potential and ensemble dimensions differ");
    if (dt == 0.0) return;
    const BiasField b = bias_force(e, params, line);
    const bool biased = params.alpha > 0.0;
    const double decay = std::exp(-dt);
    const double ou = std::sqrt(-std::expm1(-2.0 * dt) / params.beta);
    const int d = e.dim();
    const std::uint64_t step = e.steps_taken();
    auto& x = e.positions();
    auto& v = e.velocities();
    auto force = [&](const ParticleEnsemble::Point& p) {
        auto g = V.gradient_at(p);
        ParticleEnsemble::Point f{-g[0], -g[1]};
        if (biased) f[0] += b.force_at(p[0]);
        return f;
    };
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(e.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const std::size_t o = i * static_cast<std::size_t>(d);
        ParticleEnsemble::Point p = e.position(i);
        ParticleEnsemble::Point u{v[o], d == 2 ? v[o + 1] : 0.0};
        auto f = force(p);
        for (int a = 0; a < d; ++a) {
            u[a] += 0.5 * dt * f[a];
            p[a] = detail::wrap(p[a] + 0.5 * dt * u[a]);
        }
        const auto z = philox::normals(e.seed(), static_cast<std::uint32_t>(i), philox::Purpose::friction, step);
        for (int a = 0; a < d; ++a) {
            u[a] = decay * u[a] + ou * z[static_cast<std::size_t>(a)];
            p[a] = detail::wrap(p[a] + 0.5 * dt * u[a]);
        }
        f = force(p);
        for (int a = 0; a < d; ++a) {
            u[a] += 0.5 * dt * f[a];
            x[o + a] = p[a];
            v[o + a] = u[a];
        }
    }
    e.advance_counter();
}

struct EnsembleDiagnostics {
    double tv_kde = 0.0;           // TV(KDE marginal, reference marginal)
    double tv_kde_smoothed = 0.0;  // TV(KDE marginal, K * reference marginal)
    double free_energy_est = 0.0;  // F on the kernel-smoothed density proxy
    double ess_x1 = 0.0;           // effective sample size under weights exp(bias)
};

/// Importance weights exp(bias(x1)) undo the bias; ESS = (sum w)^2 / sum w^2.
inline double effective_sample_size(const ParticleEnsemble& e, const GridFunction& bias)
{
    if (bias.grid.dim() != 1) throw ParameterError("effective_sample_size: bias must live on a line grid");
    const double top = bias.max();
    struct Pair {
        double s = 0.0, q = 0.0;
        Pair& operator+=(const Pair& o)
        {
            s += o.s;
            q += o.q;
            return *this;
        }
    };
    const Pair r = detail::chunked_sum(e.size(), Pair{}, [&](std::size_t i) {
        const double w = std::exp(Potential::interpolate(bias, {e.x1(i), 0.0}) - top);
        return Pair{w, w * w};
    });
    return r.s * r.s / r.q;
}

inline EnsembleDiagnostics ensemble_diagnostics(const ParticleEnsemble& e, const GridDensity& reference, const Potential& V,
                                                const AbpParams& params)
{
    detail::require_finite_alpha(params, "ensemble_diagnostics");
    if (!(params.epsilon > 0.0)) throw ParameterError("ensemble_diagnostics: epsilon must be positive");
    if (reference.grid() != V.grid()) throw ParameterError("ensemble_diagnostics: reference and potential grids differ");
    const auto kernel = *params.kernel();
    const PeriodicGrid line = reference.grid().reaction_grid();
    const GridDensity kde = kde_marginal(e, kernel, line);
    EnsembleDiagnostics out;
    const GridDensity ref1 = marginal(reference);
    out.tv_kde = distances(kde, ref1).tv;
    out.tv_kde_smoothed = distances(kde, convolve(kernel, ref1)).tv;
    out.free_energy_est = free_energy(kde_density(e, kernel, reference.grid()), V, params);
    out.ess_x1 = params.alpha > 0.0 ? effective_sample_size(e, bias_from_smoothed(kde, params)) : static_cast<double>(e.size());
    return out;
}

enum class ParticleDynamics { overdamped, kinetic };

struct ParticleRow {
    double t = 0.0;
    double alpha = 0.0;
    EnsembleDiagnostics diag;
};

struct ParticleRunOptions {
    double dt = 1e-3;
    int record_every = 1;
    int bias_points = default_bias_points;
};

struct ParticleRun {
    std::vector<ParticleRow> rows;
    ParticleEnsemble final_state;
    double dt = 0.0;
    long steps = 0;
    std::optional<std::string> failure;  // set when a step failed; final_state is the last good one
};

/// Drives an ensemble to t_end under a schedule, recording diagnostics
/// against a reference density at row 0, every record_every steps and at
/// the end.
inline ParticleRun simulate_particles(ParticleEnsemble e, const Potential& V, AbpParams params, const AlphaSchedule& schedule,
                                      ParticleDynamics dynamics, double t_end, const GridDensity& reference,
                                      const ParticleRunOptions& opt = {})
{
    if (!(t_end >= 0.0) || !(opt.dt > 0.0) || opt.record_every < 1)
        throw ParameterError("simulate_particles: bad time grid");
    validate_schedule(schedule, t_end);
    const long steps = std::lround(t_end / opt.dt);
    const double dt = steps > 0 ? t_end / static_cast<double>(steps) : opt.dt;
    const PeriodicGrid line = PeriodicGrid::line(opt.bias_points);
    std::vector<ParticleRow> rows;
    auto record = [&](double t) {
        params.alpha = alpha_at(schedule, t);
        rows.push_back({t, params.alpha, ensemble_diagnostics(e, reference, V, params)});
    };
    record(0.0);
    std::optional<std::string> failure;
    for (long n = 0; n < steps; ++n) {
        params.alpha = alpha_at(schedule, n * dt);
        try {
            // the bias field is built before any particle moves, so a throw leaves e intact
            if (dynamics == ParticleDynamics::overdamped) overdamped_particle_step(e, V, params, dt, line);
            else kinetic_particle_step(e, V, params, dt, line);
        } catch (const Error& err) {
            failure = "step " + std::to_string(n + 1) + ": " + err.what();
            break;
        }
        if ((n + 1) % opt.record_every == 0 || n + 1 == steps) record((n + 1) * dt);
    }
    return {std::move(rows), std::move(e), dt, steps, std::move(failure)};
}

}  // namespace abp
