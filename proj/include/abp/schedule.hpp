#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "abp/grid.hpp"

namespace abp {

/// Bias strength as a function of time: constant, or A ln(t + 1) + B.
struct AlphaSchedule {
    enum class Kind { constant, logarithmic };

    Kind kind = Kind::constant;
    double value = 0.0;   // constant alpha
    double a_coef = 0.0;  // logarithmic: A
    double b_offset = 1.0;

    static AlphaSchedule constant(double alpha) { return {Kind::constant, alpha, 0.0, 0.0}; }
    static AlphaSchedule logarithmic(double a, double b) { return {Kind::logarithmic, 0.0, a, b}; }

    bool is_constant() const { return kind == Kind::constant; }
};

inline double alpha_at(const AlphaSchedule& s, double t)
{
    if (!(t >= 0.0)) throw ParameterError("alpha_at: time must be >= 0");
    const double a = s.is_constant() ? s.value : s.a_coef * std::log1p(t) + s.b_offset;
    if (!(a >= 0.0)) throw ScheduleDomainError("alpha_at: schedule is negative at t = " + std::to_string(t));
    return a;
}

/// Checks alpha(t) >= 0 on [0, t_end]; the logarithmic form is monotone so
/// the endpoints suffice.
inline void validate_schedule(const AlphaSchedule& s, double t_end)
{
    alpha_at(s, 0.0);
    alpha_at(s, std::max(t_end, 0.0));
}

/// Burn-in for envelope statistics: 10% of the run or t = 1, whichever is larger.
inline double burn_in_time(double t_end) { return std::max(0.1 * t_end, 1.0); }

/// F(t) sqrt(t + 1) / ln(t + 2).
inline double envelope_statistic(double t, double value) { return value * std::sqrt(t + 1.0) / std::log(t + 2.0); }

struct OdeTrace {
    std::vector<double> t;
    std::vector<double> f;
    double envelope = 0.0;  // sup of f sqrt(t+1) / ln(t+2) over the trace
    double dt_used = 0.0;
};

/// RK4 for f' = -C1 / sqrt(t+1) f + C2 / (t+1), with step min(dt, 1e-2).
/// record_every thins the stored trace; the envelope uses every step.
inline OdeTrace ode_comparison_solve(double c1, double c2, double f0, double t_end, double dt, int record_every = 1)
{
    if (!(c1 >= 0.0) || !(c2 >= 0.0) || !(f0 >= 0.0)) throw ParameterError("ode_comparison_solve: C1, C2, f0 must be >= 0");
    if (!(t_end >= 0.0) || !(dt > 0.0) || record_every < 1) throw ParameterError("ode_comparison_solve: bad time grid");
    const double h = std::min(dt, 1e-2);
    auto rhs = [&](double t, double f) { return -c1 / std::sqrt(t + 1.0) * f + c2 / (t + 1.0); };
    OdeTrace tr;
    tr.dt_used = h;
    const long steps = static_cast<long>(std::ceil(t_end / h - 1e-9));
    double f = f0;
    tr.t.push_back(0.0);
    tr.f.push_back(f);
    tr.envelope = envelope_statistic(0.0, f);
    for (long n = 0; n < steps; ++n) {
        const double t = n * h;
        const double step = std::min(h, t_end - t);
        const double k1 = rhs(t, f);
        const double k2 = rhs(t + 0.5 * step, f + 0.5 * step * k1);
        const double k3 = rhs(t + 0.5 * step, f + 0.5 * step * k2);
        const double k4 = rhs(t + step, f + step * k3);
        f += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double tn = n + 1 == steps ? t_end : (n + 1) * h;
        tr.envelope = std::max(tr.envelope, envelope_statistic(tn, f));
        if ((n + 1) % record_every == 0 || n + 1 == steps) {
            tr.t.push_back(tn);
            tr.f.push_back(f);
        }
    }
    return tr;
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::pair<double, double> window{0.0, 0.0};
    int points = 0;
};

/// Least squares of ln(value) against t over samples with t in [t_lo, t_hi].
inline RateFit fit_exponential_rate(std::span<const double> t, std::span<const double> value, std::pair<double, double> window)
{
    if (t.size() != value.size()) throw FitError("fit_exponential_rate: length mismatch");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < window.first || t[i] > window.second) continue;
        if (!(value[i] > 0.0)) throw FitError("fit_exponential_rate: nonpositive value at t = " + std::to_string(t[i]));
        xs.push_back(t[i]);
        ys.push_back(std::log(value[i]));
    }
    if (xs.size() < 2) throw FitError("fit_exponential_rate: fewer than two samples in the window");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw FitError("fit_exponential_rate: window holds a single time");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double ss_res = std::max(syy - fit.slope * sxy, 0.0);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    fit.window = window;
    fit.points = static_cast<int>(xs.size());
    return fit;
}

/// Tail window of a decaying trace: from the first sample below
/// start_fraction * value[0] to the last sample still above floor.
inline std::pair<double, double> decay_window(std::span<const double> t, std::span<const double> value, double start_fraction = 1e-2,
                                              double floor = 1e-13)
{
    if (t.size() != value.size() || t.empty()) throw FitError("decay_window: empty or mismatched trace");
    std::size_t lo = t.size(), hi = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (lo == t.size() && value[i] < start_fraction * value[0]) lo = i;
        if (value[i] > floor) hi = i;
    }
    if (lo == t.size() || hi <= lo) throw FitError("decay_window: trace never decays into a fittable range");
    return {t[lo], t[hi]};
}

/// Log-Sobolev constant of a bounded perturbation: D exp(-osc psi).
inline double holley_stroock_bound(double base_constant_D, const GridFunction& psi)
{
    if (!(base_constant_D > 0.0)) throw ParameterError("holley_stroock_bound: D must be positive");
    for (double v : psi.values)
        if (!std::isfinite(v)) throw ParameterError("holley_stroock_bound: perturbation must be bounded");
    return base_constant_D * std::exp(-psi.oscillation());
}

}  // namespace abp
