#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "abp/grid.hpp"

namespace abp::spectral {

using Complex = std::complex<double>;

/// Integer wavevector of one half-spectrum slot; nyquist flags mark the
/// unpaired n/2 mode on an axis (its derivative is set to zero).
struct Wave {
    int k0 = 0;
    int k1 = 0;
    bool nyquist0 = false;
    bool nyquist1 = false;
};

/// FFTW real-to-complex plan pair for one grid shape.
///
/// Plans own aligned scratch buffers, so a Plan must not be executed
/// concurrently; plan_for() hands out one instance per thread.
class Plan {
public:
    explicit Plan(const PeriodicGrid& g) : grid_(g)
    {
        const int n0 = g.points(0);
        const int n1 = g.points(1);
        real_size_ = g.size();
        spec_size_ = g.dim() == 1 ? static_cast<std::size_t>(n0 / 2 + 1)
                                  : static_cast<std::size_t>(n0) * static_cast<std::size_t>(n1 / 2 + 1);
        real_ = fftw_alloc_real(real_size_);
        spec_ = fftw_alloc_complex(spec_size_);
        {
            std::lock_guard lock(planner_mutex());
            if (g.dim() == 1) {
                fwd_ = fftw_plan_dft_r2c_1d(n0, real_, spec_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_1d(n0, spec_, real_, FFTW_ESTIMATE);
            } else {
                fwd_ = fftw_plan_dft_r2c_2d(n0, n1, real_, spec_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_2d(n0, n1, spec_, real_, FFTW_ESTIMATE);
            }
        }
        waves_.resize(spec_size_);
        if (g.dim() == 1) {
            for (int s = 0; s <= n0 / 2; ++s) waves_[static_cast<std::size_t>(s)] = Wave{s, 0, s == n0 / 2, false};
        } else {
            const int h1 = n1 / 2 + 1;
            for (int i0 = 0; i0 < n0; ++i0)
                for (int j = 0; j < h1; ++j) {
                    const int k0 = i0 <= n0 / 2 ? i0 : i0 - n0;
                    waves_[static_cast<std::size_t>(i0 * h1 + j)] = Wave{k0, j, i0 == n0 / 2, j == n1 / 2};
                }
        }
    }

    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;

    ~Plan()
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(real_);
        fftw_free(spec_);
    }

    const PeriodicGrid& grid() const { return grid_; }
    std::size_t spectrum_size() const { return spec_size_; }
    const std::vector<Wave>& waves() const { return waves_; }

    /// Unnormalized forward transform.
    std::vector<Complex> forward(std::span<const double> in) const
    {
        std::copy(in.begin(), in.end(), real_);
        fftw_execute(fwd_);
        std::vector<Complex> out(spec_size_);
        for (std::size_t s = 0; s < spec_size_; ++s) out[s] = Complex(spec_[s][0], spec_[s][1]);
        return out;
    }

    /// Inverse transform including the 1/size normalization.
    std::vector<double> backward(std::span<const Complex> in) const
    {
        for (std::size_t s = 0; s < spec_size_; ++s) {
            spec_[s][0] = in[s].real();
            spec_[s][1] = in[s].imag();
        }
        fftw_execute(bwd_);
        std::vector<double> out(real_size_);
        const double scale = 1.0 / static_cast<double>(real_size_);
        for (std::size_t i = 0; i < real_size_; ++i) out[i] = real_[i] * scale;
        return out;
    }

private:
    static std::mutex& planner_mutex()
    {
        static std::mutex m;
        return m;
    }

    PeriodicGrid grid_;
    std::size_t real_size_ = 0;
    std::size_t spec_size_ = 0;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
    std::vector<Wave> waves_;
};

/// Per-thread plan cache keyed by grid shape.
inline const Plan& plan_for(const PeriodicGrid& g)
{
    thread_local std::map<std::pair<int, std::pair<int, int>>, std::unique_ptr<Plan>> cache;
    const auto key = std::make_pair(g.dim(), std::make_pair(g.points(0), g.points(1)));
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, std::make_unique<Plan>(g)).first;
    return *it->second;
}

/// Applies a Fourier multiplier m(wave) to a real grid function. The
/// multiplier must keep the result real (even real part, odd imaginary part).
template <class Multiplier>
GridFunction apply_multiplier(const GridFunction& f, Multiplier&& m)
{
    const Plan& plan = plan_for(f.grid);
    std::vector<Complex> spec = plan.forward(f.values);
    const auto& waves = plan.waves();
    for (std::size_t s = 0; s < spec.size(); ++s) spec[s] *= m(waves[s]);
    return GridFunction(f.grid, plan.backward(spec));
}

/// Spectral derivative along one axis; the Nyquist mode is dropped.
inline GridFunction derivative(const GridFunction& f, int axis)
{
    if (axis < 0 || axis >= f.grid.dim()) throw ParameterError("derivative: axis out of range");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return apply_multiplier(f, [axis](const Wave& w) {
        const int k = axis == 0 ? w.k0 : w.k1;
        const bool nyq = axis == 0 ? w.nyquist0 : w.nyquist1;
        return nyq ? Complex(0.0, 0.0) : Complex(0.0, two_pi * k);
    });
}

inline std::vector<GridFunction> gradient(const GridFunction& f)
{
    std::vector<GridFunction> g;
    for (int a = 0; a < f.grid.dim(); ++a) g.push_back(derivative(f, a));
    return g;
}

/// Evaluates the real trigonometric series sum_{|k|<=K} c_k e^{2 pi i k x} on
/// a line grid, given c_0..c_K (negative modes are the conjugates). Accounts
/// for the grid origin at -1/2.
inline GridFunction synthesize_line(const PeriodicGrid& g, std::span<const Complex> coeffs)
{
    if (g.dim() != 1) throw ParameterError("synthesize_line: expects a 1D grid");
    const Plan& plan = plan_for(g);
    const int n = g.points(0);
    std::vector<Complex> spec(plan.spectrum_size(), Complex(0.0, 0.0));
    const std::size_t kmax = std::min<std::size_t>(coeffs.size(), static_cast<std::size_t>(n / 2));
    for (std::size_t k = 0; k < kmax; ++k) spec[k] = coeffs[k] * (k % 2 == 0 ? 1.0 : -1.0) * static_cast<double>(n);
    return GridFunction(g, plan.backward(spec));
}

}  // namespace abp::spectral
