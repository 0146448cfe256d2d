// spectra.hpp - reflection / transmission / absorption spectra from detector
// time series, and coherence-error series between backends.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "em.hpp"
#include "quantum.hpp"

namespace mqsim {

class SpectrumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Spectral flux |Ex(w) Hy(w)| on a set of angular frequencies.
struct FluxSpectrum {
    std::vector<double> omega;  // rad/s
    std::vector<double> flux;
    bool truncated = false;     // trace did not decay at one of its ends
};

/// Zero-padded DFT layout: sample spacing and padded length.
struct SpectralGrid {
    double dt = 0.0;
    std::size_t length = 0;

    double omega(std::size_t k) const
    {
        return 2.0 * M_PI * static_cast<double>(k) / (static_cast<double>(length) * dt);
    }
    /// Bins whose frequency lies in [omega_lo, omega_hi].
    std::pair<std::size_t, std::size_t> bins(double omega_lo, double omega_hi) const
    {
        const double scale = static_cast<double>(length) * dt / (2.0 * M_PI);
        const double lo = std::max(0.0, std::ceil(omega_lo * scale));
        const double hi = std::min(static_cast<double>(length) - 1.0, std::floor(omega_hi * scale));
        if (hi < lo) return {0, 0};
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
    }
};

/// Bins [k_begin, k_end) of the length-`length` DFT of x, zero padded.
/// X_k = sum_n x_n exp(-2 pi i k n / length).
inline std::vector<cplx> dft_bins(std::span<const double> x, std::size_t length,
                                  std::size_t k_begin, std::size_t k_end)
{
    if (length < x.size()) throw SpectrumError("DFT length shorter than the signal");
    std::vector<cplx> out;
    out.reserve(k_end > k_begin ? k_end - k_begin : 0);
    for (std::size_t k = k_begin; k < k_end; ++k) {
        const double theta = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(length);
        const double wr = std::cos(theta), wi = std::sin(theta);
        double pr = 1.0, pi = 0.0;
        double sr = 0.0, si = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) {
            sr += x[n] * pr;
            si += x[n] * pi;
            const double nr = pr * wr - pi * wi;
            pi = pr * wi + pi * wr;
            pr = nr;
            if ((n & 1023u) == 1023u) {
                // re-anchor the phasor to stop rounding drift
                const double phase = -2.0 * M_PI * static_cast<double>((k * (n + 1)) % length) /
                                     static_cast<double>(length);
                pr = std::cos(phase);
                pi = std::sin(phase);
            }
        }
        out.emplace_back(sr, si);
    }
    return out;
}

namespace detail {

inline double median_step(std::span<const double> t)
{
    std::vector<double> d(t.size() - 1);
    for (std::size_t i = 0; i + 1 < t.size(); ++i) d[i] = t[i + 1] - t[i];
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    return d[d.size() / 2];
}

}  // namespace detail

/// Sample spacing of a trace; throws if it is not uniformly sampled. The
/// tolerance is 1e-12 of the spacing, widened to the rounding resolution of
/// the largest stored time stamp.
inline double uniform_spacing(const DetectorTrace& tr)
{
    if (tr.t.size() < 2 || tr.ex.size() != tr.t.size() || tr.hy.size() != tr.t.size())
        throw SpectrumError("detector trace needs at least two samples of t, ex, hy");
    const double step = detail::median_step(tr.t);
    if (!(step > 0.0)) throw SpectrumError("detector trace times must increase");
    const double t_abs = std::max(std::abs(tr.t.front()), std::abs(tr.t.back()));
    const double tol = std::max(1e-12 * step, 8.0 * std::numeric_limits<double>::epsilon() * t_abs);
    for (std::size_t i = 0; i + 1 < tr.t.size(); ++i)
        if (std::abs(tr.t[i + 1] - tr.t[i] - step) > tol)
            throw SpectrumError("detector trace is not uniformly sampled");
    return step;
}

/// True when the first and last 1% of samples stay below 1e-5 of the peak,
/// or below `floor` (V/m) for traces that are themselves near the noise.
inline bool trace_captured(const DetectorTrace& tr, double floor = 0.0)
{
    double peak = 0.0;
    for (double v : tr.ex) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return true;
    const std::size_t edge = std::max<std::size_t>(1, tr.ex.size() / 100);
    const double limit = std::max(1e-5 * peak, floor);
    for (std::size_t i = 0; i < edge; ++i)
        if (std::abs(tr.ex[i]) > limit || std::abs(tr.ex[tr.ex.size() - 1 - i]) > limit)
            return false;
    return true;
}

/// |Ex(w) Hy(w)| on the bins of `grid` that fall inside [omega_lo, omega_hi].
inline FluxSpectrum poynting_spectrum(const DetectorTrace& tr, const SpectralGrid& grid,
                                      double omega_lo, double omega_hi, double capture_floor = 0.0)
{
    const double step = uniform_spacing(tr);
    if (std::abs(step - grid.dt) > 1e-9 * grid.dt)
        throw SpectrumError("trace spacing does not match the spectral grid");
    const auto [k0, k1] = grid.bins(omega_lo, omega_hi);
    const auto e = dft_bins(tr.ex, grid.length, k0, k1);
    const auto h = dft_bins(tr.hy, grid.length, k0, k1);
    FluxSpectrum out;
    out.truncated = !trace_captured(tr, capture_floor);
    out.omega.reserve(e.size());
    out.flux.reserve(e.size());
    for (std::size_t j = 0; j < e.size(); ++j) {
        out.omega.push_back(grid.omega(k0 + j));
        out.flux.push_back(std::abs(e[j] * h[j]));
    }
    return out;
}

/// Padding factor applied to the longest trace.
inline constexpr std::size_t zero_pad_factor = 4;

/// Single-trace convenience: pads by zero_pad_factor.
inline FluxSpectrum poynting_spectrum(const DetectorTrace& tr, double omega_lo, double omega_hi)
{
    const SpectralGrid grid{uniform_spacing(tr), zero_pad_factor * tr.t.size()};
    return poynting_spectrum(tr, grid, omega_lo, omega_hi);
}

/// Ratio of two spectra on the same axis. Entries where the reference is
/// below 1e-4 of its peak are NaN (masked). reference_peak defaults to the
/// largest value on the axis.
inline std::vector<double> normalize(const FluxSpectrum& spec, const FluxSpectrum& reference,
                                     double reference_peak = 0.0)
{
    if (spec.omega.size() != reference.omega.size())
        throw SpectrumError("spectrum and reference have different frequency axes");
    for (std::size_t i = 0; i < spec.omega.size(); ++i)
        if (std::abs(spec.omega[i] - reference.omega[i]) > 1e-9 * std::abs(reference.omega[i]))
            throw SpectrumError("spectrum and reference have different frequency axes");
    double peak = reference_peak;
    for (double v : reference.flux) peak = std::max(peak, v);
    std::vector<double> ratio(spec.flux.size(), std::nan(""));
    for (std::size_t i = 0; i < spec.flux.size(); ++i)
        if (reference.flux[i] >= 1e-4 * peak && reference.flux[i] > 0.0)
            ratio[i] = spec.flux[i] / reference.flux[i];
    return ratio;
}

/// Largest flux of a pulse-like trace, wherever its carrier is. The carrier
/// is estimated from zero crossings between the first and last samples
/// above 10% of the field peak; the spectrum is then scanned from half to 1.5 times that frequency.
inline double spectral_peak(const DetectorTrace& tr, const SpectralGrid& grid)
{
    double peak = 0.0;
    for (double v : tr.ex) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return 0.0;
    std::size_t first = tr.ex.size(), last = 0;
    for (std::size_t i = 0; i < tr.ex.size(); ++i)
        if (std::abs(tr.ex[i]) >= 0.1 * peak) first = std::min(first, i), last = i;
    int crossings = 0;
    std::size_t c0 = 0, c1 = 0;
    for (std::size_t i = first; i < last; ++i)
        if ((tr.ex[i] < 0.0) != (tr.ex[i + 1] < 0.0)) {
            if (crossings == 0) c0 = i;
            c1 = i;
            ++crossings;
        }
    if (crossings < 3) return 0.0;
    const double w_est = M_PI * (crossings - 1) / (static_cast<double>(c1 - c0) * grid.dt);
    const auto [k0, k1] = grid.bins(0.5 * w_est, 1.5 * w_est);
    const std::size_t stride = std::max<std::size_t>(1, (k1 - k0) / 400);
    double best = 0.0;
    for (std::size_t k = k0; k < k1; k += stride) {
        const auto e = dft_bins(tr.ex, grid.length, k, k + 1);
        const auto h = dft_bins(tr.hy, grid.length, k, k + 1);
        best = std::max(best, std::abs(e[0] * h[0]));
    }
    return best;
}

/// R, T, A on a relative-detuning axis delta = (omega - omega_b) / gamma.
struct SpectrumSet {
    std::vector<double> delta;
    std::vector<double> r;
    std::vector<double> t;
    std::vector<double> a;
    bool truncated = false;
};

/// Trace ends below this fraction of the incident peak count as captured.
inline constexpr double capture_floor = 1e-11;

struct DetuningBand {
    double min = -60.0;
    double max = 60.0;
};

inline SpectrumSet assemble(const DetectorTrace& r_trace, const DetectorTrace& t_trace,
                            const DetectorTrace& ref_trace, const EmitterParams& p,
                            DetuningBand band = {})
{
    const double dt = uniform_spacing(ref_trace);
    for (const auto* tr : {&r_trace, &t_trace})
        if (std::abs(uniform_spacing(*tr) - dt) > 1e-9 * dt)
            throw SpectrumError("traces were sampled with different spacings");
    const std::size_t longest =
        std::max({r_trace.t.size(), t_trace.t.size(), ref_trace.t.size()});
    const SpectralGrid grid{dt, zero_pad_factor * longest};
    const double lo = p.omega_b() + band.min * p.gamma();
    const double hi = p.omega_b() + band.max * p.gamma();

    double incident = 0.0;
    for (double v : ref_trace.ex) incident = std::max(incident, std::abs(v));
    const double floor = capture_floor * incident;

    const auto s_r = poynting_spectrum(r_trace, grid, lo, hi, floor);
    const auto s_t = poynting_spectrum(t_trace, grid, lo, hi, floor);
    const auto s_ref = poynting_spectrum(ref_trace, grid, lo, hi, floor);
    const double ref_peak = spectral_peak(ref_trace, grid);
    const auto r = normalize(s_r, s_ref, ref_peak);
    const auto t = normalize(s_t, s_ref, ref_peak);

    SpectrumSet out;
    out.truncated = s_r.truncated || s_t.truncated || s_ref.truncated;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (std::isnan(r[i]) || std::isnan(t[i])) continue;
        out.delta.push_back((s_ref.omega[i] - p.omega_b()) / p.gamma());
        out.r.push_back(r[i]);
        out.t.push_back(t[i]);
        out.a.push_back(1.0 - r[i] - t[i]);
    }
    if (out.delta.empty()) throw SpectrumError("no frequency in the band has enough incident power");
    return out;
}

/// |rho12(t) - rho12_s(t)| sample by sample.
inline std::vector<double> coherence_error(std::span<const cplx> reference,
                                           std::span<const cplx> model)
{
    if (reference.size() != model.size())
        throw std::invalid_argument("coherence traces differ in length");
    std::vector<double> err(reference.size());
    for (std::size_t i = 0; i < err.size(); ++i) err[i] = std::abs(reference[i] - model[i]);
    return err;
}

}  // namespace mqsim
