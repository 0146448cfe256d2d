// quantum.hpp - two-level emitter dynamics.
//
// Three interchangeable models share one stepping interface:
//   Bloch  - optical Bloch equations for the 2x2 density matrix (reference).
//   Nh1    - non-Hermitian amplitudes with norm-conserving gain/decay rates.
//            The rates have a pole at |c1|^2 == |c2|^2.
//   Nh2    - non-Hermitian amplitudes with rates chosen to reproduce the
//            population-difference equation. Pole free.
//
// Conventions: level energies hbar*0 and hbar*omega_b, coupling
// hbar*Omega*(|2><1| + |1><2|) with Omega = -mu_x E_loc / hbar, and
// rho12 = <1|rho|2>, so that the field-free coherence evolves as
// exp((i omega_b - gamma) t). For amplitudes, rho12 = c1 * conj(c2).

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

#include "units.hpp"

namespace mqsim {

using cplx = std::complex<double>;

/// One two-level species. All rates in s^-1, frequency in rad/s, dipole in C m.
class EmitterParams {
public:
    EmitterParams(double omega_b, double mu_x, double gamma_star, double big_gamma)
        : omega_b_(omega_b), mu_x_(mu_x), gamma_star_(gamma_star), big_gamma_(big_gamma),
          gamma_(gamma_star + 0.5 * big_gamma)
    {
        if (!(omega_b > 0.0)) throw std::invalid_argument("omega_b must be positive");
        if (!(mu_x > 0.0)) throw std::invalid_argument("mu_x must be positive");
        if (!(gamma_star >= 0.0)) throw std::invalid_argument("gamma_star must be >= 0");
        if (!(big_gamma >= 0.0)) throw std::invalid_argument("big_gamma must be >= 0");
    }

    double omega_b() const { return omega_b_; }
    double mu_x() const { return mu_x_; }
    /// Pure dephasing rate.
    double gamma_star() const { return gamma_star_; }
    /// Nonradiative population decay rate of the excited state.
    double big_gamma() const { return big_gamma_; }
    /// Total decoherence rate, gamma_star + big_gamma / 2.
    double gamma() const { return gamma_; }

private:
    double omega_b_;
    double mu_x_;
    double gamma_star_;
    double big_gamma_;
    double gamma_;
};

/// Density matrix of one emitter; rho21 is conj(rho12).
struct BlochState {
    double rho11 = 1.0;
    double rho22 = 0.0;
    cplx rho12{0.0, 0.0};

    static constexpr BlochState ground() { return {1.0, 0.0, {0.0, 0.0}}; }

    BlochState& operator+=(const BlochState& o)
    {
        rho11 += o.rho11;
        rho22 += o.rho22;
        rho12 += o.rho12;
        return *this;
    }
    friend BlochState operator+(BlochState a, const BlochState& b) { return a += b; }
    friend BlochState operator*(double k, const BlochState& s)
    {
        return {k * s.rho11, k * s.rho22, k * s.rho12};
    }
};

/// Wave packet amplitudes c1|1> + c2|2>.
struct WaveCoeffs {
    cplx c1{1.0, 0.0};
    cplx c2{0.0, 0.0};

    static constexpr WaveCoeffs ground() { return {{1.0, 0.0}, {0.0, 0.0}}; }

    double norm() const { return std::norm(c1) + std::norm(c2); }

    WaveCoeffs& operator+=(const WaveCoeffs& o)
    {
        c1 += o.c1;
        c2 += o.c2;
        return *this;
    }
    friend WaveCoeffs operator+(WaveCoeffs a, const WaveCoeffs& b) { return a += b; }
    friend WaveCoeffs operator*(double k, const WaveCoeffs& s) { return {k * s.c1, k * s.c2}; }
};

struct QuantumObservables {
    double pop_ground = 1.0;
    double pop_excited = 0.0;
    cplx coherence{0.0, 0.0};
    double dipole_expect = 0.0;  // C m
};

/// Gain of the ground state (gamma1) and decay of the excited state (gamma2).
struct GainDecayRates {
    double ground_gain = 0.0;
    double excited_decay = 0.0;
    bool pole_clamped = false;
};

/// Counters accumulated while stepping; one instance per simulation.
struct StepDiagnostics {
    long long pole_events = 0;
    double min_pole_distance = 1.0;
};

inline double rabi_frequency(double e_local, const EmitterParams& p)
{
    return -p.mu_x() * e_local / K::hbar;
}

namespace detail {
// (a + i b) * z without the NaN-recovery path of std::complex multiplication.
inline cplx mul(double a, double b, cplx z)
{
    return {a * z.real() - b * z.imag(), a * z.imag() + b * z.real()};
}
}  // namespace detail

inline BlochState bloch_rhs(const BlochState& s, double omega, const EmitterParams& p)
{
    // rho12 - rho21 = 2i Im(rho12)
    const double flow = -2.0 * omega * s.rho12.imag();   // i*Omega*(rho12 - rho21)
    const double decay = p.big_gamma() * s.rho22;
    BlochState d;
    d.rho11 = flow + decay;
    d.rho22 = -flow - decay;
    d.rho12 = cplx{0.0, omega * (s.rho11 - s.rho22)} +
              detail::mul(-p.gamma(), p.omega_b(), s.rho12);
    return d;
}

inline constexpr double default_pole_guard = 1e-6;

/// Norm-conserving rates. Near the pole the denominator is clamped to
/// +-pole_guard, keeping its sign, and the result is flagged.
inline GainDecayRates nh1_rates(const WaveCoeffs& c, const EmitterParams& p,
                                double pole_guard = default_pole_guard)
{
    const double p1 = std::norm(c.c1);
    const double p2 = std::norm(c.c2);
    double denom = p1 - p2;
    bool clamped = false;
    if (std::abs(denom) < pole_guard) {
        denom = std::signbit(denom) ? -pole_guard : pole_guard;
        clamped = true;
    }
    const double two_gamma = 2.0 * p.gamma();
    return {two_gamma * p2 / denom, two_gamma * p1 / denom, clamped};
}

/// Rates that keep gamma2 - gamma1 = 2 gamma and
/// gamma1 |c1|^2 + gamma2 |c2|^2 = 2 Gamma |c2|^2.
inline GainDecayRates nh2_rates(const WaveCoeffs& c, const EmitterParams& p)
{
    const double p1 = std::norm(c.c1);
    const double p2 = std::norm(c.c2);
    const double total = p1 + p2;
    if (!(total > 0.0)) throw std::domain_error("nh2_rates: zero wave packet");
    const double gain = (p.big_gamma() - 2.0 * p.gamma_star()) * p2 / total;
    const double decay = (2.0 * p.gamma() * p1 + 2.0 * p.big_gamma() * p2) / total;
    return {gain, decay, false};
}

/// Time derivative of (c1, c2) for given instantaneous rates.
inline WaveCoeffs nh_rhs(const WaveCoeffs& c, double omega, const GainDecayRates& r,
                         const EmitterParams& p)
{
    WaveCoeffs d;
    d.c1 = 0.5 * r.ground_gain * c.c1 + detail::mul(0.0, -omega, c.c2);
    d.c2 = detail::mul(0.0, -omega, c.c1) + detail::mul(-0.5 * r.excited_decay, -p.omega_b(), c.c2);
    return d;
}

inline QuantumObservables observables(const BlochState& s, const EmitterParams& p)
{
    return {s.rho11, s.rho22, s.rho12, 2.0 * p.mu_x() * s.rho12.real()};
}

inline QuantumObservables observables(const WaveCoeffs& c, const EmitterParams& p)
{
    const cplx coh = detail::mul(c.c1.real(), c.c1.imag(), std::conj(c.c2));
    return {std::norm(c.c1), std::norm(c.c2), coh, 2.0 * p.mu_x() * coh.real()};
}

// Backend models: each provides state_type, initial(), and
// derivative(state, omega, params, diag).

struct BlochModel {
    using state_type = BlochState;
    static constexpr std::string_view name = "bloch";
    static state_type initial() { return BlochState::ground(); }
    state_type derivative(const state_type& s, double omega, const EmitterParams& p,
                          StepDiagnostics*) const
    {
        return bloch_rhs(s, omega, p);
    }
};

struct Nh1Model {
    using state_type = WaveCoeffs;
    static constexpr std::string_view name = "nh1";
    double pole_guard = default_pole_guard;
    static state_type initial() { return WaveCoeffs::ground(); }
    GainDecayRates rates(const state_type& c, const EmitterParams& p) const
    {
        return nh1_rates(c, p, pole_guard);
    }
    state_type derivative(const state_type& c, double omega, const EmitterParams& p,
                          StepDiagnostics* diag) const
    {
        const auto r = rates(c, p);
        if (diag) {
            if (r.pole_clamped) ++diag->pole_events;
            const double dist = std::abs(std::norm(c.c1) - std::norm(c.c2));
            if (dist < diag->min_pole_distance) diag->min_pole_distance = dist;
        }
        return nh_rhs(c, omega, r, p);
    }
};

struct Nh2Model {
    using state_type = WaveCoeffs;
    static constexpr std::string_view name = "nh2";
    static state_type initial() { return WaveCoeffs::ground(); }
    GainDecayRates rates(const state_type& c, const EmitterParams& p) const
    {
        return nh2_rates(c, p);
    }
    state_type derivative(const state_type& c, double omega, const EmitterParams& p,
                          StepDiagnostics*) const
    {
        return nh_rhs(c, omega, nh2_rates(c, p), p);
    }
};

/// Classical fourth-order Runge-Kutta step. field(t) returns the local
/// field in V/m; it is sampled at t, t + dt/2 and t + dt. State-dependent
/// rates are re-evaluated at every stage.
template <class Model, class FieldSampler>
typename Model::state_type rk4_step(const Model& model, const typename Model::state_type& s,
                                    FieldSampler&& field, double t, double dt,
                                    const EmitterParams& p, StepDiagnostics* diag = nullptr)
{
    const double w0 = rabi_frequency(field(t), p);
    const double wh = rabi_frequency(field(t + 0.5 * dt), p);
    const double w1 = rabi_frequency(field(t + dt), p);
    const auto k1 = model.derivative(s, w0, p, diag);
    const auto k2 = model.derivative(s + (0.5 * dt) * k1, wh, p, diag);
    const auto k3 = model.derivative(s + (0.5 * dt) * k2, wh, p, diag);
    const auto k4 = model.derivative(s + dt * k3, w1, p, diag);
    return s + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
}

enum class Backend { bloch, nh1, nh2 };

inline std::string_view backend_name(Backend b)
{
    switch (b) {
    case Backend::bloch: return BlochModel::name;
    case Backend::nh1: return Nh1Model::name;
    case Backend::nh2: return Nh2Model::name;
    }
    return "?";
}

inline Backend parse_backend(std::string_view s)
{
    if (s == BlochModel::name) return Backend::bloch;
    if (s == Nh1Model::name) return Backend::nh1;
    if (s == Nh2Model::name) return Backend::nh2;
    throw std::invalid_argument("unknown backend '" + std::string(s) +
                                "' (expected bloch, nh1 or nh2)");
}

}  // namespace mqsim
