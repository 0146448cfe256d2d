// em.hpp - 1D Yee FDTD solver coupled to per-cell two-level emitters.
//
// Ex lives on integer nodes z_i = i*dz, Hy on half nodes z_{i+1/2}. One
// time step n -> n+1 runs:
//   1. update_h           Hy^{n-1/2} -> Hy^{n+1/2}
//   2. step_cell (slab)   quantum state and Px advanced with the local field
//   3. update_e           Ex^n -> Ex^{n+1}, source term dPx/dt
//   4. TF/SF injection    incident-field corrections at the source plane
//   5. absorbing ends     one-way outgoing-wave conditions
//   6. detector sampling

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "quantum.hpp"
#include "units.hpp"

namespace mqsim {

class SolverAbort : public std::runtime_error {
public:
    SolverAbort(const std::string& what, long long step, long long cell)
        : std::runtime_error(what), step_(step), cell_(cell)
    {
    }
    long long step() const { return step_; }
    long long cell() const { return cell_; }

private:
    long long step_;
    long long cell_;
};

/// Gaussian pulse. tau_fwhm is the FWHM of the field envelope.
struct PulseSpec {
    double e0 = 1.0;        // V/m
    double omega0 = 0.0;    // rad/s
    double tau_fwhm = 0.0;  // s
    double t0 = 0.0;        // s, envelope peak at the injection plane

    void validate() const
    {
        if (!(e0 > 0.0)) throw std::invalid_argument("pulse e0 must be positive");
        if (!(omega0 > 0.0)) throw std::invalid_argument("pulse omega0 must be positive");
        if (!(tau_fwhm > 0.0)) throw std::invalid_argument("pulse tau must be positive");
        if (!(t0 >= 3.0 * tau_fwhm * (1.0 - 1e-12)))
            throw std::invalid_argument("pulse t0 must be at least 3 tau");
    }

    double envelope(double t) const
    {
        const double x = (t - t0) / tau_fwhm;
        return e0 * std::exp(-4.0 * std::log(2.0) * x * x);
    }

    double field(double t) const { return envelope(t) * std::cos(omega0 * (t - t0)); }
};

enum class BoundaryKind { mur1, delay };

struct StepperConfig {
    double courant = 0.5;
    BoundaryKind boundary = BoundaryKind::mur1;
    double pole_guard = default_pole_guard;
    int record_stride = 10;

    void validate() const
    {
        if (!(courant > 0.0 && courant <= 1.0))
            throw std::invalid_argument("courant number must lie in (0, 1]");
        if (!(pole_guard > 0.0)) throw std::invalid_argument("pole_guard must be positive");
        if (record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
    }
};

/// Index interval [begin, end) of grid nodes.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    std::size_t size() const { return end - begin; }
};

class FieldGrid {
public:
    FieldGrid(std::size_t nz, double dz, IndexRange slab, double density)
        : ex(nz, 0.0), hy(nz > 0 ? nz - 1 : 0, 0.0), px(nz, 0.0), density(nz, 0.0), dz_(dz),
          slab_(slab)
    {
        if (nz < 3) throw std::invalid_argument("grid needs at least 3 nodes");
        if (!(dz > 0.0)) throw std::invalid_argument("dz must be positive");
        if (slab.end > nz || slab.begin > slab.end)
            throw std::invalid_argument("slab range outside grid");
        if (density < 0.0) throw std::invalid_argument("density must be >= 0");
        for (std::size_t i = slab.begin; i < slab.end; ++i) this->density[i] = density;
    }

    double dz() const { return dz_; }
    std::size_t nz() const { return ex.size(); }
    const IndexRange& slab() const { return slab_; }

    std::vector<double> ex;       // V/m at z_i
    std::vector<double> hy;       // A/m at z_{i+1/2}
    std::vector<double> px;       // C/m^2 at z_i
    std::vector<double> density;  // m^-3 at z_i

private:
    double dz_;
    IndexRange slab_;
};

/// Faraday's law half step.
inline void update_h(FieldGrid& g, double dt)
{
    const double k = dt / (K::mu0 * g.dz());
    auto& ex = g.ex;
    auto& hy = g.hy;
    const std::size_t n = hy.size();
    for (std::size_t i = 0; i < n; ++i) hy[i] -= k * (ex[i + 1] - ex[i]);
}

/// Ampere's law on interior nodes with the polarization current dpx_dt.
inline void update_e(FieldGrid& g, std::span<const double> dpx_dt, double dt)
{
    const double kc = dt / K::eps0;
    const double kh = kc / g.dz();
    auto& ex = g.ex;
    const auto& hy = g.hy;
    const std::size_t n = ex.size();
    for (std::size_t i = 1; i + 1 < n; ++i)
        ex[i] -= kh * (hy[i] - hy[i - 1]) + kc * dpx_dt[i];
}

/// Lorentz-Lorenz local field inside the medium.
inline double local_field(double ex_node, double px_node, bool in_slab)
{
    return in_slab ? ex_node + px_node / (3.0 * K::eps0) : ex_node;
}

/// Drive seen by one emitter over a step: the local field at the start of
/// the step and at the start of the previous step. The field inside the step
/// is extrapolated linearly from those two values.
struct CellDrive {
    double e_loc_prev = 0.0;
    double e_loc = 0.0;
};

template <class State>
struct CellUpdate {
    State state;
    double px = 0.0;      // C/m^2
    double dpx_dt = 0.0;  // C/(m^2 s)
};

template <class Model>
CellUpdate<typename Model::state_type> step_cell(const Model& model,
                                                 const typename Model::state_type& q,
                                                 const CellDrive& drive, double px_node,
                                                 double density, double t, double dt,
                                                 const EmitterParams& p,
                                                 StepDiagnostics* diag = nullptr)
{
    const double slope = (drive.e_loc - drive.e_loc_prev) / dt;
    auto field = [&](double ts) { return drive.e_loc + slope * (ts - t); };
    CellUpdate<typename Model::state_type> out;
    out.state = rk4_step(model, q, field, t, dt, p, diag);
    out.px = density * observables(out.state, p).dipole_expect;
    out.dpx_dt = (out.px - px_node) / dt;
    return out;
}

/// Phase velocity of a vacuum plane wave of angular frequency omega on the
/// Yee grid.
inline double numerical_phase_velocity(double omega, double dz, double dt)
{
    const double s = K::c * dt / dz;
    const double arg = std::sin(0.5 * omega * dt) / s;
    if (arg >= 1.0) return K::c;  // above the grid cutoff; never used for real runs
    const double k = 2.0 * std::asin(arg) / dz;
    return omega / k;
}

/// One-way total-field/scattered-field plane wave source. Nodes in
/// [source, sink) carry the total field; nodes outside carry only the
/// scattered field. The sink plane removes the incident wave again before it
/// reaches the right boundary; sink == 0 disables it.
class TfsfSource {
public:
    TfsfSource(PulseSpec pulse, std::size_t source, std::size_t sink, double dz, double dt)
        : pulse_(pulse), source_(source), sink_(sink), dz_(dz), dt_(dt),
          velocity_(numerical_phase_velocity(pulse.omega0, dz, dt)),
          half_cell_(0.5 * dz / velocity_),
          sink_delay_(sink > source ? static_cast<double>(sink - source) * dz / velocity_ : 0.0)
    {
        if (source == 0) throw std::invalid_argument("TF/SF source node must be interior");
        if (sink != 0 && sink <= source)
            throw std::invalid_argument("TF/SF sink must lie downstream of the source");
    }

    /// Incident Ex at the source plane.
    double incident_e(double t) const { return pulse_.field(t); }
    /// Incident Hy half a cell upstream of the source plane.
    double incident_h(double t) const { return pulse_.field(t + half_cell_) / K::eta0; }

    /// Call after update_e has advanced Ex from t to t + dt. Also pre-applies
    /// the Hy corrections the next update_h needs.
    void inject(FieldGrid& g, double t) const
    {
        const double ke = dt_ / (K::eps0 * dz_);
        const double kh = dt_ / (K::mu0 * dz_);
        g.ex[source_] += ke * incident_h(t + 0.5 * dt_);
        g.hy[source_ - 1] += kh * incident_e(t + dt_);
        if (sink_ != 0) {
            g.ex[sink_] -= ke * incident_h(t + 0.5 * dt_ - sink_delay_);
            g.hy[sink_ - 1] -= kh * incident_e(t + dt_ - sink_delay_);
        }
    }

    std::size_t source() const { return source_; }
    std::size_t sink() const { return sink_; }

private:
    PulseSpec pulse_;
    std::size_t source_;
    std::size_t sink_;
    double dz_;
    double dt_;
    double velocity_;
    double half_cell_;
    double sink_delay_;
};

/// Absorbing ends for outgoing plane waves.
///   mur1:  first-order Mur condition
///            E0^{n+1} = E1^n + k (E1^{n+1} - E0^n),  k = (c dt - dz) / (c dt + dz).
///   delay: the edge node takes its neighbour's value from dz/c earlier,
///          E0(t) = E1(t - dz/c), with four-point Lagrange interpolation in
///          time. Residual reflection is set by the grid's own dispersion.
class AbsorbingBoundary {
public:
    AbsorbingBoundary(BoundaryKind kind, double dz, double dt)
        : kind_(kind), k_((K::c * dt - dz) / (K::c * dt + dz)), delay_steps_(dz / (K::c * dt))
    {
        if (kind_ == BoundaryKind::delay) {
            const double s = delay_steps_;
            exact_ = std::abs(s - std::round(s)) < 1e-9;
            if (exact_) {
                lag_ = static_cast<std::size_t>(std::llround(s));
            } else {
                // Samples j0..j0+3 bracket the target time, counted back from n+1.
                const double back = std::floor(s) + 2.0;  // age of the oldest sample
                lag_ = static_cast<std::size_t>(back);
                const double x = back - s;  // target position measured from the oldest sample
                for (int j = 0; j < 4; ++j) {
                    double w = 1.0;
                    for (int m = 0; m < 4; ++m)
                        if (m != j) w *= (x - m) / static_cast<double>(j - m);
                    weights_[j] = w;
                }
            }
            left_hist_.assign(lag_ + 1, 0.0);
            right_hist_.assign(lag_ + 1, 0.0);
        }
    }

    /// Store the values update_e is about to overwrite.
    void capture(const FieldGrid& g)
    {
        const auto n = g.nz();
        left0_ = g.ex[0];
        left1_ = g.ex[1];
        right0_ = g.ex[n - 1];
        right1_ = g.ex[n - 2];
    }

    void apply(FieldGrid& g)
    {
        const auto n = g.nz();
        if (kind_ == BoundaryKind::mur1) {
            g.ex[0] = left1_ + k_ * (g.ex[1] - left0_);
            g.ex[n - 1] = right1_ + k_ * (g.ex[n - 2] - right0_);
            return;
        }
        push(left_hist_, g.ex[1]);
        push(right_hist_, g.ex[n - 2]);
        g.ex[0] = delayed(left_hist_);
        g.ex[n - 1] = delayed(right_hist_);
    }

    BoundaryKind kind() const { return kind_; }

private:
    // history[0] is the newest sample (time n+1), history[j] is j steps older.
    void push(std::vector<double>& history, double value)
    {
        std::rotate(history.rbegin(), history.rbegin() + 1, history.rend());
        history[0] = value;
    }

    double delayed(const std::vector<double>& history) const
    {
        if (exact_) return history[lag_];
        double v = 0.0;
        for (int j = 0; j < 4; ++j) v += weights_[j] * history[lag_ - j];
        return v;
    }

    BoundaryKind kind_;
    double k_;
    double delay_steps_;
    bool exact_ = false;
    std::size_t lag_ = 0;
    double weights_[4] = {0.0, 0.0, 0.0, 0.0};
    std::vector<double> left_hist_;
    std::vector<double> right_hist_;
    double left0_ = 0.0, left1_ = 0.0, right0_ = 0.0, right1_ = 0.0;
};

// ---------------------------------------------------------------------------
// Whole-run driver.

enum class DetectorLocation { reflected, transmitted, reference };

inline std::string_view location_name(DetectorLocation l)
{
    switch (l) {
    case DetectorLocation::reflected: return "reflected";
    case DetectorLocation::transmitted: return "transmitted";
    case DetectorLocation::reference: return "reference";
    }
    return "?";
}

struct DetectorTrace {
    std::vector<double> t;   // s
    std::vector<double> ex;  // V/m
    std::vector<double> hy;  // A/m
    DetectorLocation location = DetectorLocation::transmitted;
};

struct ProbeSeries {
    std::vector<double> t;
    std::vector<double> rho11;
    std::vector<double> rho22;
    std::vector<cplx> rho12;
    std::vector<double> gamma1;  // NaN for the Bloch backend
    std::vector<double> gamma2;
    std::vector<double> norm;    // trace for Bloch
};

struct MediumSpec {
    double density = 0.0;      // m^-3
    double thickness = 600e-9; // m
    bool local_field = true;
};

struct DomainSpec {
    double dz = 1e-9;
    double gap = 1e-6;              // vacuum between source plane / slab / detector
    double margin = 50e-9;          // detector to absorbing end
    double source_offset = 50e-9;   // detector to TF/SF plane, both sides
};

struct StopRule {
    double t_max = 3e-12;        // hard cap, s
    double quiet_level = 1e-6;   // relative to each detector's own peak
    double noise_floor = 1e-12;  // relative to the pulse amplitude e0
    double quiet_span_tau = 5.0; // quiet time required, in units of tau
    bool stop_when_quiet = true;
};

struct SimulationSetup {
    EmitterParams emitter{1.0, 1.0, 0.0, 0.0};
    MediumSpec medium;
    PulseSpec pulse;
    StepperConfig stepper;
    DomainSpec domain;
    StopRule stop;
    double probe_depth = 290e-9;
};

struct GridLayout {
    std::size_t nz = 0;
    std::size_t reflected = 0;
    std::size_t source = 0;
    IndexRange slab;
    std::size_t transmitted = 0;
    std::size_t sink = 0;
    std::size_t probe = 0;
    double dz = 0.0;
    double dt = 0.0;
};

inline std::size_t cells_for(double length, double dz)
{
    return static_cast<std::size_t>(std::llround(length / dz));
}

inline GridLayout make_layout(const SimulationSetup& s)
{
    const auto& d = s.domain;
    if (!(d.dz > 0.0)) throw std::invalid_argument("dz must be positive");
    GridLayout l;
    l.dz = d.dz;
    l.dt = s.stepper.courant * d.dz / K::c;
    l.reflected = std::max<std::size_t>(cells_for(d.margin, d.dz), 1);
    l.source = l.reflected + std::max<std::size_t>(cells_for(d.source_offset, d.dz), 1);
    l.slab.begin = l.source + std::max<std::size_t>(cells_for(d.gap, d.dz), 1);
    l.slab.end = l.slab.begin + cells_for(s.medium.thickness, d.dz);
    l.transmitted = l.slab.end + std::max<std::size_t>(cells_for(d.gap, d.dz), 1);
    l.sink = l.transmitted + std::max<std::size_t>(cells_for(d.source_offset, d.dz), 1);
    l.nz = l.sink + std::max<std::size_t>(cells_for(d.margin, d.dz), 1) + 1;
    l.probe = l.slab.begin + cells_for(s.probe_depth, d.dz);
    if (l.slab.size() > 0 && l.probe >= l.slab.end) l.probe = l.slab.end - 1;
    return l;
}

struct RunDiagnostics {
    long long steps = 0;
    double t_end = 0.0;
    bool stopped_quiet = false;
    long long pole_events = 0;
    double min_pole_distance = 1.0;  // NH1 only
    double max_norm_drift = 0.0;     // max |norm - 1| at the probe
    double runtime_s = 0.0;
};

struct RawRecords {
    Backend backend = Backend::bloch;
    GridLayout layout;
    DetectorTrace reflected;
    DetectorTrace transmitted;
    ProbeSeries probe;
    RunDiagnostics diagnostics;
};

namespace detail {

inline void sample_detector(DetectorTrace& d, const FieldGrid& g, std::size_t node, double t)
{
    d.t.push_back(t);
    d.ex.push_back(g.ex[node]);
    d.hy.push_back(0.5 * (g.hy[node - 1] + g.hy[node]));
}

template <class Model>
GainDecayRates probe_rates(const Model& model, const typename Model::state_type& q,
                           const EmitterParams& p)
{
    if constexpr (requires { model.rates(q, p); }) {
        return model.rates(q, p);
    } else {
        const double nan = std::nan("");
        return {nan, nan, false};
    }
}

/// Tracks when a detector last saw a field above quiet_level * its peak.
struct QuietWatch {
    double peak = 0.0;
    double last_loud = 0.0;
    void observe(double value, double t, double level, double floor)
    {
        const double a = std::abs(value);
        if (a > peak) peak = a;
        if (a > std::max(level * peak, floor)) last_loud = t;
    }
};

template <class Model>
RawRecords run_model(const SimulationSetup& s, const Model& model, Backend backend)
{
    const auto wall0 = std::chrono::steady_clock::now();
    s.pulse.validate();
    s.stepper.validate();
    const GridLayout lay = make_layout(s);
    const double dt = lay.dt;
    const auto& p = s.emitter;

    FieldGrid grid(lay.nz, lay.dz, lay.slab, s.medium.density);
    const bool medium_on = s.medium.density > 0.0 && lay.slab.size() > 0;
    TfsfSource source(s.pulse, lay.source, lay.sink, lay.dz, dt);
    AbsorbingBoundary boundary(s.stepper.boundary, lay.dz, dt);

    using State = typename Model::state_type;
    std::vector<State> states(lay.slab.size(), Model::initial());
    std::vector<double> e_loc_prev(lay.slab.size(), 0.0);
    std::vector<double> dpx(lay.nz, 0.0);

    RawRecords rec;
    rec.backend = backend;
    rec.layout = lay;
    rec.reflected.location = DetectorLocation::reflected;
    rec.transmitted.location = DetectorLocation::transmitted;
    StepDiagnostics sdiag;
    StepDiagnostics* diag_ptr = &sdiag;

    const double tau = s.pulse.tau_fwhm;
    const double transit = static_cast<double>(lay.transmitted - lay.reflected) * lay.dz / K::c;
    const double t_min_stop = s.pulse.t0 + 3.0 * tau + 2.0 * transit;
    const double quiet_span = s.stop.quiet_span_tau * tau;
    QuietWatch watch_r, watch_t;

    const auto record_probe = [&](double t) {
        if (!medium_on) return;
        const auto& q = states[lay.probe - lay.slab.begin];
        const auto o = observables(q, p);
        const auto r = probe_rates(model, q, p);
        auto& pr = rec.probe;
        pr.t.push_back(t);
        pr.rho11.push_back(o.pop_ground);
        pr.rho22.push_back(o.pop_excited);
        pr.rho12.push_back(o.coherence);
        pr.gamma1.push_back(r.ground_gain);
        pr.gamma2.push_back(r.excited_decay);
        const double nrm = o.pop_ground + o.pop_excited;
        pr.norm.push_back(nrm);
        rec.diagnostics.max_norm_drift =
            std::max(rec.diagnostics.max_norm_drift, std::abs(nrm - 1.0));
    };

    record_probe(0.0);
    long long step = 0;
    double t = 0.0;
    const auto max_steps = static_cast<long long>(std::ceil(s.stop.t_max / dt));
    while (step < max_steps) {
        update_h(grid, dt);

        if (medium_on) {
            for (std::size_t k = 0; k < states.size(); ++k) {
                const std::size_t i = lay.slab.begin + k;
                const double e_loc = local_field(grid.ex[i], grid.px[i], s.medium.local_field);
                const CellDrive drive{e_loc_prev[k], e_loc};
                auto up = step_cell(model, states[k], drive, grid.px[i], grid.density[i], t,
                                    dt, p, diag_ptr);
                states[k] = up.state;
                dpx[i] = up.dpx_dt;
                grid.px[i] = up.px;
                e_loc_prev[k] = e_loc;
            }
        }

        boundary.capture(grid);
        update_e(grid, dpx, dt);
        source.inject(grid, t);
        boundary.apply(grid);

        ++step;
        t = static_cast<double>(step) * dt;

        for (std::size_t i = 0; i < lay.nz; ++i) {
            if (!std::isfinite(grid.ex[i])) {
                std::ostringstream msg;
                msg << "non-finite Ex at step " << step << ", cell " << i;
                throw SolverAbort(msg.str(), step, static_cast<long long>(i));
            }
        }

        const double floor = s.stop.noise_floor * s.pulse.e0;
        watch_r.observe(grid.ex[lay.reflected], t, s.stop.quiet_level, floor);
        watch_t.observe(grid.ex[lay.transmitted], t, s.stop.quiet_level, floor);

        if (step % s.stepper.record_stride == 0) {
            sample_detector(rec.reflected, grid, lay.reflected, t);
            sample_detector(rec.transmitted, grid, lay.transmitted, t);
            record_probe(t);
            if (s.stop.stop_when_quiet && t > t_min_stop &&
                t - watch_r.last_loud >= quiet_span && t - watch_t.last_loud >= quiet_span) {
                rec.diagnostics.stopped_quiet = true;
                break;
            }
        }
    }

    rec.diagnostics.steps = step;
    rec.diagnostics.t_end = t;
    rec.diagnostics.pole_events = sdiag.pole_events;
    rec.diagnostics.min_pole_distance = sdiag.min_pole_distance;
    rec.diagnostics.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return rec;
}

}  // namespace detail

/// Runs one simulation with the given backend. A setup with zero density is
/// the vacuum reference.
inline RawRecords run(const SimulationSetup& s, Backend backend)
{
    switch (backend) {
    case Backend::bloch: return detail::run_model(s, BlochModel{}, backend);
    case Backend::nh1: return detail::run_model(s, Nh1Model{s.stepper.pole_guard}, backend);
    case Backend::nh2: return detail::run_model(s, Nh2Model{}, backend);
    }
    throw std::logic_error("unknown backend");
}

}  // namespace mqsim
