#include <cmath>
#include <complex>
#include <vector>

#include <gtest/gtest.h>

#include "mqsim/em.hpp"

using namespace mqsim;

namespace {

EmitterParams reference_params()
{
    return EmitterParams(convert(2.0, Unit::eV, Unit::rad_per_s),
                         convert(4.0, Unit::debye, Unit::C_m), 1e13, 1e12);
}

PulseSpec reference_pulse(double e0 = 1.0)
{
    return {e0, convert(2.0, Unit::eV, Unit::rad_per_s), 10e-15, 30e-15};
}

// Small, fast geometry: 2 nm cells, 100 nm slab, short gaps.
SimulationSetup small_setup(double density)
{
    SimulationSetup s;
    s.emitter = reference_params();
    s.pulse = reference_pulse();
    s.medium.density = density;
    s.medium.thickness = 100e-9;
    s.domain.dz = 2e-9;
    s.domain.gap = 400e-9;
    s.probe_depth = 50e-9;
    return s;
}

double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST(FieldGrid, Shapes)
{
    FieldGrid g(10, 1e-9, {3, 6}, 2.0);
    EXPECT_EQ(g.ex.size(), 10u);
    EXPECT_EQ(g.px.size(), 10u);
    EXPECT_EQ(g.hy.size(), 9u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(g.density[i] > 0.0, g.slab().contains(i));
    EXPECT_THROW(FieldGrid(10, 1e-9, {3, 11}, 1.0), std::invalid_argument);
    EXPECT_THROW(FieldGrid(10, 1e-9, {3, 6}, -1.0), std::invalid_argument);
}

TEST(UpdateH, UniformFieldLeavesHUnchanged)
{
    FieldGrid g(8, 1e-9, {0, 0}, 0.0);
    std::fill(g.ex.begin(), g.ex.end(), 3.0);
    g.hy[2] = 0.25;
    update_h(g, 1e-18);
    for (std::size_t i = 0; i < g.hy.size(); ++i) EXPECT_EQ(g.hy[i], i == 2 ? 0.25 : 0.0);
}

TEST(UpdateH, SingleNodeStencil)
{
    const double dz = 1e-9, dt = 0.5 * dz / K::c;
    FieldGrid g(8, dz, {0, 0}, 0.0);
    g.ex[4] = 2.0;
    update_h(g, dt);
    const double k = dt / (K::mu0 * dz);
    EXPECT_DOUBLE_EQ(g.hy[3], -k * 2.0);
    EXPECT_DOUBLE_EQ(g.hy[4], k * 2.0);
    for (std::size_t i : {0u, 1u, 2u, 5u, 6u}) EXPECT_EQ(g.hy[i], 0.0);
}

TEST(UpdateE, PolarizationCurrentOnly)
{
    const double dz = 1e-9, dt = 0.5 * dz / K::c;
    FieldGrid g(8, dz, {2, 5}, 1.0);
    std::fill(g.hy.begin(), g.hy.end(), 0.1);
    std::vector<double> dpx(8, 0.0);
    dpx[3] = 1e-3;
    update_e(g, dpx, dt);
    EXPECT_DOUBLE_EQ(g.ex[3], -(dt / K::eps0) * 1e-3);
    EXPECT_EQ(g.ex[2], 0.0);
    EXPECT_EQ(g.ex[0], 0.0);  // ends belong to the boundary
}

TEST(LocalField, Examples)
{
    EXPECT_EQ(local_field(1.5, 0.0, true), 1.5);
    EXPECT_NEAR(local_field(0.0, 3.0 * K::eps0, true), 1.0, 1e-15);
    EXPECT_EQ(local_field(2.0, 1.0, false), 2.0);
}

TEST(StepCell, ZeroFieldGroundState)
{
    const auto p = reference_params();
    const auto up = step_cell(BlochModel{}, BlochState::ground(), CellDrive{0.0, 0.0}, 0.0, 1e26,
                              0.0, 1e-18, p);
    EXPECT_EQ(up.px, 0.0);
    EXPECT_EQ(up.dpx_dt, 0.0);
}

TEST(StepCell, PolarizationFromCoherence)
{
    const auto p = reference_params();
    const double n = 1e25, dt = 1e-18;
    const BlochState s{0.8, 0.2, {0.3, 0.1}};
    const auto up = step_cell(BlochModel{}, s, CellDrive{0.0, 0.0}, 0.5, n, 0.0, dt, p);
    EXPECT_DOUBLE_EQ(up.px, n * 2.0 * p.mu_x() * up.state.rho12.real());
    EXPECT_DOUBLE_EQ(up.dpx_dt, (up.px - 0.5) / dt);
}

TEST(StepCell, WeakPulseBlochAndNh2PolarizationsAgree)
{
    const auto p = reference_params();
    const auto pulse = reference_pulse();
    const double dt = 0.5e-9 / K::c, n = 1e20;
    BlochState b = BlochState::ground();
    WaveCoeffs c = WaveCoeffs::ground();
    double pb = 0.0, pc = 0.0, peak = 0.0, worst = 0.0, e_prev = 0.0;
    for (long k = 0; k < 200000; ++k) {
        const double t = k * dt, e = pulse.field(t);
        auto ub = step_cell(BlochModel{}, b, {e_prev, e}, pb, n, t, dt, p);
        auto uc = step_cell(Nh2Model{}, c, {e_prev, e}, pc, n, t, dt, p);
        b = ub.state, c = uc.state, pb = ub.px, pc = uc.px, e_prev = e;
        peak = std::max(peak, std::abs(pb));
        worst = std::max(worst, std::abs(pb - pc));
    }
    EXPECT_GT(peak, 0.0);
    EXPECT_LT(worst, 1e-6 * peak);
}

TEST(Pulse, ValidationAndTail)
{
    const auto p = reference_pulse(2.0);
    EXPECT_NO_THROW(p.validate());
    EXPECT_LT(std::abs(p.field(0.0)), 1e-8 * p.e0);
    EXPECT_DOUBLE_EQ(p.field(p.t0), 2.0);
    // field FWHM
    EXPECT_NEAR(p.envelope(p.t0 + 0.5 * p.tau_fwhm), 1.0, 1e-12);
    PulseSpec early = p;
    early.t0 = 2.0 * p.tau_fwhm;
    EXPECT_THROW(early.validate(), std::invalid_argument);
}

TEST(Stepper, CourantBound)
{
    StepperConfig s;
    EXPECT_NO_THROW(s.validate());
    s.courant = 1.2;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.courant = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Dispersion, TwentyPointsPerWavelength)
{
    const double omega = convert(2.0, Unit::eV, Unit::rad_per_s);
    const double lambda = 2.0 * M_PI * K::c / omega;
    const double dz = lambda / 20.0;
    const double v = numerical_phase_velocity(omega, dz, 0.5 * dz / K::c);
    EXPECT_LT(v, K::c);
    EXPECT_LT(std::abs(v / K::c - 1.0), 5e-3);
}

namespace {

// Vacuum grid with a TF/SF source, no sink, Mur ends. Returns traces at an
// upstream and two downstream nodes. swap_order exchanges the two field
// updates inside a step, leaving the source timing as it was.
struct VacuumProbe {
    std::vector<double> upstream, near, far;
    double dt = 0.0, dz = 0.0;
    std::size_t near_node = 0, far_node = 0;
};

VacuumProbe vacuum_probe(double dz, bool swap_order)
{
    const auto pulse = reference_pulse();
    const double dt = 0.5 * dz / K::c;
    const auto node = [dz](double z) { return static_cast<std::size_t>(std::llround(z / dz)); };
    const std::size_t nz = node(40e-6), src = node(1e-6), up = node(0.5e-6);
    VacuumProbe out;
    out.dt = dt, out.dz = dz;
    out.near_node = src + node(3e-6);
    out.far_node = src + node(9e-6);
    FieldGrid g(nz, dz, {0, 0}, 0.0);
    TfsfSource source(pulse, src, 0, dz, dt);
    AbsorbingBoundary ends(BoundaryKind::mur1, dz, dt);
    std::vector<double> dpx(nz, 0.0);
    // stop before the pulse front reaches the far end
    const long steps = static_cast<long>(110e-15 / dt);
    for (long n = 0; n < steps; ++n) {
        const double t = n * dt;
        if (swap_order) {
            ends.capture(g);
            update_e(g, dpx, dt);
            update_h(g, dt);
            source.inject(g, t);
            ends.apply(g);
        } else {
            update_h(g, dt);
            ends.capture(g);
            update_e(g, dpx, dt);
            source.inject(g, t);
            ends.apply(g);
        }
        out.upstream.push_back(g.ex[up]);
        out.near.push_back(g.ex[out.near_node]);
        out.far.push_back(g.ex[out.far_node]);
    }
    return out;
}

std::complex<double> carrier_phasor(const std::vector<double>& x, double omega, double dt)
{
    std::complex<double> s{0.0, 0.0};
    for (std::size_t n = 0; n < x.size(); ++n)
        s += x[n] * std::polar(1.0, -omega * static_cast<double>(n + 1) * dt);
    return s;
}

}  // namespace

TEST(Vacuum, PulsePropagatesAtGridPhaseVelocity)
{
    const double omega = convert(2.0, Unit::eV, Unit::rad_per_s);
    const double lambda = 2.0 * M_PI * K::c / omega;
    const auto pr = vacuum_probe(lambda / 20.0, false);
    const auto a = carrier_phasor(pr.near, omega, pr.dt);
    const auto b = carrier_phasor(pr.far, omega, pr.dt);
    const double dist = static_cast<double>(pr.far_node - pr.near_node) * pr.dz;
    double dphi = std::arg(a) - std::arg(b);
    // unwrap with the expected delay
    const double expect = omega * dist / K::c;
    dphi += 2.0 * M_PI * std::round((expect - dphi) / (2.0 * M_PI));
    const double v = omega * dist / dphi;
    EXPECT_LT(std::abs(v / K::c - 1.0), 5e-3);
    EXPECT_NEAR(v, numerical_phase_velocity(omega, pr.dz, pr.dt), 1e-3 * K::c);
}

TEST(Vacuum, SwappedLeapfrogBreaksTheSource)
{
    const double omega = convert(2.0, Unit::eV, Unit::rad_per_s);
    const double lambda = 2.0 * M_PI * K::c / omega;
    const auto good = vacuum_probe(lambda / 20.0, false);
    const auto bad = vacuum_probe(lambda / 20.0, true);
    EXPECT_LT(max_abs(good.upstream), 1e-4);
    EXPECT_GT(max_abs(bad.upstream), 1e-3);
}

namespace {

// Gaussian packet launched inside a bare grid towards one end.
double boundary_residual(BoundaryKind kind, bool leftward)
{
    const double dz = 2e-9, dt = 0.5 * dz / K::c;
    const std::size_t nz = 10001;  // 20 um
    const double omega = convert(2.0, Unit::eV, Unit::rad_per_s);
    const double width = 3e-6 / 2.355;  // 10 fs of light
    const double z0 = 10e-6;
    FieldGrid g(nz, dz, {0, 0}, 0.0);
    const double dir = leftward ? -1.0 : 1.0;
    auto wave = [&](double z, double t) {
        const double u = z - z0 - dir * K::c * t;
        return std::exp(-0.5 * u * u / (width * width)) * std::cos(omega / K::c * u);
    };
    for (std::size_t i = 0; i < nz; ++i) g.ex[i] = wave(i * dz, 0.0);
    for (std::size_t i = 0; i + 1 < nz; ++i) g.hy[i] = dir * wave((i + 0.5) * dz, -0.5 * dt) / K::eta0;

    AbsorbingBoundary ends(kind, dz, dt);
    std::vector<double> dpx(nz, 0.0);
    // long enough for the packet to leave, too short for an echo to cross back
    const long steps = static_cast<long>(16e-6 / K::c / dt);
    for (long n = 0; n < steps; ++n) {
        update_h(g, dt);
        ends.capture(g);
        update_e(g, dpx, dt);
        ends.apply(g);
    }
    return max_abs(g.ex);
}

}  // namespace

TEST(Boundary, MurAbsorbsRightwardPulse)
{
    EXPECT_LT(boundary_residual(BoundaryKind::mur1, false), 1e-3);
}

TEST(Boundary, MurAbsorbsLeftwardPulse)
{
    EXPECT_LT(boundary_residual(BoundaryKind::mur1, true), 1e-3);
}

TEST(Boundary, DelayLineAbsorbsBothWays)
{
    EXPECT_LT(boundary_residual(BoundaryKind::delay, false), 1e-3);
    EXPECT_LT(boundary_residual(BoundaryKind::delay, true), 1e-3);
}

TEST(Boundary, ZeroFieldStaysZero)
{
    for (auto kind : {BoundaryKind::mur1, BoundaryKind::delay}) {
        FieldGrid g(50, 1e-9, {0, 0}, 0.0);
        AbsorbingBoundary ends(kind, 1e-9, 0.5e-9 / K::c);
        std::vector<double> dpx(50, 0.0);
        for (int n = 0; n < 100; ++n) {
            update_h(g, 0.5e-9 / K::c);
            ends.capture(g);
            update_e(g, dpx, 0.5e-9 / K::c);
            ends.apply(g);
        }
        EXPECT_EQ(max_abs(g.ex), 0.0);
        EXPECT_EQ(max_abs(g.hy), 0.0);
    }
}

TEST(Layout, OrderingAndDefaults)
{
    SimulationSetup s;
    s.emitter = reference_params();
    s.pulse = reference_pulse();
    const auto l = make_layout(s);
    EXPECT_LT(l.reflected, l.source);
    EXPECT_LT(l.source, l.slab.begin);
    EXPECT_EQ(l.slab.size(), 600u);
    EXPECT_LT(l.slab.end, l.transmitted);
    EXPECT_LT(l.transmitted, l.sink);
    EXPECT_LT(l.sink, l.nz - 1);
    EXPECT_EQ(l.probe, l.slab.begin + 290);
    EXPECT_GE((l.slab.begin - l.source) * l.dz, 1e-6 - 1e-12);
    EXPECT_DOUBLE_EQ(l.dt, 0.5 * 1e-9 / K::c);
}

TEST(Run, VacuumTransmittedMatchesDelayedIncident)
{
    SimulationSetup s;
    s.emitter = reference_params();
    s.pulse = reference_pulse(1.0);
    const auto rec = run(s, Backend::bloch);
    const auto& l = rec.layout;
    EXPECT_TRUE(rec.diagnostics.stopped_quiet);
    const double v = numerical_phase_velocity(s.pulse.omega0, l.dz, l.dt);
    const double delay = static_cast<double>(l.transmitted - l.source) * l.dz / v;
    double worst = 0.0;
    for (std::size_t k = 0; k < rec.transmitted.t.size(); ++k)
        worst = std::max(worst, std::abs(rec.transmitted.ex[k] -
                                         s.pulse.field(rec.transmitted.t[k] - delay)));
    EXPECT_LT(worst, 5e-3 * s.pulse.e0);
    EXPECT_LT(max_abs(rec.reflected.ex), 1e-4 * s.pulse.e0);
    EXPECT_NEAR(max_abs(rec.transmitted.ex), s.pulse.e0, 5e-3 * s.pulse.e0);
}

TEST(Run, VacuumFluxIsConserved)
{
    SimulationSetup s;
    s.emitter = reference_params();
    s.pulse = reference_pulse(1.0);
    const auto rec = run(s, Backend::bloch);
    const double dt = rec.transmitted.t[1] - rec.transmitted.t[0];
    double flux = 0.0, injected = 0.0;
    for (std::size_t k = 0; k < rec.transmitted.t.size(); ++k) {
        flux += rec.transmitted.ex[k] * rec.transmitted.hy[k] * dt;
        const double e = s.pulse.field(rec.transmitted.t[k]);
        injected += e * e / K::eta0 * dt;
    }
    EXPECT_NEAR(flux / injected, 1.0, 2e-3);
}

TEST(Run, BackendsAgreeWithoutDissipationInWeakField)
{
    auto s = small_setup(1e25);
    s.emitter = EmitterParams(reference_params().omega_b(), reference_params().mu_x(), 0.0, 0.0);
    s.stop.t_max = 150e-15;
    s.stop.stop_when_quiet = false;
    const auto b = run(s, Backend::bloch);
    const auto n1 = run(s, Backend::nh1);
    const auto n2 = run(s, Backend::nh2);
    const double peak = max_abs(b.transmitted.ex);
    ASSERT_EQ(b.transmitted.ex.size(), n1.transmitted.ex.size());
    ASSERT_EQ(b.transmitted.ex.size(), n2.transmitted.ex.size());
    double d1 = 0.0, d2 = 0.0;
    for (std::size_t k = 0; k < b.transmitted.ex.size(); ++k) {
        d1 = std::max(d1, std::abs(b.transmitted.ex[k] - n1.transmitted.ex[k]));
        d2 = std::max(d2, std::abs(b.transmitted.ex[k] - n2.transmitted.ex[k]));
    }
    EXPECT_LT(d1, 1e-6 * peak);
    EXPECT_LT(d2, 1e-6 * peak);
    // the medium did something
    const auto vac = run([&] { auto v = s; v.medium.density = 0.0; return v; }(), Backend::bloch);
    double dv = 0.0;
    for (std::size_t k = 0; k < b.transmitted.ex.size(); ++k)
        dv = std::max(dv, std::abs(b.transmitted.ex[k] - vac.transmitted.ex[k]));
    EXPECT_GT(dv, 1e-3 * peak);
}

TEST(Run, LocalFieldIsNegligibleAtWeakInteraction)
{
    // eta = 1.3e-7 for the reference emitter
    auto s = small_setup(6.443494694634e19);
    s.stop.t_max = 400e-15;
    s.stop.stop_when_quiet = false;
    const auto on = run(s, Backend::bloch);
    s.medium.local_field = false;
    const auto off = run(s, Backend::bloch);
    s.medium.density = 0.0;
    const auto vac = run(s, Backend::bloch);
    // compare the medium's own response (total minus vacuum)
    double resp = 0.0, diff = 0.0;
    for (std::size_t k = 0; k < on.transmitted.ex.size(); ++k) {
        resp = std::max(resp, std::abs(on.transmitted.ex[k] - vac.transmitted.ex[k]));
        diff = std::max(diff, std::abs(on.transmitted.ex[k] - off.transmitted.ex[k]));
    }
    EXPECT_GT(resp, 0.0);
    EXPECT_LT(diff, 1e-3 * resp);
}

TEST(Run, ProbeSeriesIsPhysical)
{
    auto s = small_setup(6.4e25);
    s.pulse = reference_pulse(1e10);
    s.stop.t_max = 200e-15;
    const auto rec = run(s, Backend::bloch);
    const auto& pr = rec.probe;
    ASSERT_FALSE(pr.t.empty());
    for (std::size_t k = 0; k < pr.t.size(); ++k) {
        ASSERT_NEAR(pr.rho11[k] + pr.rho22[k], 1.0, 1e-9);
        ASSERT_LE(std::norm(pr.rho12[k]), pr.rho11[k] * pr.rho22[k] + 1e-9);
        ASSERT_TRUE(std::isnan(pr.gamma1[k]));
    }
    const auto nh2 = run(s, Backend::nh2);
    EXPECT_EQ(nh2.diagnostics.pole_events, 0);
    EXPECT_TRUE(std::isfinite(nh2.probe.gamma1.back()));
}

TEST(Run, NonFiniteFieldAborts)
{
    auto s = small_setup(1e25);
    s.pulse = reference_pulse(1e300);
    s.stop.t_max = 100e-15;
    try {
        run(s, Backend::bloch);
        FAIL() << "expected SolverAbort";
    } catch (const SolverAbort& e) {
        EXPECT_GT(e.step(), 0);
        EXPECT_GE(e.cell(), 0);
        EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
    }
}
