// units.hpp - physical constants and the handful of unit conversions the
// simulator needs. The engine works in SI; user-facing values (eV, Debye,
// THz, fs, nm) are converted once at configuration time.

#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mqsim {

/// CODATA 2018 constants in SI (h, e, c exact since the 2019 redefinition). eps0 is derived from mu0 and c so that
/// c^2 eps0 mu0 = 1 holds to rounding.
struct PhysicalConstants {
    static constexpr double c = 299792458.0;               // m/s
    static constexpr double mu0 = 1.25663706212e-6;        // H/m
    static constexpr double eps0 = 1.0 / (mu0 * c * c);    // F/m
    static constexpr double h = 6.62607015e-34;            // J s, exact
    static constexpr double hbar = h / (2.0 * 3.14159265358979323846);
    static constexpr double e = 1.602176634e-19;           // C
    static constexpr double debye = 1e-21 / c;             // C m
    static constexpr double ev = e;                        // J
    static constexpr double au_field = 5.14220674763e11;   // V/m per atomic unit
    static constexpr double eta0 = mu0 * c;                // vacuum impedance, ohm
};

using K = PhysicalConstants;

enum class Dimension { length, time, energy, inverse_time, dipole, electric_field };

enum class Unit {
    m, um, nm,
    s, ps, fs,
    J, eV,
    per_s, rad_per_s, THz,   // THz is a rate: 1 THz = 1e12 s^-1, no 2*pi
    C_m, debye,
    V_per_m, au_field,
};

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

struct UnitInfo {
    Unit unit;
    std::string_view name;
    Dimension dim;
    double to_si;
};

inline constexpr std::array<UnitInfo, 15> unit_table{{
    {Unit::m, "m", Dimension::length, 1.0},
    {Unit::um, "um", Dimension::length, 1e-6},
    {Unit::nm, "nm", Dimension::length, 1e-9},
    {Unit::s, "s", Dimension::time, 1.0},
    {Unit::ps, "ps", Dimension::time, 1e-12},
    {Unit::fs, "fs", Dimension::time, 1e-15},
    {Unit::J, "J", Dimension::energy, 1.0},
    {Unit::eV, "eV", Dimension::energy, K::ev},
    {Unit::per_s, "1/s", Dimension::inverse_time, 1.0},
    {Unit::rad_per_s, "rad/s", Dimension::inverse_time, 1.0},
    {Unit::THz, "THz", Dimension::inverse_time, 1e12},
    {Unit::C_m, "C*m", Dimension::dipole, 1.0},
    {Unit::debye, "D", Dimension::dipole, K::debye},
    {Unit::V_per_m, "V/m", Dimension::electric_field, 1.0},
    {Unit::au_field, "au", Dimension::electric_field, K::au_field},
}};

constexpr const UnitInfo& info(Unit u)
{
    for (const auto& entry : unit_table)
        if (entry.unit == u) return entry;
    throw std::logic_error("unknown unit");
}

}  // namespace detail

constexpr Dimension dimension_of(Unit u) { return detail::info(u).dim; }
constexpr std::string_view unit_name(Unit u) { return detail::info(u).name; }

/// Converts between units of one dimension. The only cross-dimension
/// conversion is energy <-> inverse time, through E = hbar * omega.
inline double convert(double value, Unit from, Unit to)
{
    const auto& src = detail::info(from);
    const auto& dst = detail::info(to);
    double si = value * src.to_si;
    if (src.dim != dst.dim) {
        if (src.dim == Dimension::energy && dst.dim == Dimension::inverse_time)
            si /= K::hbar;
        else if (src.dim == Dimension::inverse_time && dst.dim == Dimension::energy)
            si *= K::hbar;
        else
            throw DimensionMismatch("cannot convert " + std::string(src.name) + " to " +
                                    std::string(dst.name));
    }
    return si / dst.to_si;
}

}  // namespace mqsim
