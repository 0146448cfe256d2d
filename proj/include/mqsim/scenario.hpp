// scenario.hpp - configuration, presets, run orchestration and output files.
//
// A scenario is a flat set of dotted keys (emitter.omega_b_ev = 2.0, ...) in
// user units. resolve() turns it into an SI SimulationSetup; execute() runs
// the vacuum reference plus one medium run per backend and writes
//   manifest.json, diagnostics.json,
//   spectrum_<backend>.csv, probe_<backend>.csv, coherr_<backend>.csv.

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "em.hpp"
#include "quantum.hpp"
#include "spectra.hpp"
#include "units.hpp"

namespace mqsim {

inline constexpr std::string_view version = "0.1.0";

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Scenario in user units. density_m3 > 0 overrides eta.
struct ScenarioConfig {
    std::string preset = "custom";

    double omega_b_ev = 2.0;
    double mu_x_debye = 4.0;
    double gamma_star_thz = 10.0;
    double big_gamma_thz = 1.0;

    double eta = 1.3;
    double density_m3 = 0.0;
    double thickness_nm = 600.0;
    double probe_depth_nm = 290.0;
    bool local_field = true;

    double e0_v_per_m = 1.0;
    double omega0_ev = 2.0;
    double tau_fs = 10.0;
    double t0_fs = 30.0;

    double courant = 0.5;
    BoundaryKind boundary = BoundaryKind::mur1;
    double pole_guard = default_pole_guard;
    int record_stride = 10;

    double dz_nm = 1.0;
    double gap_nm = 1000.0;
    double margin_nm = 50.0;
    double source_offset_nm = 50.0;

    double t_max_fs = 3000.0;
    double quiet_level = 1e-6;
    double noise_floor = 1e-12;
    double quiet_span_tau = 5.0;

    std::vector<Backend> backends{Backend::bloch, Backend::nh1, Backend::nh2};
    std::string output_dir = "runs/out";

    void validate() const;
};

namespace detail {

inline double parse_double(std::string_view key, std::string_view text)
{
    double v = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ConfigError("key '" + std::string(key) + "': not a number: '" + std::string(text) + "'");
    return v;
}

inline int parse_int(std::string_view key, std::string_view text)
{
    int v = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("key '" + std::string(key) + "': not an integer: '" + std::string(text) + "'");
    return v;
}

inline bool parse_bool(std::string_view key, std::string_view text)
{
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("key '" + std::string(key) + "': not a boolean: '" + std::string(text) + "'");
}

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<Backend> parse_backends(std::string_view text)
{
    std::vector<Backend> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        if (item.empty()) throw ConfigError("empty entry in backend list");
        Backend b;
        try {
            b = parse_backend(item);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        for (auto have : out)
            if (have == b) throw ConfigError("duplicate backend '" + std::string(item) + "'");
        out.push_back(b);
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

inline std::string join_backends(const std::vector<Backend>& bs)
{
    std::string s;
    for (std::size_t i = 0; i < bs.size(); ++i) {
        if (i) s += ',';
        s += backend_name(bs[i]);
    }
    return s;
}

struct ConfigKey {
    std::string_view key;
    std::function<void(ScenarioConfig&, std::string_view)> set;
    std::function<std::string(const ScenarioConfig&)> get;
};

#define MQSIM_REAL_KEY(name, member)                                                         \
    ConfigKey                                                                                \
    {                                                                                        \
        name, [](ScenarioConfig& c, std::string_view v) { c.member = parse_double(name, v); }, \
            [](const ScenarioConfig& c) { return format_double(c.member); }                  \
    }

inline const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = {
        {"run.preset", [](ScenarioConfig& c, std::string_view v) { c.preset = std::string(v); },
         [](const ScenarioConfig& c) { return c.preset; }},
        {"run.backends", [](ScenarioConfig& c, std::string_view v) { c.backends = parse_backends(v); },
         [](const ScenarioConfig& c) { return join_backends(c.backends); }},
        {"run.output_dir", [](ScenarioConfig& c, std::string_view v) { c.output_dir = std::string(v); },
         [](const ScenarioConfig& c) { return c.output_dir; }},
        MQSIM_REAL_KEY("emitter.omega_b_ev", omega_b_ev),
        MQSIM_REAL_KEY("emitter.mu_x_debye", mu_x_debye),
        MQSIM_REAL_KEY("emitter.gamma_star_thz", gamma_star_thz),
        MQSIM_REAL_KEY("emitter.big_gamma_thz", big_gamma_thz),
        MQSIM_REAL_KEY("medium.eta", eta),
        MQSIM_REAL_KEY("medium.density_m3", density_m3),
        MQSIM_REAL_KEY("medium.thickness_nm", thickness_nm),
        MQSIM_REAL_KEY("medium.probe_depth_nm", probe_depth_nm),
        {"medium.local_field",
         [](ScenarioConfig& c, std::string_view v) { c.local_field = parse_bool("medium.local_field", v); },
         [](const ScenarioConfig& c) { return std::string(c.local_field ? "true" : "false"); }},
        MQSIM_REAL_KEY("pulse.e0_v_per_m", e0_v_per_m),
        MQSIM_REAL_KEY("pulse.omega0_ev", omega0_ev),
        MQSIM_REAL_KEY("pulse.tau_fs", tau_fs),
        MQSIM_REAL_KEY("pulse.t0_fs", t0_fs),
        MQSIM_REAL_KEY("stepper.courant", courant),
        {"stepper.boundary",
         [](ScenarioConfig& c, std::string_view v) {
             if (v == "mur1") c.boundary = BoundaryKind::mur1;
             else if (v == "delay") c.boundary = BoundaryKind::delay;
             else throw ConfigError("stepper.boundary must be mur1 or delay");
         },
         [](const ScenarioConfig& c) {
             return std::string(c.boundary == BoundaryKind::mur1 ? "mur1" : "delay");
         }},
        MQSIM_REAL_KEY("stepper.pole_guard", pole_guard),
        {"stepper.record_stride",
         [](ScenarioConfig& c, std::string_view v) { c.record_stride = parse_int("stepper.record_stride", v); },
         [](const ScenarioConfig& c) { return std::to_string(c.record_stride); }},
        MQSIM_REAL_KEY("domain.dz_nm", dz_nm),
        MQSIM_REAL_KEY("domain.gap_nm", gap_nm),
        MQSIM_REAL_KEY("domain.margin_nm", margin_nm),
        MQSIM_REAL_KEY("domain.source_offset_nm", source_offset_nm),
        MQSIM_REAL_KEY("stop.t_max_fs", t_max_fs),
        MQSIM_REAL_KEY("stop.quiet_level", quiet_level),
        MQSIM_REAL_KEY("stop.noise_floor", noise_floor),
        MQSIM_REAL_KEY("stop.quiet_span_tau", quiet_span_tau),
    };
    return keys;
}

#undef MQSIM_REAL_KEY

inline const ConfigKey& find_key(std::string_view key)
{
    for (const auto& k : config_keys())
        if (k.key == key) return k;
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace detail

/// Sets one dotted key; unknown keys and malformed values throw ConfigError.
inline void set_key(ScenarioConfig& c, std::string_view key, std::string_view value)
{
    detail::find_key(key).set(c, detail::trim(value));
}

/// Applies "key=value".
inline void apply_override(ScenarioConfig& c, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw ConfigError("override must look like key=value: '" + std::string(assignment) + "'");
    set_key(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// All keys with their current values, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ScenarioConfig& c)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : detail::config_keys()) out.emplace_back(std::string(k.key), k.get(c));
    return out;
}

inline void ScenarioConfig::validate() const
{
    const auto positive = [](double v, const char* what) {
        if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
    };
    positive(omega_b_ev, "emitter.omega_b_ev");
    positive(mu_x_debye, "emitter.mu_x_debye");
    if (!(gamma_star_thz >= 0.0)) throw ConfigError("emitter.gamma_star_thz must be >= 0");
    if (!(big_gamma_thz >= 0.0)) throw ConfigError("emitter.big_gamma_thz must be >= 0");
    if (!(gamma_star_thz + big_gamma_thz > 0.0))
        throw ConfigError("emitter needs a nonzero decoherence rate");
    if (!(density_m3 >= 0.0)) throw ConfigError("medium.density_m3 must be >= 0");
    if (density_m3 == 0.0) positive(eta, "medium.eta");
    positive(thickness_nm, "medium.thickness_nm");
    if (!(probe_depth_nm > 0.0 && probe_depth_nm < thickness_nm))
        throw ConfigError("medium.probe_depth_nm must lie inside the slab");
    positive(e0_v_per_m, "pulse.e0_v_per_m");
    positive(omega0_ev, "pulse.omega0_ev");
    positive(tau_fs, "pulse.tau_fs");
    if (!(t0_fs >= 3.0 * tau_fs)) throw ConfigError("pulse.t0_fs must be at least 3 tau");
    if (!(courant > 0.0 && courant <= 1.0)) throw ConfigError("stepper.courant must lie in (0, 1]");
    positive(pole_guard, "stepper.pole_guard");
    if (record_stride < 1) throw ConfigError("stepper.record_stride must be >= 1");
    positive(dz_nm, "domain.dz_nm");
    positive(gap_nm, "domain.gap_nm");
    positive(margin_nm, "domain.margin_nm");
    positive(source_offset_nm, "domain.source_offset_nm");
    positive(t_max_fs, "stop.t_max_fs");
    positive(quiet_level, "stop.quiet_level");
    if (!(noise_floor >= 0.0)) throw ConfigError("stop.noise_floor must be >= 0");
    positive(quiet_span_tau, "stop.quiet_span_tau");
    if (backends.empty()) throw ConfigError("run.backends must not be empty");
    for (std::size_t i = 0; i < backends.size(); ++i)
        for (std::size_t j = i + 1; j < backends.size(); ++j)
            if (backends[i] == backends[j]) throw ConfigError("duplicate backend in run.backends");
}

/// Parses a config file body: "key = value" lines, optional [section]
/// headers that prefix the following keys, '#' comments.
inline ScenarioConfig parse_config(std::string_view text, ScenarioConfig base = {})
{
    std::string section;
    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key(detail::trim(line.substr(0, eq)));
        if (!section.empty()) key = section + "." + key;
        try {
            set_key(base, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

inline ScenarioConfig load_config(const std::filesystem::path& path, ScenarioConfig base = {})
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

// Presets ---------------------------------------------------------------------

inline const std::vector<std::string_view>& preset_names()
{
    static const std::vector<std::string_view> names = {
        "weak-field-weak-int", "weak-field-strong-int", "strong-field-weak-int",
        "strong-field-strong-int"};
    return names;
}

inline ScenarioConfig preset(std::string_view name)
{
    ScenarioConfig c;
    c.preset = std::string(name);
    c.output_dir = "runs/" + c.preset;
    if (name == "weak-field-weak-int") {
        c.e0_v_per_m = 1.0;
        c.eta = 1.3e-7;
    } else if (name == "weak-field-strong-int") {
        c.e0_v_per_m = 1.0;
        c.eta = 1.3;
    } else if (name == "strong-field-weak-int") {
        c.e0_v_per_m = 1e10;
        c.eta = 1.3e-7;
    } else if (name == "strong-field-strong-int") {
        c.e0_v_per_m = 1e10;
        c.eta = 1.3;
    } else {
        std::string msg = "unknown preset '" + std::string(name) + "'; available:";
        for (auto n : preset_names()) msg += " " + std::string(n);
        throw ConfigError(msg);
    }
    return c;
}

// Resolution to SI ------------------------------------------------------------

inline EmitterParams emitter_params(const ScenarioConfig& c)
{
    return EmitterParams(convert(c.omega_b_ev, Unit::eV, Unit::rad_per_s),
                         convert(c.mu_x_debye, Unit::debye, Unit::C_m),
                         convert(c.gamma_star_thz, Unit::THz, Unit::per_s),
                         convert(c.big_gamma_thz, Unit::THz, Unit::per_s));
}

/// n = 9 hbar eps0 gamma eta / mu_x^2.
inline double density_from_eta(double eta, const EmitterParams& p)
{
    return 9.0 * K::hbar * K::eps0 * p.gamma() * eta / (p.mu_x() * p.mu_x());
}

/// Dipole-dipole coupling Delta = n mu_x^2 / (9 hbar eps0), rad/s.
inline double coupling_strength(double density, const EmitterParams& p)
{
    return density * p.mu_x() * p.mu_x() / (9.0 * K::hbar * K::eps0);
}

inline double eta_from_density(double density, const EmitterParams& p)
{
    return coupling_strength(density, p) / p.gamma();
}

inline double resolved_density(const ScenarioConfig& c, const EmitterParams& p)
{
    return c.density_m3 > 0.0 ? c.density_m3 : density_from_eta(c.eta, p);
}

inline SimulationSetup resolve(const ScenarioConfig& c)
{
    c.validate();
    SimulationSetup s;
    s.emitter = emitter_params(c);
    s.medium.density = resolved_density(c, s.emitter);
    s.medium.thickness = convert(c.thickness_nm, Unit::nm, Unit::m);
    s.medium.local_field = c.local_field;
    s.pulse.e0 = c.e0_v_per_m;
    s.pulse.omega0 = convert(c.omega0_ev, Unit::eV, Unit::rad_per_s);
    s.pulse.tau_fwhm = convert(c.tau_fs, Unit::fs, Unit::s);
    s.pulse.t0 = convert(c.t0_fs, Unit::fs, Unit::s);
    s.stepper.courant = c.courant;
    s.stepper.boundary = c.boundary;
    s.stepper.pole_guard = c.pole_guard;
    s.stepper.record_stride = c.record_stride;
    s.domain.dz = convert(c.dz_nm, Unit::nm, Unit::m);
    s.domain.gap = convert(c.gap_nm, Unit::nm, Unit::m);
    s.domain.margin = convert(c.margin_nm, Unit::nm, Unit::m);
    s.domain.source_offset = convert(c.source_offset_nm, Unit::nm, Unit::m);
    s.stop.t_max = convert(c.t_max_fs, Unit::fs, Unit::s);
    s.stop.quiet_level = c.quiet_level;
    s.stop.noise_floor = c.noise_floor;
    s.stop.quiet_span_tau = c.quiet_span_tau;
    s.probe_depth = convert(c.probe_depth_nm, Unit::nm, Unit::m);
    return s;
}

/// Same setup with the slab emptied: the incident-flux reference.
inline SimulationSetup vacuum_of(SimulationSetup s)
{
    s.medium.density = 0.0;
    return s;
}

// Manifest --------------------------------------------------------------------

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Hash of every key that affects the numbers (run.output_dir excluded).
inline std::string config_hash(const ScenarioConfig& c)
{
    std::string canon;
    for (const auto& [k, v] : config_entries(c)) {
        if (k == "run.output_dir") continue;
        canon += k + "=" + v + "\n";
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canon);
    return os.str();
}

struct RunManifest {
    nlohmann::ordered_json data;
    std::string hash;
};

inline RunManifest make_manifest(const ScenarioConfig& c)
{
    const SimulationSetup s = resolve(c);
    const GridLayout lay = make_layout(s);
    const auto& p = s.emitter;
    const double eta_check = eta_from_density(s.medium.density, p);
    const double eta_target = c.density_m3 > 0.0 ? eta_check : c.eta;
    if (std::abs(eta_check - eta_target) > 1e-12 * eta_target)
        throw ConfigError("density does not reproduce the requested eta");

    RunManifest m;
    m.hash = config_hash(c);
    auto& j = m.data;
    j["program"] = "mqsim";
    j["version"] = version;
    j["config_hash"] = m.hash;
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config_entries(c)) j["config"][k] = v;
    j["resolved"] = {
        {"omega_b_rad_per_s", p.omega_b()},
        {"mu_x_c_m", p.mu_x()},
        {"gamma_star_per_s", p.gamma_star()},
        {"big_gamma_per_s", p.big_gamma()},
        {"gamma_per_s", p.gamma()},
        {"density_m3", s.medium.density},
        {"coupling_delta_rad_per_s", coupling_strength(s.medium.density, p)},
        {"eta_requested", eta_target},
        {"eta_recomputed", eta_check},
        {"thickness_m", s.medium.thickness},
        {"e0_v_per_m", s.pulse.e0},
        {"e0_au", convert(s.pulse.e0, Unit::V_per_m, Unit::au_field)},
        {"omega0_rad_per_s", s.pulse.omega0},
        {"tau_fwhm_s", s.pulse.tau_fwhm},
        {"t0_s", s.pulse.t0},
        {"dz_m", lay.dz},
        {"dt_s", lay.dt},
        {"t_max_s", s.stop.t_max},
    };
    j["layout"] = {
        {"nz", lay.nz},
        {"reflected_detector", lay.reflected},
        {"source_plane", lay.source},
        {"slab_begin", lay.slab.begin},
        {"slab_end", lay.slab.end},
        {"transmitted_detector", lay.transmitted},
        {"sink_plane", lay.sink},
        {"probe", lay.probe},
    };
    return m;
}

/// Rebuilds the config stored in a manifest.
inline ScenarioConfig config_from_manifest(const nlohmann::json& j)
{
    if (!j.contains("config") || !j["config"].is_object())
        throw ConfigError("manifest has no config section");
    ScenarioConfig c;
    for (const auto& [k, v] : j["config"].items()) {
        if (!v.is_string()) throw ConfigError("manifest config value for '" + k + "' is not a string");
        set_key(c, k, v.get<std::string>());
    }
    return c;
}

inline ScenarioConfig load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest '" + path.string() + "': " + e.what());
    }
    return config_from_manifest(j);
}

// Output tables ---------------------------------------------------------------

namespace detail {

inline std::string fmt(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10e", v);
    return buf;
}

inline std::ofstream open_table(const std::filesystem::path& path, const std::string& hash,
                                std::string_view preset, std::string_view header)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "# config_hash " << hash << "\n# preset " << preset << "\n" << header << "\n";
    return out;
}

}  // namespace detail

inline void write_spectrum(const std::filesystem::path& path, const SpectrumSet& s,
                           const std::string& hash, std::string_view preset)
{
    auto out = detail::open_table(path, hash, preset, "delta(1),R(1),T(1),A(1)");
    for (std::size_t i = 0; i < s.delta.size(); ++i)
        out << detail::fmt(s.delta[i]) << ',' << detail::fmt(s.r[i]) << ','
            << detail::fmt(s.t[i]) << ',' << detail::fmt(s.a[i]) << '\n';
}

inline void write_probe(const std::filesystem::path& path, const ProbeSeries& pr, double gamma,
                        const std::string& hash, std::string_view preset)
{
    auto out = detail::open_table(
        path, hash, preset,
        "t_gamma(1),rho11(1),rho22(1),abs_rho12(1),gamma1(1/s),gamma2(1/s),norm(1)");
    for (std::size_t i = 0; i < pr.t.size(); ++i)
        out << detail::fmt(pr.t[i] * gamma) << ',' << detail::fmt(pr.rho11[i]) << ','
            << detail::fmt(pr.rho22[i]) << ',' << detail::fmt(std::abs(pr.rho12[i])) << ','
            << detail::fmt(pr.gamma1[i]) << ',' << detail::fmt(pr.gamma2[i]) << ','
            << detail::fmt(pr.norm[i]) << '\n';
}

inline void write_coherence_error(const std::filesystem::path& path, std::span<const double> t,
                                  std::span<const double> err, double gamma,
                                  const std::string& hash, std::string_view preset)
{
    auto out = detail::open_table(path, hash, preset, "t_gamma(1),delta_rho12(1)");
    for (std::size_t i = 0; i < err.size(); ++i)
        out << detail::fmt(t[i] * gamma) << ',' << detail::fmt(err[i]) << '\n';
}

// Execution -------------------------------------------------------------------

struct BackendResult {
    Backend backend;
    RawRecords records;
    SpectrumSet spectrum;
    std::vector<double> coherence_error;  // empty without a Bloch run
};

struct ExecutionResult {
    RunManifest manifest;
    RawRecords vacuum;
    std::vector<BackendResult> backends;
};

namespace detail {

inline nlohmann::ordered_json diagnostics_json(const RunDiagnostics& d)
{
    return {{"steps", d.steps},
            {"t_end_s", d.t_end},
            {"stopped_quiet", d.stopped_quiet},
            {"pole_events", d.pole_events},
            {"min_pole_distance", d.min_pole_distance},
            {"max_norm_drift", d.max_norm_drift},
            {"runtime_s", d.runtime_s}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

inline std::vector<cplx> coherence_prefix(const ProbeSeries& p, std::size_t n)
{
    return {p.rho12.begin(), p.rho12.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace detail

/// Runs the vacuum reference and every requested backend. With write set,
/// all files go to c.output_dir. A solver abort leaves a FAILED marker and
/// the outputs written so far, then rethrows.
inline ExecutionResult execute(const ScenarioConfig& c, std::ostream& log, bool write = true)
{
    namespace fs = std::filesystem;
    ExecutionResult res;
    res.manifest = make_manifest(c);
    const SimulationSetup setup = resolve(c);
    const auto& p = setup.emitter;
    const std::string& hash = res.manifest.hash;
    const fs::path dir(c.output_dir);

    log << "preset " << c.preset << ", config hash " << hash << '\n';
    log << "peak field " << setup.pulse.e0 << " V/m = "
        << convert(setup.pulse.e0, Unit::V_per_m, Unit::au_field) << " au\n";
    log << "density " << setup.medium.density << " m^-3 (eta "
        << eta_from_density(setup.medium.density, p) << ")\n";

    nlohmann::ordered_json diag;
    diag["config_hash"] = hash;
    if (write) {
        fs::create_directories(dir);
        fs::remove(dir / "FAILED");
        detail::write_json(dir / "manifest.json", res.manifest.data);
    }

    const auto fail = [&](const SolverAbort& e, std::string_view what) {
        diag["failed"] = {{"run", what}, {"error", e.what()}, {"step", e.step()}, {"cell", e.cell()}};
        if (write) {
            detail::write_json(dir / "diagnostics.json", diag);
            std::ofstream(dir / "FAILED") << what << ": " << e.what() << '\n';
        }
        log << "solver abort in " << what << ": " << e.what() << '\n';
    };

    try {
        res.vacuum = run(vacuum_of(setup), Backend::bloch);
    } catch (const SolverAbort& e) {
        fail(e, "vacuum");
        throw;
    }
    diag["vacuum"] = detail::diagnostics_json(res.vacuum.diagnostics);
    log << "vacuum reference: " << res.vacuum.diagnostics.steps << " steps\n";

    for (Backend b : c.backends) {
        const std::string name(backend_name(b));
        BackendResult br{b, {}, {}, {}};
        try {
            br.records = run(setup, b);
        } catch (const SolverAbort& e) {
            fail(e, name);
            throw;
        }
        br.spectrum = assemble(br.records.reflected, br.records.transmitted,
                               res.vacuum.transmitted, p);
        auto d = detail::diagnostics_json(br.records.diagnostics);
        d["spectrum_truncated"] = br.spectrum.truncated;
        diag["backends"][name] = d;
        log << name << ": " << br.records.diagnostics.steps << " steps, "
            << br.records.diagnostics.pole_events << " pole events, "
            << br.records.diagnostics.runtime_s << " s\n";
        if (br.spectrum.truncated) log << name << ": warning: a detector trace was truncated\n";
        if (write) {
            write_spectrum(dir / ("spectrum_" + name + ".csv"), br.spectrum, hash, c.preset);
            write_probe(dir / ("probe_" + name + ".csv"), br.records.probe, p.gamma(), hash,
                        c.preset);
        }
        res.backends.push_back(std::move(br));
    }

    // Coherence error of each non-Hermitian backend against Bloch, on the
    // common prefix of the probe time axes.
    const BackendResult* bloch = nullptr;
    for (const auto& br : res.backends)
        if (br.backend == Backend::bloch) bloch = &br;
    if (bloch) {
        for (auto& br : res.backends) {
            if (br.backend == Backend::bloch) continue;
            const auto& a = bloch->records.probe;
            const auto& m = br.records.probe;
            const std::size_t n = std::min(a.t.size(), m.t.size());
            br.coherence_error =
                coherence_error(detail::coherence_prefix(a, n), detail::coherence_prefix(m, n));
            if (write)
                write_coherence_error(dir / ("coherr_" + std::string(backend_name(br.backend)) + ".csv"),
                                      std::span(a.t).first(n), br.coherence_error, p.gamma(),
                                      hash, c.preset);
        }
    }
    if (write) detail::write_json(dir / "diagnostics.json", diag);
    return res;
}

}  // namespace mqsim
