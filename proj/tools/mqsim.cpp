// mqsim command line: run a scenario, list presets, validate a config file.
//
//   mqsim run --preset strong-field-strong-int --backends bloch,nh2 --out runs/ss
//   mqsim run --config my.cfg --override pulse.e0_v_per_m=5e9
//   mqsim run --manifest runs/ss/manifest.json --out runs/ss-again
//   mqsim presets
//   mqsim validate --config my.cfg
//
// Exit codes: 0 success, 2 configuration error, 3 solver abort.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mqsim/scenario.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_solver = 3;

struct RunOptions {
    std::string preset;
    std::string config;
    std::string manifest;
    std::string backends;
    std::string out;
    std::vector<std::string> overrides;
};

mqsim::ScenarioConfig build_config(const RunOptions& o)
{
    const int sources = !o.preset.empty() + !o.config.empty() + !o.manifest.empty();
    if (sources > 1) throw mqsim::ConfigError("give only one of --preset, --config, --manifest");
    mqsim::ScenarioConfig c;
    if (!o.manifest.empty()) {
        c = mqsim::load_manifest(o.manifest);
    } else {
        if (!o.preset.empty()) c = mqsim::preset(o.preset);
        if (!o.config.empty()) c = mqsim::load_config(o.config, c);
    }
    for (const auto& ov : o.overrides) mqsim::apply_override(c, ov);
    if (!o.backends.empty()) mqsim::set_key(c, "run.backends", o.backends);
    if (!o.out.empty()) c.output_dir = o.out;
    c.validate();
    return c;
}

int cmd_run(const RunOptions& o)
{
    mqsim::ScenarioConfig c;
    try {
        c = build_config(o);
        (void)mqsim::make_manifest(c);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    try {
        mqsim::execute(c, std::cout);
    } catch (const mqsim::SolverAbort& e) {
        std::cerr << "solver abort: " << e.what() << '\n';
        return exit_solver;
    }
    std::cout << "outputs written to " << c.output_dir << '\n';
    return 0;
}

int cmd_presets()
{
    for (auto name : mqsim::preset_names()) {
        const auto c = mqsim::preset(name);
        std::cout << name << "  e0=" << c.e0_v_per_m << " V/m  eta=" << c.eta << '\n';
    }
    return 0;
}

int cmd_validate(const std::string& path)
{
    try {
        const auto c = mqsim::load_config(path);
        c.validate();
        const auto m = mqsim::make_manifest(c);
        std::cout << "ok: " << path << " (config hash " << m.hash << ")\n"
                  << "density " << m.data["resolved"]["density_m3"].get<double>() << " m^-3, "
                  << "grid " << m.data["layout"]["nz"].get<std::size_t>() << " nodes, "
                  << "e0 " << m.data["resolved"]["e0_au"].get<double>() << " au\n";
        return 0;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"1D Maxwell / two-level-emitter simulator"};
    app.require_subcommand(1);

    RunOptions ro;
    auto* run = app.add_subcommand("run", "run a scenario and write its outputs");
    run->add_option("--preset", ro.preset, "preset name (see 'presets')");
    run->add_option("--config", ro.config, "config file with dotted keys");
    run->add_option("--manifest", ro.manifest, "re-run the config stored in a manifest.json");
    run->add_option("--backends", ro.backends, "comma-separated list of bloch, nh1, nh2");
    run->add_option("--out", ro.out, "output directory");
    run->add_option("--override", ro.overrides, "key=value, repeatable");

    app.add_subcommand("presets", "list the built-in presets");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a config file without running it");
    validate->add_option("--config", validate_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    if (*run) return cmd_run(ro);
    if (*validate) return cmd_validate(validate_path);
    return cmd_presets();
}
