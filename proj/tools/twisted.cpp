// Command-line front end: catalog, check and sweep over declarative configs.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <twisted/experiment.hpp>

namespace {

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 1;
    std::string format;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
    sub->add_option("--config", f.config, "experiment config (YAML)")->envname("TWISTED_CONFIG")->required();
    sub->add_option("--seed", f.seed, "override the config seed")->envname("TWISTED_SEED");
    sub->add_option("--out", f.out, "output directory; reports are printed to stdout when absent")->envname("TWISTED_OUT");
    sub->add_option("--jobs", f.jobs, "concurrent check jobs")->envname("TWISTED_JOBS")->check(CLI::Range(1, 256));
    sub->add_option("--format", f.format, "report format")->envname("TWISTED_FORMAT")->check(CLI::IsMember({"json", "csv", "text"}));
}

void print_catalog(bool checks, bool dc) {
    auto row = [](const std::string& a, const std::string& b) { std::cout << "  " << std::left << std::setw(24) << a << b << '\n'; };
    if (checks) {
        std::cout << "checks:\n";
        for (auto& s : twisted::statement_catalog()) row(s.id, s.anchor);
    }
    if (dc) {
        std::cout << "dc functions:\n";
        for (auto& [name, form] : twisted::dc_catalog()) row(name, form);
    }
    if (!checks && !dc) {
        std::cout << "models:\n";
        for (auto& [name, keys] : twisted::model_catalog()) row(name, keys);
        std::cout << "fields (weights, densities, potentials):\n";
        for (auto& [name, form] : twisted::field_catalog()) row(name, form);
    }
}

int run(const RunFlags& f, bool sweep) {
    using namespace twisted;
    try {
        auto cfg = ExperimentConfig::load(f.config);
        if (f.seed) cfg.set_seed(*f.seed);
        std::string out = f.out.empty() ? cfg.output_dir() : f.out;
        std::string format = f.format.empty() ? cfg.output_format() : f.format;
        auto reports = run_experiment(cfg, sweep, f.jobs);
        const std::string command = sweep ? "sweep" : "check";
        std::string body;
        if (format == "json") body = render_json(cfg, reports, command).dump(2) + "\n";
        else if (format == "csv") body = render_csv(reports);
        else body = render_text(reports);
        if (out.empty()) {
            std::cout << body;
        } else {
            std::filesystem::path dir(out);
            write_atomically(dir / (command == "sweep" ? "sweep." : "report.") += format, body);
            if (sweep) write_atomically(dir / "sweep_margins.csv", render_csv(reports));
            std::cout << render_text(reports);
        }
        return exit_status(reports);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << f.config << ": " << e.what() << '\n';
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical checks of twisted curvature-dimension inequalities on weighted manifolds.\n"
                 "Run flags also read TWISTED_CONFIG, TWISTED_SEED, TWISTED_OUT, TWISTED_JOBS and TWISTED_FORMAT."};
    app.require_subcommand(1);

    bool list_checks = false, list_dc = false;
    auto* cat = app.add_subcommand("catalog", "list models, fields, checks and DC functions");
    cat->add_flag("--checks", list_checks, "list statement ids with anchors");
    cat->add_flag("--dc", list_dc, "list DC functions");

    RunFlags check_flags, sweep_flags;
    auto* check = app.add_subcommand("check", "run the checks of a config; exit 0 pass, 1 fail, 2 config error");
    add_run_flags(check, check_flags);
    auto* sweep = app.add_subcommand("sweep", "run the cartesian sweep kappa x t x resolution of a config");
    add_run_flags(sweep, sweep_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (cat->parsed()) {
        print_catalog(list_checks, list_dc);
        return 0;
    }
    if (check->parsed()) return run(check_flags, false);
    return run(sweep_flags, true);
}
