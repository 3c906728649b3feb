// onset: band tables, propagation runs, trace analysis and the built-in
// reproduction scenarios.
//
// exit codes: 0 ok, 2 invalid input, 3 runtime failure

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "onset/bands.hpp"
#include "onset/csv.hpp"
#include "onset/scenario.hpp"

namespace {

using onset::scenario::json;
namespace sc = onset::scenario;

constexpr int kInvalid = 2;
constexpr int kFailed = 3;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw onset::InvalidArgument("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw onset::InvalidArgument(path + ": " + e.what());
    }
}

void print_issues(const sc::ValidationReport& rep) {
    for (const auto& i : rep.issues) std::cerr << (i.error ? "error: " : "warning: ") << i.field << ": " << i.message << '\n';
}

int finish(const sc::Bundle& b) {
    std::cout << "bundle: " << b.dir.string() << " (" << b.manifest["points"].get<std::size_t>() << " points, config "
              << b.manifest["config_hash"].get<std::string>() << ")\n";
    for (const auto& f : b.failures) std::cerr << "failed: " << f << '\n';
    return b.failures.empty() ? 0 : kFailed;
}

// time and velocity columns with units taken from the name suffix
double time_scale(const std::string& name, const onset::LatticeConfig& cfg) {
    if (name.ends_with("_us")) return 1e-6;
    if (name.ends_with("_ms")) return 1e-3;
    if (name.ends_with("_tr") || name == "t") return cfg.recoil_time();
    if (name.ends_with("_s")) return 1.0;
    throw onset::InvalidArgument("time column '" + name + "': unknown unit suffix (_s, _ms, _us, _tr)");
}

double velocity_scale(const std::string& name, const onset::LatticeConfig& cfg) {
    if (name.ends_with("_mm_s")) return 1e-3;
    if (name.ends_with("_m_s")) return 1.0;
    if (name.ends_with("_vr") || name == "v") return cfg.recoil_velocity();
    throw onset::InvalidArgument("velocity column '" + name + "': unknown unit suffix (_m_s, _mm_s, _vr)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Onset of the effective mass: band structure, propagation and fitting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(sc::kVersion));

    // bands
    auto* bands_cmd = app.add_subcommand("bands", "Band energies, masses and couplings over the Brillouin zone");
    double depth = 9.4, wavelength = onset::constants::default_wavelength, mass = onset::constants::rb87_mass;
    int cutoff = 32, n_bands = 8;
    std::size_t k_points = 257;
    std::string bands_out;
    bands_cmd->add_option("-s,--depth", depth, "Lattice depth in E_r")->capture_default_str();
    bands_cmd->add_option("--wavelength", wavelength, "Lattice wavelength (m)")->capture_default_str();
    bands_cmd->add_option("--mass", mass, "Particle mass (kg)")->capture_default_str();
    bands_cmd->add_option("--cutoff", cutoff, "Plane-wave cutoff L (2L+1 waves)")->capture_default_str();
    bands_cmd->add_option("--n-bands", n_bands, "Bands to keep")->capture_default_str();
    bands_cmd->add_option("--k-points", k_points, "Points on [-k_r, k_r]")->capture_default_str();
    bands_cmd->add_option("-o,--out", bands_out, "CSV output (default stdout)");

    // simulate / reproduce share run options
    std::string config_path, out_dir;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    bool no_analysis = false;

    auto* sim = app.add_subcommand("simulate", "Run a scenario config and write a result bundle");
    sim->add_option("-c,--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("-o,--out", out_dir, "Bundle directory")->required();
    sim->add_option("-j,--threads", threads, "OpenMP threads (0: default)");
    sim->add_option("--seed", seed, "Override the config seed");
    sim->add_flag("--no-analysis", no_analysis, "Propagate only");

    auto* rep_cmd = app.add_subcommand("reproduce", "Run a built-in scenario (fig2, fig3, fig4)");
    std::string figure;
    bool print_config = false;
    rep_cmd->add_option("figure", figure, "Scenario name")->required()->check(CLI::IsMember(sc::builtin_names()));
    rep_cmd->add_option("-o,--out", out_dir, "Bundle directory (default: the scenario name)");
    rep_cmd->add_option("-j,--threads", threads, "OpenMP threads (0: default)");
    rep_cmd->add_option("--seed", seed, "Override the config seed");
    rep_cmd->add_flag("--print-config", print_config, "Print the resolved config and exit");

    auto* val = app.add_subcommand("validate", "Check a scenario config and list every issue");
    val->add_option("-c,--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    bool val_json = false;
    val->add_flag("--json", val_json, "Print the report as JSON");

    auto* ana = app.add_subcommand("analyze", "Fit a recorded velocity trace with a scenario's fit settings");
    std::string trace_path, t_col = "t_us", v_col, ana_out;
    std::optional<double> ana_depth, ana_accel;
    ana->add_option("-t,--trace", trace_path, "Trace CSV")->required()->check(CLI::ExistingFile);
    ana->add_option("-c,--config", config_path, "Scenario JSON (fits, delay, lattice)")->required()->check(CLI::ExistingFile);
    ana->add_option("--time-column", t_col, "Time column; unit from suffix _s, _ms, _us, _tr")->capture_default_str();
    ana->add_option("--velocity-column", v_col,
                    "Velocity column; unit from suffix _m_s, _mm_s, _vr (default v_analysis_mm_s or v_mm_s)");
    ana->add_option("-s,--depth", ana_depth, "Lattice depth (default: config)");
    ana->add_option("-a,--acceleration", ana_accel, "F/m0 in m/s^2 (default: config)");
    ana->add_option("-o,--out", ana_out, "JSON output (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInvalid;
    }

    try {
        if (*bands_cmd) {
            onset::LatticeConfig cfg;
            cfg.depth = depth;
            cfg.wavelength = wavelength;
            cfg.bare_mass = mass;
            onset::bands::SolveOptions o;
            o.cutoff = cutoff;
            o.n_bands = n_bands;
            const auto b = onset::bands::solve_bands(cfg, onset::bands::KGrid::brillouin_zone(k_points), o);
            if (bands_out.empty()) {
                onset::bands::write_band_table(std::cout, b);
            } else {
                std::ofstream out(bands_out);
                if (!out) throw onset::Error("cannot write " + bands_out);
                onset::bands::write_band_table(out, b);
            }
            return 0;
        }
        if (*val) {
            const auto rep = sc::validate(load_json(config_path));
            if (val_json)
                std::cout << rep.to_json().dump(2) << '\n';
            else if (rep.issues.empty())
                std::cout << "ok\n";
            else
                std::cout << rep.str();
            return rep.ok() ? 0 : kInvalid;
        }
        sc::RunOptions ro;
        ro.threads = threads;
        ro.seed = seed;
        if (*sim) {
            const auto scn = sc::parse(load_json(config_path));
            print_issues(sc::validate(sc::to_json(scn)));
            ro.out = out_dir;
            ro.analyze = !no_analysis;
            return finish(sc::run(scn, ro));
        }
        if (*rep_cmd) {
            const auto scn = sc::parse(sc::builtin(figure));
            if (print_config) {
                std::cout << sc::to_json(scn).dump(2) << '\n';
                return 0;
            }
            print_issues(sc::validate(sc::to_json(scn)));
            ro.out = out_dir.empty() ? figure : out_dir;
            return finish(sc::run(scn, ro));
        }
        if (*ana) {
            const auto scn = sc::parse(load_json(config_path));
            onset::LatticeConfig cfg = scn.lattice;
            const auto table = onset::csv::read_file(trace_path);
            if (v_col.empty()) v_col = table.has("v_analysis_mm_s") ? "v_analysis_mm_s" : "v_mm_s";
            if (!table.has(t_col) || !table.has(v_col))
                throw onset::InvalidArgument(trace_path + ": needs columns '" + t_col + "' and '" + v_col + "'");
            const double ts = time_scale(t_col, cfg), vs = velocity_scale(v_col, cfg);
            onset::VelocityTrace tr;
            const auto& t = table.column(t_col);
            const auto& v = table.column(v_col);
            for (std::size_t i = 0; i < table.rows(); ++i) {
                if (!std::isfinite(v[i])) continue;
                tr.t.push_back(t[i] * ts);
                tr.v.push_back(v[i] * vs);
            }
            const json res = sc::analyze_trace(scn, tr, ana_depth.value_or(scn.lattice.depth),
                                               ana_accel.value_or(scn.acceleration));
            if (ana_out.empty()) {
                std::cout << res.dump(2) << '\n';
            } else {
                std::ofstream out(ana_out);
                if (!out) throw onset::Error("cannot write " + ana_out);
                out << res.dump(2) << '\n';
            }
            return 0;
        }
    } catch (const sc::ValidationError& e) {
        print_issues(e.report());
        return kInvalid;
    } catch (const onset::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return 0;
}
