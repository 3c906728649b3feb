#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "onset/trace.hpp"
#include "onset/units.hpp"

/// Declarative runs: a JSON config names a lattice, a force protocol, optional
/// sweeps, propagation and analysis settings. Physical inputs are SI (seconds,
/// metres, m/s^2); outputs carry their units in column and key names.
namespace onset::scenario {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct Issue {
    std::string field;
    std::string message;
    bool error = true;  // false: warning
};

struct ValidationReport {
    std::vector<Issue> issues;

    bool ok() const;
    std::size_t errors() const;
    std::string str() const;
    json to_json() const;
};

class ValidationError : public InvalidArgument {
public:
    explicit ValidationError(ValidationReport report);
    const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

struct ImagingSettings {
    double centre = -1.0;  // v_r
    double width = 8.0;    // v_r
    int n_peaks = 4;
    double tof = 20e-3;    // s
    double blur = 20.0;    // um
    double noise = 0.0;    // fraction of each frame's peak density
};

struct FitSpec {
    std::string name;
    double window = 300e-6;  // s, measured from the force onset
};

/// Cartesian product of its non-empty axes; empty axes take the base value.
struct SweepBlock {
    std::vector<double> depth, acceleration, duration;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 1;

    LatticeConfig lattice;
    double acceleration = 0.0;  // F/m0, m/s^2
    double delay = 0.0;         // s
    double rise = 0.0;          // s
    std::vector<SweepBlock> sweeps;

    std::size_t sites = 512, points_per_site = 16;
    double steps_per_recoil = 500.0;
    double cadence = 4e-6;         // s
    double duration = 300e-6;      // s after the onset
    double envelope_width = 20e-6; // s.d. of |psi|^2, m
    std::string loading = "ground";  // or "ramp"
    double ramp_duration = 1e-3;     // s
    std::size_t edge_sites = 50;
    double edge_tolerance = 1e-6;

    int n_bands = 8, cutoff = 32;
    std::size_t k_points = 257;

    bool analyze = true;
    std::string trace_source = "imaging";  // or "direct"
    ImagingSettings imaging;
    std::vector<FitSpec> fits;
    std::string bloch_fit, gap_fit, mass_fit;  // names into fits
    bool lowpass = true;
    std::optional<double> analytic_duration;  // s; analytic overlay when set
};

/// Schema and physics checks. Never throws for bad content; every problem is
/// listed. The guards cover the time step, the box margin and the first-order
/// validity ratio (warning only).
ValidationReport validate(const json& config);

/// Parses a validated config; throws ValidationError listing every issue.
Scenario parse(const json& config);

/// Fully resolved config (all defaults echoed).
json to_json(const Scenario& sc);

/// Built-in configs: "fig2", "fig3", "fig4".
json builtin(const std::string& name);
std::vector<std::string> builtin_names();

struct Point {
    std::size_t index = 0;
    double depth = 0.0, acceleration = 0.0, duration = 0.0;
    std::string id;
};

std::vector<Point> expand(const Scenario& sc);

struct RunOptions {
    std::filesystem::path out;
    std::optional<std::uint64_t> seed;  // overrides the config seed
    bool analyze = true;                // false: propagate and write traces only
    int threads = 0;                    // 0: OpenMP default
};

struct Bundle {
    std::filesystem::path dir;
    json summary;
    json manifest;
    std::vector<std::string> failures;  // "point id: message"
};

/// Runs every point and writes the bundle: bands/, points/<id>/, summary.csv,
/// summary.json and manifest.json. Output bytes depend only on the config,
/// the seed and the library versions.
Bundle run(const Scenario& sc, const RunOptions& opts);

/// Fits a recorded trace (t in s, v in m/s) with the scenario's fits and mass
/// settings for one depth and acceleration. Returns the JSON fit records.
json analyze_trace(const Scenario& sc, const VelocityTrace& si_trace, double depth, double acceleration);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex(std::uint64_t h);

}  // namespace onset::scenario
