#include "onset/scenario.hpp"

#include <Eigen/Core>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "onset/analysis.hpp"
#include "onset/analytic.hpp"
#include "onset/bands.hpp"
#include "onset/csv.hpp"
#include "onset/fft.hpp"
#include "onset/propagator.hpp"

namespace onset::scenario {

namespace fs = std::filesystem;
using constants::pi;

// ------------------------------------------------------------- reporting

bool ValidationReport::ok() const { return errors() == 0; }

std::size_t ValidationReport::errors() const {
    return std::size_t(std::count_if(issues.begin(), issues.end(), [](const Issue& i) { return i.error; }));
}

std::string ValidationReport::str() const {
    std::ostringstream s;
    for (const auto& i : issues) s << (i.error ? "error: " : "warning: ") << i.field << ": " << i.message << '\n';
    return s.str();
}

json ValidationReport::to_json() const {
    json out = json::array();
    for (const auto& i : issues)
        out.push_back({{"field", i.field}, {"message", i.message}, {"severity", i.error ? "error" : "warning"}});
    return out;
}

ValidationError::ValidationError(ValidationReport report)
    : InvalidArgument("invalid scenario config:\n" + report.str()), report_(std::move(report)) {}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

namespace {

// ----------------------------------------------------------------- reader

// Typed access to one JSON object; records problems instead of throwing and
// reports fields that were never read.
class Section {
public:
    Section(const json* j, std::string path, ValidationReport& rep) : j_(j), path_(std::move(path)), rep_(&rep) {
        if (j_ && !j_->is_object()) {
            error("", "must be an object");
            j_ = nullptr;
        }
    }

    const json* get(const std::string& key) {
        used_.insert(key);
        if (!j_) return nullptr;
        const auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }

    double number(const std::string& key, double def, bool required = false) {
        const json* v = get(key);
        if (!v) {
            if (required) error(key, "required field is missing");
            return def;
        }
        if (!v->is_number()) {
            error(key, "must be a number");
            return def;
        }
        const double x = v->get<double>();
        if (!std::isfinite(x)) error(key, "must be finite");
        return x;
    }

    std::optional<double> optional_number(const std::string& key) {
        const json* v = get(key);
        if (!v || v->is_null()) return std::nullopt;
        if (!v->is_number()) {
            error(key, "must be a number");
            return std::nullopt;
        }
        return v->get<double>();
    }

    std::size_t count(const std::string& key, std::size_t def, bool required = false) {
        const json* v = get(key);
        if (!v) {
            if (required) error(key, "required field is missing");
            return def;
        }
        if (!v->is_number_integer() || v->get<long long>() < 0) {
            error(key, "must be a non-negative integer");
            return def;
        }
        return v->get<std::size_t>();
    }

    bool boolean(const std::string& key, bool def) {
        const json* v = get(key);
        if (!v) return def;
        if (!v->is_boolean()) {
            error(key, "must be true or false");
            return def;
        }
        return v->get<bool>();
    }

    std::string string(const std::string& key, const std::string& def, bool required = false,
                       std::initializer_list<const char*> choices = {}) {
        const json* v = get(key);
        if (!v) {
            if (required) error(key, "required field is missing");
            return def;
        }
        if (!v->is_string()) {
            error(key, "must be a string");
            return def;
        }
        std::string s = v->get<std::string>();
        if (choices.size() != 0 &&
            std::none_of(choices.begin(), choices.end(), [&](const char* c) { return s == c; })) {
            std::string list;
            for (const char* c : choices) list += std::string(list.empty() ? "" : ", ") + c;
            error(key, "must be one of " + list);
            return def;
        }
        return s;
    }

    std::vector<double> numbers(const std::string& key) {
        const json* v = get(key);
        if (!v) return {};
        if (!v->is_array()) {
            error(key, "must be a list of numbers");
            return {};
        }
        if (v->empty()) error(key, "sweep axis is empty");
        std::vector<double> out;
        for (const auto& x : *v) {
            if (!x.is_number()) {
                error(key, "must be a list of numbers");
                return {};
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    Section child(const std::string& key) {
        const json* v = get(key);
        return Section(v, field(key), *rep_);
    }

    void finish() {
        if (!j_) return;
        for (const auto& [k, v] : j_->items())
            if (!used_.count(k)) error(k, "unknown field");
    }

    std::string field(const std::string& key) const {
        if (path_.empty()) return key;
        return key.empty() ? path_ : path_ + "." + key;
    }
    void error(const std::string& key, const std::string& msg) { rep_->issues.push_back({field(key), msg, true}); }

private:
    const json* j_;
    std::string path_;
    ValidationReport* rep_;
    std::set<std::string> used_;
};

void add(ValidationReport& r, std::string field, std::string msg, bool error = true) {
    r.issues.push_back({std::move(field), std::move(msg), error});
}

bands::SolveOptions solve_options(int cutoff, int n_bands, ExecPolicy policy) {
    bands::SolveOptions o;
    o.cutoff = cutoff;
    o.n_bands = n_bands;
    o.policy = policy;
    return o;
}

Scenario read(const json& config, ValidationReport& rep) {
    Scenario sc;
    Section root(&config, "", rep);
    if (!config.is_object()) return sc;

    const json* ver = root.get("schema_version");
    if (!ver)
        root.error("schema_version", "required field is missing");
    else if (!ver->is_number_integer() || ver->get<long long>() != kSchemaVersion)
        root.error("schema_version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
    sc.name = root.string("name", "", true);
    sc.seed = root.count("seed", sc.seed);

    {
        Section s = root.child("lattice");
        if (!root.get("lattice")) root.error("lattice", "required section is missing");
        sc.lattice.depth = s.number("depth", 0.0, true);
        sc.lattice.wavelength = s.number("wavelength", sc.lattice.wavelength);
        sc.lattice.bare_mass = s.number("mass", 0.0, true);
        s.finish();
    }
    {
        Section s = root.child("force");
        if (!root.get("force")) root.error("force", "required section is missing");
        sc.acceleration = s.number("acceleration", 0.0, true);
        sc.delay = s.number("delay", sc.delay);
        sc.rise = s.number("rise", sc.rise);
        s.finish();
    }
    if (const json* sw = root.get("sweep")) {
        if (!sw->is_array()) {
            root.error("sweep", "must be a list of sweep blocks");
        } else {
            for (std::size_t b = 0; b < sw->size(); ++b) {
                Section s(&(*sw)[b], "sweep[" + std::to_string(b) + "]", rep);
                SweepBlock blk;
                blk.depth = s.numbers("depth");
                blk.acceleration = s.numbers("acceleration");
                blk.duration = s.numbers("duration");
                if (!s.get("depth") && !s.get("acceleration") && !s.get("duration"))
                    s.error("", "a sweep block needs at least one of depth, acceleration, duration");
                s.finish();
                sc.sweeps.push_back(std::move(blk));
            }
        }
    }
    {
        Section s = root.child("propagation");
        sc.sites = s.count("sites", sc.sites);
        sc.points_per_site = s.count("points_per_site", sc.points_per_site);
        sc.steps_per_recoil = s.number("steps_per_recoil", sc.steps_per_recoil);
        sc.cadence = s.number("cadence", sc.cadence);
        sc.duration = s.number("duration", sc.duration);
        sc.envelope_width = s.number("envelope_width", sc.envelope_width);
        sc.loading = s.string("loading", sc.loading, false, {"ground", "ramp"});
        sc.ramp_duration = s.number("ramp_duration", sc.ramp_duration);
        sc.edge_sites = s.count("edge_sites", sc.edge_sites);
        sc.edge_tolerance = s.number("edge_tolerance", sc.edge_tolerance);
        s.finish();
    }
    {
        Section s = root.child("bands");
        sc.n_bands = int(s.count("n_bands", std::size_t(sc.n_bands)));
        sc.cutoff = int(s.count("cutoff", std::size_t(sc.cutoff)));
        sc.k_points = s.count("k_points", sc.k_points);
        s.finish();
    }
    {
        Section s = root.child("analysis");
        sc.analyze = s.boolean("enabled", sc.analyze);
        sc.trace_source = s.string("trace", sc.trace_source, false, {"imaging", "direct"});
        Section im = s.child("imaging");
        sc.imaging.centre = im.number("centre", sc.imaging.centre);
        sc.imaging.width = im.number("width", sc.imaging.width);
        sc.imaging.n_peaks = int(im.count("n_peaks", std::size_t(sc.imaging.n_peaks)));
        sc.imaging.tof = im.number("tof", sc.imaging.tof);
        sc.imaging.blur = im.number("blur", sc.imaging.blur);
        sc.imaging.noise = im.number("noise", sc.imaging.noise);
        im.finish();
        if (const json* f = s.get("fits")) {
            if (!f->is_array()) {
                s.error("fits", "must be a list of {name, window}");
            } else {
                for (std::size_t i = 0; i < f->size(); ++i) {
                    Section fs(&(*f)[i], "analysis.fits[" + std::to_string(i) + "]", rep);
                    FitSpec spec;
                    spec.name = fs.string("name", "", true);
                    spec.window = fs.number("window", spec.window);
                    fs.finish();
                    sc.fits.push_back(spec);
                }
            }
        } else {
            sc.fits.push_back({"gap", 300e-6});
        }
        sc.bloch_fit = s.string("bloch_fit", sc.fits.empty() ? "" : sc.fits.front().name);
        sc.gap_fit = s.string("gap_fit", sc.fits.empty() ? "" : sc.fits.back().name);
        sc.mass_fit = s.string("mass_fit", sc.gap_fit);
        sc.lowpass = s.boolean("lowpass", sc.lowpass);
        sc.analytic_duration = s.optional_number("analytic_duration");
        s.finish();
    }
    root.finish();
    return sc;
}

// time grid shared by validation and runs
struct Steps {
    double cadence, dt, t_final;
};

Steps steps(const Scenario& sc, const LatticeConfig& cfg, double delay_r, double duration) {
    Steps s{};
    s.cadence = cfg.time_to_recoil(sc.cadence);
    s.dt = s.cadence / std::ceil(s.cadence * sc.steps_per_recoil);
    s.t_final = s.cadence * std::ceil((delay_r + cfg.time_to_recoil(duration)) / s.cadence - 1e-9);
    return s;
}

void check_fields(const Scenario& sc, ValidationReport& rep) {
    const auto positive = [&](double x, const char* field) {
        if (!(x > 0.0)) add(rep, field, "must be > 0");
    };
    const auto nonnegative = [&](double x, const char* field) {
        if (!(x >= 0.0)) add(rep, field, "must be >= 0");
    };
    if (sc.name.empty() || sc.name.find_first_of("/\\") != std::string::npos)
        add(rep, "name", "must be a non-empty name without path separators");
    nonnegative(sc.lattice.depth, "lattice.depth");
    positive(sc.lattice.wavelength, "lattice.wavelength");
    positive(sc.lattice.bare_mass, "lattice.mass");
    nonnegative(sc.delay, "force.delay");
    nonnegative(sc.rise, "force.rise");
    for (std::size_t b = 0; b < sc.sweeps.size(); ++b) {
        const std::string p = "sweep[" + std::to_string(b) + "].";
        for (double s : sc.sweeps[b].depth)
            if (!(s >= 0.0)) add(rep, p + "depth", "lattice depth must be >= 0");
        for (double a : sc.sweeps[b].acceleration)
            if (!std::isfinite(a)) add(rep, p + "acceleration", "must be finite");
        for (double d : sc.sweeps[b].duration)
            if (!(d > 0.0)) add(rep, p + "duration", "must be > 0");
    }
    if (sc.sites < 8) add(rep, "propagation.sites", "must be >= 8");
    if (sc.points_per_site < 4) add(rep, "propagation.points_per_site", "must be >= 4");
    positive(sc.steps_per_recoil, "propagation.steps_per_recoil");
    positive(sc.cadence, "propagation.cadence");
    positive(sc.duration, "propagation.duration");
    positive(sc.envelope_width, "propagation.envelope_width");
    positive(sc.ramp_duration, "propagation.ramp_duration");
    positive(sc.edge_tolerance, "propagation.edge_tolerance");
    if (sc.edge_sites == 0 || 2 * sc.edge_sites >= sc.sites)
        add(rep, "propagation.edge_sites", "must be > 0 and below half the box");
    if (sc.n_bands < 2) add(rep, "bands.n_bands", "must be >= 2");
    if (sc.cutoff < 4) add(rep, "bands.cutoff", "must be >= 4");
    if (sc.n_bands > 2 * sc.cutoff) add(rep, "bands.n_bands", "exceeds 2 * cutoff");
    if (sc.k_points < 3) add(rep, "bands.k_points", "must be >= 3");
    positive(sc.imaging.width, "analysis.imaging.width");
    if (sc.imaging.n_peaks < 1) add(rep, "analysis.imaging.n_peaks", "must be >= 1");
    positive(sc.imaging.tof, "analysis.imaging.tof");
    positive(sc.imaging.blur, "analysis.imaging.blur");
    nonnegative(sc.imaging.noise, "analysis.imaging.noise");
    std::set<std::string> names;
    for (std::size_t i = 0; i < sc.fits.size(); ++i) {
        const std::string p = "analysis.fits[" + std::to_string(i) + "]";
        if (!names.insert(sc.fits[i].name).second) add(rep, p + ".name", "duplicate fit name");
        if (!(sc.fits[i].window > 0.0)) add(rep, p + ".window", "must be > 0");
    }
    for (const auto& [field, name] : {std::pair{"analysis.bloch_fit", sc.bloch_fit},
                                      std::pair{"analysis.gap_fit", sc.gap_fit},
                                      std::pair{"analysis.mass_fit", sc.mass_fit}})
        if (!name.empty() && !names.count(name)) add(rep, field, "names no fit in analysis.fits");
    if (sc.analyze && sc.fits.empty()) add(rep, "analysis.fits", "analysis enabled without fits", false);
    if (sc.analytic_duration && !(*sc.analytic_duration > 0.0)) add(rep, "analysis.analytic_duration", "must be > 0");
}

// physics guards per point; needs a config without errors
void check_physics(const Scenario& sc, ValidationReport& rep) {
    for (const Point& p : expand(sc)) {
        const std::string where = "point " + p.id;
        LatticeConfig cfg = sc.lattice;
        cfg.depth = p.depth;
        const double delay_r = cfg.time_to_recoil(sc.delay);
        const Steps st = steps(sc, cfg, delay_r, p.duration);
        try {
            propagator::check_time_step(cfg, st.dt);
        } catch (const InvalidArgument& e) {
            add(rep, where + " (propagation.steps_per_recoil)", e.what());
        }
        const double width = cfg.length_to_recoil(sc.envelope_width);
        if (0.5 / width * 8.0 >= 1.0)
            add(rep, where + " (propagation.envelope_width)",
                "envelope too narrow: its quasi-momentum spread reaches the zone edge");
        const propagator::GridSpec grid{sc.sites, sc.points_per_site};
        const double force = std::abs(cfg.force_from_acceleration(p.acceleration));
        const double t_on = std::max(0.0, st.t_final - delay_r);
        double excursion = 0.5 * force * t_on * t_on;
        if (p.depth >= 1.0 && force > 0.0) {
            const auto e0 = bands::band_energies(cfg, 0.0, sc.cutoff, 1);
            const auto e1 = bands::band_energies(cfg, 1.0, sc.cutoff, 1);
            excursion = std::min(excursion, (e1[0] - e0[0]) / force);
        }
        const double needed = 5.0 * width + excursion + double(sc.edge_sites) * pi;
        if (needed > 0.5 * grid.box_length())
            add(rep, where + " (propagation.sites)",
                "box margin too small: packet, excursion and edge guard need " + csv::format(std::ceil(needed / pi)) +
                    " sites per side, box has " + csv::format(0.5 * double(sc.sites)));
        if (force > 0.0) {
            const auto b = bands::solve_bands(cfg, bands::KGrid{0.0, 0.0, 1},
                                              solve_options(sc.cutoff, 2, ExecPolicy::serial));
            const double gap = b.gap(1, 0, 0);
            const double ratio = 2.0 * force * std::abs(b.momentum(1, 0, 0)) / (gap * gap);
            if (ratio > 0.3)
                add(rep, where, "first-order guard |F x_21/E_21| = " + csv::format(ratio) +
                                     " exceeds 0.3; the analytic overlay is outside its validity range", false);
        }
        if (sc.analyze)
            for (const auto& f : sc.fits)
                if (f.window > p.duration * (1.0 + 1e-9))
                    add(rep, where + " (analysis.fits)", "fit '" + f.name + "' window exceeds the run duration", false);
    }
}

void check(const Scenario& sc, ValidationReport& rep) {
    check_fields(sc, rep);
    if (rep.ok()) check_physics(sc, rep);
}

// ------------------------------------------------------------------ utils

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

struct BandFacts {
    double gap_k0 = 0.0, gap_kr = 0.0;  // E_r
    double m_star = 0.0;                // m*/m0 at k = 0
    double p21 = 0.0;                   // |p_21(0)|
};

BandFacts band_facts(const LatticeConfig& cfg, int cutoff) {
    const auto b = bands::solve_bands(cfg, bands::KGrid{0.0, 1.0, 2},
                                      solve_options(cutoff, 2, ExecPolicy::serial));
    return {b.gap(1, 0, 0), b.gap(1, 0, 1), b.mass_ratio(0, 0), std::abs(b.momentum(1, 0, 0))};
}

json timescales(const LatticeConfig& cfg, double acceleration, const BandFacts& bf) {
    const double w_b = cfg.bloch_frequency(acceleration);
    const double w_gap = cfg.angular_frequency(bf.gap_k0);
    return {{"bloch_frequency_rad_s", w_b},
            {"bloch_period_s", w_b != 0.0 ? 2.0 * pi / std::abs(w_b) : nan()},
            {"gap_frequency_k0_rad_s", w_gap},
            {"gap_frequency_kr_rad_s", cfg.angular_frequency(bf.gap_kr)},
            {"gap_time_k0_s", 2.0 * pi / w_gap},
            {"m_star_k0", bf.m_star}};
}

json fit_json(const std::string& name, const analysis::TwoSineFit& f, const LatticeConfig& cfg) {
    const auto p = f.p.array();
    const auto s = f.sigma.array();
    static const char* keys[6] = {"A_d", "omega_d", "phi_d", "A_B", "omega_B", "phi_B"};
    json params, si;
    for (int i = 0; i < 6; ++i) params[keys[i]] = {{"value", p[std::size_t(i)]}, {"sigma", s[std::size_t(i)]}};
    const double vr = cfg.recoil_velocity() * 1e3, tr = cfg.recoil_time();
    si["A_d_mm_s"] = {{"value", f.p.A_d * vr}, {"sigma", f.sigma.A_d * vr}};
    si["omega_d_rad_s"] = {{"value", f.p.w_d / tr}, {"sigma", f.sigma.w_d / tr}};
    si["A_B_mm_s"] = {{"value", f.p.A_B * vr}, {"sigma", f.sigma.A_B * vr}};
    si["omega_B_rad_s"] = {{"value", f.p.w_B / tr}, {"sigma", f.sigma.w_B / tr}};
    json cov = json::array();
    for (const auto& row : f.covariance) cov.push_back(row);
    return {{"name", name},
            {"status", "ok"},
            {"model", "v = A_d sin(omega_d (t - t_ref) + phi_d) + A_B sin(omega_B (t - t_ref) + phi_B)"},
            {"units", "A in v_r, omega in 1/t_r, phi in rad, t in t_r"},
            {"window_tr", {f.window_start, f.window_end}},
            {"window_s", {cfg.time_to_si(f.window_start), cfg.time_to_si(f.window_end)}},
            {"t_ref_tr", f.t_ref},
            {"n_points", f.n_points},
            {"params", params},
            {"si", si},
            {"covariance", cov},
            {"residual_norm", f.residual_norm},
            {"iterations", f.iterations},
            {"start_candidates", f.candidates},
            {"notes", f.notes}};
}

json mass_json(const analysis::MassEstimate& m, const LatticeConfig& cfg, const std::string& fit) {
    return {{"fit", fit},
            {"m_eff", m.m_eff},
            {"sigma_m_eff", m.sigma_m_eff},
            {"m_dyn", m.m_dyn},
            {"sigma_m_dyn", m.sigma_m_dyn},
            {"t0_tr", m.t0},
            {"t0_s", cfg.time_to_si(m.t0)}};
}

// Two-sine fits, masses and band facts on a recoil-unit trace.
struct FitOutcome {
    json records = json::object();  // name -> record
    std::map<std::string, analysis::TwoSineFit> fits;
    json masses;                    // null when unavailable
    std::vector<std::string> notes;
};

FitOutcome fit_all(const Scenario& sc, const VelocityTrace& tr, const LatticeConfig& cfg, double delay_r,
                   double force) {
    FitOutcome out;
    const double end = tr.t.empty() ? 0.0 : tr.t.back();
    for (const auto& spec : sc.fits) {
        const double window = cfg.time_to_recoil(spec.window);
        const double slack = 1e-6 * cfg.time_to_recoil(sc.cadence);
        if (delay_r + window > end + slack) {
            out.records[spec.name] = {{"name", spec.name}, {"status", "skipped"}, {"error", "window exceeds the trace"}};
            continue;
        }
        analysis::TwoSineOptions o;
        o.start = delay_r;
        o.window = window + slack;
        if (force != 0.0) o.force = force;
        try {
            auto f = analysis::fit_two_sine(tr, o);
            out.records[spec.name] = fit_json(spec.name, f, cfg);
            out.fits.emplace(spec.name, std::move(f));
        } catch (const Error& e) {
            out.records[spec.name] = {{"name", spec.name}, {"status", "failed"}, {"error", e.what()}};
        }
    }
    const auto it = out.fits.find(sc.mass_fit);
    if (it != out.fits.end() && force != 0.0) {
        try {
            out.masses = mass_json(analysis::extract_masses(it->second, force), cfg, sc.mass_fit);
        } catch (const Error& e) {
            out.notes.push_back(std::string("masses: ") + e.what());
        }
    }
    return out;
}

// ------------------------------------------------------------------ point

json run_point(const Scenario& sc, const Point& p, const fs::path& dir, std::uint64_t seed, bool analyze) {
    fs::create_directories(dir);
    LatticeConfig cfg = sc.lattice;
    cfg.depth = p.depth;
    const propagator::GridSpec grid{sc.sites, sc.points_per_site};
    const auto sched = propagator::ForceSchedule::from_si(cfg, sc.delay, sc.rise, p.acceleration);
    const Steps st = steps(sc, cfg, sched.delay, p.duration);
    const double width = cfg.length_to_recoil(sc.envelope_width);
    const bool imaging = analyze && sc.trace_source == "imaging";

    json pj;
    pj["id"] = p.id;
    pj["index"] = p.index;
    pj["depth"] = p.depth;
    pj["acceleration_m_s2"] = p.acceleration;
    pj["duration_s"] = p.duration;
    pj["force_er_kr"] = sched.force;
    pj["dt_tr"] = st.dt;
    pj["seed"] = seed;
    std::vector<std::string> notes;

    const BandFacts bf = band_facts(cfg, sc.cutoff);
    pj["timescales"] = timescales(cfg, p.acceleration, bf);

    propagator::Wavefunction psi =
        sc.loading == "ramp"
            ? propagator::prepare_ramped_state(cfg, grid, width, cfg.time_to_recoil(sc.ramp_duration), st.dt)
            : propagator::prepare_ground_state(cfg, grid, width, {.cutoff = sc.cutoff});
    propagator::EvolveOptions eo;
    eo.dt = st.dt;
    eo.t_final = st.t_final;
    eo.sample_every = st.cadence;
    eo.snapshot_every = imaging ? st.cadence : 0.0;
    eo.edge_sites = sc.edge_sites;
    eo.edge_tolerance = sc.edge_tolerance;
    const auto run = propagator::evolve(std::move(psi), cfg, sched, eo);
    {
        std::ostringstream s;
        propagator::write_trace_csv(s, run.trace);
        write_atomic(dir / "trace.csv", s.str());
    }

    VelocityTrace tr = run.trace;
    bool edge_flag = false;
    if (imaging) {
        const auto tof = analysis::tof_window(cfg, {sc.imaging.centre, sc.imaging.width}, sc.imaging.tof,
                                              sc.imaging.blur);
        analysis::DiffractionOptions dopt;
        dopt.n_peaks = sc.imaging.n_peaks;
        const std::size_t nf = run.snapshots.size();
        std::vector<analysis::DiffractionFit> frames(nf);
        std::vector<std::string> frame_errors(nf);
        std::vector<double> times(nf);
#pragma omp parallel for schedule(dynamic, 4)
        for (std::size_t k = 0; k < nf; ++k) {
            times[k] = run.snapshots[k].time();
            auto prof = propagator::tof_expand(run.snapshots[k], cfg, tof);
            if (sc.imaging.noise > 0.0) {
                const double peak = *std::max_element(prof.density.begin(), prof.density.end());
                prof = analysis::add_noise(std::move(prof), sc.imaging.noise * peak, splitmix(seed ^ (k + 1)));
            }
            try {
                frames[k] = analysis::fit_diffraction(prof, cfg, dopt);
            } catch (const Error& e) {
                frames[k].amplitude.assign(std::size_t(dopt.n_peaks), 0.0);
                frames[k].velocity.assign(std::size_t(dopt.n_peaks), 0.0);
                frames[k].centre.assign(std::size_t(dopt.n_peaks), 0.0);
                frame_errors[k] = e.what();
            }
        }
        std::vector<std::string> header = {"t_us"};
        for (int j = 0; j < dopt.n_peaks; ++j) header.push_back("A" + std::to_string(j));
        for (int j = 0; j < dopt.n_peaks; ++j) header.push_back("v" + std::to_string(j) + "_vr");
        header.insert(header.end(), {"width_um", "edge_estimate", "edge_flag", "fit_ok"});
        std::ostringstream s;
        csv::Writer w(s, header);
        std::size_t failed = 0;
        for (std::size_t k = 0; k < nf; ++k) {
            const auto& f = frames[k];
            std::vector<double> row = {cfg.time_to_si(times[k]) * 1e6};
            row.insert(row.end(), f.amplitude.begin(), f.amplitude.end());
            row.insert(row.end(), f.velocity.begin(), f.velocity.end());
            row.insert(row.end(), {f.width, f.edge_estimate, f.edge_flag ? 1.0 : 0.0, frame_errors[k].empty() ? 1.0 : 0.0});
            w.row(row);
            edge_flag = edge_flag || f.edge_flag;
            if (!frame_errors[k].empty()) ++failed;
        }
        write_atomic(dir / "frames.csv", s.str());
        if (failed) notes.push_back(std::to_string(failed) + " frame fits failed; first: " +
                                    *std::find_if(frame_errors.begin(), frame_errors.end(),
                                                  [](const std::string& e) { return !e.empty(); }));
        tr = analysis::reconstruct_velocity(frames, times);
        notes.insert(notes.end(), tr.notes.begin(), tr.notes.end());
        pj["edge_flag"] = edge_flag;
        if (edge_flag)
            notes.push_back("diffraction orders beyond the imaging window carry visible weight; "
                            "the Bloch amplitude is overestimated and m_eff underestimated");
    }
    pj["trace_source"] = imaging ? "imaging" : "direct";

    FitOutcome fo;
    VelocityTrace guide;
    if (analyze) {
        fo = fit_all(sc, tr, cfg, sched.delay, sched.force);
        notes.insert(notes.end(), fo.notes.begin(), fo.notes.end());
        json fits = json::object();
        for (const auto& [name, rec] : fo.records.items()) {
            fits[name] = rec;
            write_atomic(dir / ("fit_" + name + ".json"), rec.dump(2) + "\n");
            const auto it = fo.fits.find(name);
            if (it == fo.fits.end()) continue;
            std::ostringstream s;
            csv::Writer w(s, {"t_us", "residual_mm_s"});
            const auto& f = it->second;
            const double step = f.n_points > 1 ? (f.window_end - f.window_start) / double(f.n_points - 1) : 0.0;
            for (std::size_t i = 0; i < f.residuals.size(); ++i)
                w.row({cfg.time_to_si(f.window_start + step * double(i)) * 1e6,
                       f.residuals[i] * cfg.recoil_velocity() * 1e3});
            write_atomic(dir / ("residuals_" + name + ".csv"), s.str());
        }
        pj["fits"] = fits;
        pj["masses"] = fo.masses;
        if (sc.lowpass) {
            const auto b = fo.fits.find(sc.bloch_fit);
            const auto g = fo.fits.find(sc.gap_fit);
            if (b != fo.fits.end() && g != fo.fits.end()) {
                const double cutoff = std::sqrt(b->second.p.w_B * g->second.p.w_d);
                try {
                    guide = analysis::lowpass_guide(tr, cutoff);
                    pj["lowpass_cutoff_rad_s"] = cutoff / cfg.recoil_time();
                } catch (const Error& e) {
                    notes.push_back(std::string("lowpass: ") + e.what());
                }
            }
        }
    }

    {
        // plot-ready velocities in mm/s
        std::vector<std::string> header = {"t_us", "v_direct_mm_s", "v_analysis_mm_s", "v_lowpass_mm_s"};
        for (const auto& [name, f] : fo.fits) header.push_back("fit_" + name + "_mm_s");
        std::ostringstream s;
        csv::Writer w(s, header);
        const double vr = cfg.recoil_velocity() * 1e3;
        std::size_t ia = 0, ig = 0;
        for (std::size_t i = 0; i < run.trace.size(); ++i) {
            const double t = run.trace.t[i];
            const auto at = [&](const VelocityTrace& x, std::size_t& j) {
                while (j < x.size() && x.t[j] < t - 1e-9) ++j;
                return j < x.size() && std::abs(x.t[j] - t) <= 1e-9 ? x.v[j] * vr : nan();
            };
            std::vector<double> row = {cfg.time_to_si(t) * 1e6, run.trace.v[i] * vr, at(tr, ia), at(guide, ig)};
            for (const auto& [name, f] : fo.fits)
                row.push_back(t >= f.window_start - 1e-9 && t <= f.window_end + 1e-9 ? f.eval(t) * vr : nan());
            w.row(row);
        }
        write_atomic(dir / "velocity.csv", s.str());
    }

    if (sc.analytic_duration) {
        const double T = cfg.time_to_recoil(*sc.analytic_duration);
        analytic::WavepacketSpec ws;
        ws.sigma_k = 0.5 / width;
        const analytic::Model model(cfg, ws, sched.force, T);
        std::vector<double> t;
        for (double x = 0.0; x <= T * (1.0 + 1e-12); x += st.cadence) t.push_back(x);
        const auto at = analytic::perturbative_velocity_trace(model, t);
        std::ostringstream s;
        csv::Writer w(s, {"t_us", "v_mm_s", "a_over_F"});
        for (std::size_t i = 0; i < at.size(); ++i)
            w.row({cfg.time_to_si(sched.delay + at.t[i]) * 1e6, at.v[i] * cfg.recoil_velocity() * 1e3,
                   sched.force != 0.0 ? at.a[i] / sched.force : nan()});
        write_atomic(dir / "analytic.csv", s.str());
        pj["analytic_guard_ratio"] = at.guard_ratio;
        if (at.guard_violated) notes.push_back("analytic overlay outside its first-order validity range");
        if (sc.rise > 0.0 || sc.loading != "ground")
            notes.push_back("analytic overlay assumes an abrupt onset from the band ground state");
    }

    pj["status"] = "ok";
    pj["notes"] = notes;
    write_atomic(dir / "point.json", pj.dump(2) + "\n");
    return pj;
}

json versions() {
    std::ostringstream eigen, nl;
    eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
    nl << NLOHMANN_JSON_VERSION_MAJOR << '.' << NLOHMANN_JSON_VERSION_MINOR << '.' << NLOHMANN_JSON_VERSION_PATCH;
    return {{"onset", kVersion}, {"schema", kSchemaVersion}, {"fftw", fft::library_version()},
            {"eigen", eigen.str()}, {"nlohmann_json", nl.str()}, {"compiler", __VERSION__}};
}

}  // namespace

// ------------------------------------------------------------------ public

ValidationReport validate(const json& config) {
    ValidationReport rep;
    if (!config.is_object()) {
        add(rep, "", "config must be a JSON object");
        return rep;
    }
    const Scenario sc = read(config, rep);
    check(sc, rep);
    return rep;
}

Scenario parse(const json& config) {
    ValidationReport rep;
    if (!config.is_object()) {
        add(rep, "", "config must be a JSON object");
        throw ValidationError(rep);
    }
    Scenario sc = read(config, rep);
    check(sc, rep);
    if (!rep.ok()) throw ValidationError(rep);
    return sc;
}

json to_json(const Scenario& sc) {
    json sweeps = json::array();
    for (const auto& b : sc.sweeps) {
        json o = json::object();
        if (!b.depth.empty()) o["depth"] = b.depth;
        if (!b.acceleration.empty()) o["acceleration"] = b.acceleration;
        if (!b.duration.empty()) o["duration"] = b.duration;
        sweeps.push_back(o);
    }
    json fits = json::array();
    for (const auto& f : sc.fits) fits.push_back({{"name", f.name}, {"window", f.window}});
    json analysis = {{"enabled", sc.analyze},
                     {"trace", sc.trace_source},
                     {"imaging",
                      {{"centre", sc.imaging.centre},
                       {"width", sc.imaging.width},
                       {"n_peaks", sc.imaging.n_peaks},
                       {"tof", sc.imaging.tof},
                       {"blur", sc.imaging.blur},
                       {"noise", sc.imaging.noise}}},
                     {"fits", fits},
                     {"bloch_fit", sc.bloch_fit},
                     {"gap_fit", sc.gap_fit},
                     {"mass_fit", sc.mass_fit},
                     {"lowpass", sc.lowpass}};
    if (sc.analytic_duration) analysis["analytic_duration"] = *sc.analytic_duration;
    return {{"schema_version", kSchemaVersion},
            {"name", sc.name},
            {"seed", sc.seed},
            {"lattice", {{"depth", sc.lattice.depth}, {"wavelength", sc.lattice.wavelength}, {"mass", sc.lattice.bare_mass}}},
            {"force", {{"acceleration", sc.acceleration}, {"delay", sc.delay}, {"rise", sc.rise}}},
            {"sweep", sweeps},
            {"propagation",
             {{"sites", sc.sites},
              {"points_per_site", sc.points_per_site},
              {"steps_per_recoil", sc.steps_per_recoil},
              {"cadence", sc.cadence},
              {"duration", sc.duration},
              {"envelope_width", sc.envelope_width},
              {"loading", sc.loading},
              {"ramp_duration", sc.ramp_duration},
              {"edge_sites", sc.edge_sites},
              {"edge_tolerance", sc.edge_tolerance}}},
            {"bands", {{"n_bands", sc.n_bands}, {"cutoff", sc.cutoff}, {"k_points", sc.k_points}}},
            {"analysis", analysis}};
}

std::vector<std::string> builtin_names() { return {"fig2", "fig3", "fig4"}; }

json builtin(const std::string& name) {
    json base = {{"schema_version", kSchemaVersion},
                 {"name", name},
                 {"seed", 1},
                 {"lattice", {{"depth", 9.4}, {"wavelength", constants::default_wavelength}, {"mass", constants::rb87_mass}}},
                 {"propagation", {{"cadence", 4e-6}, {"envelope_width", 20e-6}}}};
    if (name == "fig2") {
        // single run: 20 us delay, 20 us switch, 2 ms at 4 us resolution
        base["force"] = {{"acceleration", 11.7}, {"delay", 20e-6}, {"rise", 20e-6}};
        base["propagation"]["duration"] = 2e-3;
        base["analysis"] = {{"fits", {{{"name", "bloch"}, {"window", 2e-3}}, {{"name", "gap"}, {"window", 300e-6}}}},
                            {"bloch_fit", "bloch"},
                            {"gap_fit", "gap"},
                            {"mass_fit", "gap"},
                            {"analytic_duration", 300e-6}};
        return base;
    }
    if (name == "fig3") {
        // force sweep at s = 9.4 over 2 ms; depth sweep at two forces a factor 3 apart over 300 us
        base["force"] = {{"acceleration", 11.7}, {"delay", 20e-6}, {"rise", 20e-6}};
        base["sweep"] = {{{"depth", {9.4}}, {"acceleration", {6.0, 9.0, 11.7, 15.0, 18.0}}, {"duration", {2e-3}}},
                         {{"depth", {3.0, 6.0, 9.4, 12.0}}, {"acceleration", {3.9, 11.7}}, {"duration", {300e-6}}}};
        base["analysis"] = {{"fits", {{{"name", "bloch"}, {"window", 2e-3}}, {{"name", "gap"}, {"window", 300e-6}}}},
                            {"bloch_fit", "bloch"},
                            {"gap_fit", "gap"},
                            {"mass_fit", "gap"}};
        return base;
    }
    if (name == "fig4") {
        // depth sweep, abrupt onset, 4-peak imaging window, 300 us fit at the onset
        base["force"] = {{"acceleration", 2.0}, {"delay", 0.0}, {"rise", 0.0}};
        base["propagation"]["duration"] = 300e-6;
        base["sweep"] = {{{"depth", {2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.4, 10.0, 11.0, 12.0, 13.0, 15.0}}}};
        base["analysis"] = {{"fits", {{{"name", "gap"}, {"window", 300e-6}}}},
                            {"bloch_fit", "gap"},
                            {"gap_fit", "gap"},
                            {"mass_fit", "gap"},
                            {"lowpass", false}};
        return base;
    }
    throw InvalidArgument("unknown builtin scenario '" + name + "' (fig2, fig3, fig4)");
}

std::vector<Point> expand(const Scenario& sc) {
    std::vector<Point> out;
    const auto push = [&](double s, double a, double d) {
        Point p;
        p.index = out.size();
        p.depth = s;
        p.acceleration = a;
        p.duration = d;
        std::ostringstream id;
        id << 'p' << std::setw(3) << std::setfill('0') << p.index << "_s" << csv::format(s) << "_a"
           << csv::format(a) << "_T" << csv::format(d * 1e6) << "us";
        p.id = id.str();
        out.push_back(std::move(p));
    };
    if (sc.sweeps.empty()) {
        push(sc.lattice.depth, sc.acceleration, sc.duration);
        return out;
    }
    for (const auto& b : sc.sweeps) {
        const auto or_base = [](const std::vector<double>& v, double base) {
            return v.empty() ? std::vector<double>{base} : v;
        };
        for (double s : or_base(b.depth, sc.lattice.depth))
            for (double a : or_base(b.acceleration, sc.acceleration))
                for (double d : or_base(b.duration, sc.duration)) push(s, a, d);
    }
    return out;
}

Bundle run(const Scenario& input, const RunOptions& opts) {
    Scenario sc = input;
    if (opts.seed) sc.seed = *opts.seed;
    if (!opts.analyze) sc.analyze = false;
    {
        ValidationReport rep;
        check(sc, rep);
        if (!rep.ok()) throw ValidationError(rep);
    }
    if (opts.out.empty()) throw InvalidArgument("run: output directory required");
    if (opts.threads > 0) omp_set_num_threads(opts.threads);

    const fs::path out = opts.out;
    if (fs::exists(out / "points") && !fs::exists(out / "manifest.json"))
        throw Error("output directory " + out.string() + " holds a points/ directory without a manifest; refusing to overwrite");
    fs::create_directories(out);
    for (const char* stale : {"points", "bands"}) fs::remove_all(out / stale);
    for (const char* stale : {"summary.csv", "summary.json", "manifest.json"}) fs::remove(out / stale);
    fs::create_directories(out / "points");
    fs::create_directories(out / "bands");

    const auto points = expand(sc);

    // band tables, one per depth
    std::vector<double> depths;
    for (const auto& p : points)
        if (std::find(depths.begin(), depths.end(), p.depth) == depths.end()) depths.push_back(p.depth);
    for (double s : depths) {
        LatticeConfig cfg = sc.lattice;
        cfg.depth = s;
        const auto b = bands::solve_bands(cfg, bands::KGrid::brillouin_zone(sc.k_points),
                                          solve_options(sc.cutoff, sc.n_bands, ExecPolicy::parallel));
        std::ostringstream str;
        bands::write_band_table(str, b);
        write_atomic(out / "bands" / ("s" + csv::format(s) + ".csv"), str.str());
    }

    std::vector<json> results(points.size());
    const long np = long(points.size());
#pragma omp parallel for schedule(dynamic, 1) if (np > 1)
    for (long i = 0; i < np; ++i) {
        const auto& p = points[std::size_t(i)];
        const std::uint64_t seed = splitmix(sc.seed + p.index);
        try {
            results[std::size_t(i)] = run_point(sc, p, out / "points" / p.id, seed, sc.analyze);
        } catch (const std::exception& e) {
            results[std::size_t(i)] = {{"id", p.id},
                                       {"index", p.index},
                                       {"depth", p.depth},
                                       {"acceleration_m_s2", p.acceleration},
                                       {"duration_s", p.duration},
                                       {"status", "failed"},
                                       {"error", e.what()}};
        }
    }

    Bundle b;
    b.dir = out;
    std::ostringstream cs;
    csv::Writer w(cs, {"index", "depth", "acceleration_m_s2", "duration_us", "ok", "omega_B_rad_s",
                       "sigma_omega_B_rad_s", "omega_B_theory_rad_s", "omega_d_rad_s", "sigma_omega_d_rad_s",
                       "gap_k0_rad_s", "gap_kr_rad_s", "m_star", "m_eff", "sigma_m_eff", "m_dyn", "sigma_m_dyn",
                       "edge_flag"});
    json pts = json::array();
    for (const auto& r : results) {
        const bool ok = r.value("status", "") == "ok";
        if (!ok) b.failures.push_back(r["id"].get<std::string>() + ": " + r.value("error", "unknown error"));
        const auto fitv = [&](const std::string& fit, const char* key, const char* field) {
            if (!ok || !r.contains("fits") || !r["fits"].contains(fit) || r["fits"][fit].value("status", "") != "ok")
                return nan();
            return r["fits"][fit]["si"][key][field].get<double>();
        };
        const auto massv = [&](const char* key) {
            return ok && r.contains("masses") && r["masses"].is_object() ? r["masses"][key].get<double>() : nan();
        };
        const auto ts = [&](const char* key) { return ok ? r["timescales"][key].get<double>() : nan(); };
        w.row({double(r["index"].get<std::size_t>()), r["depth"].get<double>(), r["acceleration_m_s2"].get<double>(),
               r["duration_s"].get<double>() * 1e6, ok ? 1.0 : 0.0,
               fitv(sc.bloch_fit, "omega_B_rad_s", "value"), fitv(sc.bloch_fit, "omega_B_rad_s", "sigma"),
               ts("bloch_frequency_rad_s"), fitv(sc.gap_fit, "omega_d_rad_s", "value"),
               fitv(sc.gap_fit, "omega_d_rad_s", "sigma"), ts("gap_frequency_k0_rad_s"),
               ts("gap_frequency_kr_rad_s"), ts("m_star_k0"), massv("m_eff"), massv("sigma_m_eff"), massv("m_dyn"),
               massv("sigma_m_dyn"), ok && r.value("edge_flag", false) ? 1.0 : 0.0});
        json brief = {{"id", r["id"]}, {"status", r["status"]}, {"depth", r["depth"]},
                      {"acceleration_m_s2", r["acceleration_m_s2"]}, {"duration_s", r["duration_s"]}};
        if (ok) {
            brief["timescales"] = r["timescales"];
            brief["masses"] = r.value("masses", json());
            brief["edge_flag"] = r.value("edge_flag", false);
            json fits = json::object();
            const json rf = r.value("fits", json::object());
            for (const auto& [name, rec] : rf.items()) {
                json f = {{"status", rec["status"]}};
                if (rec["status"] == "ok") {
                    f["omega_d_rad_s"] = rec["si"]["omega_d_rad_s"];
                    f["omega_B_rad_s"] = rec["si"]["omega_B_rad_s"];
                } else {
                    f["error"] = rec.value("error", "");
                }
                fits[name] = f;
            }
            brief["fits"] = fits;
            brief["notes"] = r["notes"];
        } else {
            brief["error"] = r["error"];
        }
        pts.push_back(brief);
    }
    write_atomic(out / "summary.csv", cs.str());
    b.summary = {{"name", sc.name}, {"points", pts}, {"failures", b.failures}};
    write_atomic(out / "summary.json", b.summary.dump(2) + "\n");

    const json resolved = to_json(sc);
    const std::string canon = resolved.dump();
    json files = json::array();
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(out))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") paths.push_back(fs::relative(e.path(), out));
    std::sort(paths.begin(), paths.end());
    for (const auto& rel : paths) {
        const std::string bytes = read_file(out / rel);
        files.push_back({{"path", rel.generic_string()}, {"bytes", bytes.size()}, {"fnv1a", hex(fnv1a(bytes))}});
    }
    b.manifest = {{"schema_version", kSchemaVersion},
                  {"name", sc.name},
                  {"seed", sc.seed},
                  {"config_hash", hex(fnv1a(canon))},
                  {"config", resolved},
                  {"versions", versions()},
                  {"points", points.size()},
                  {"failures", b.failures},
                  {"files", files}};
    write_atomic(out / "manifest.json", b.manifest.dump(2) + "\n");
    return b;
}

json analyze_trace(const Scenario& sc, const VelocityTrace& si, double depth, double acceleration) {
    LatticeConfig cfg = sc.lattice;
    cfg.depth = depth;
    cfg.validate();
    if (si.t.size() != si.v.size() || si.t.size() < 12) throw InvalidArgument("analyze_trace: need >= 12 (t, v) samples");
    VelocityTrace tr;
    for (std::size_t i = 0; i < si.size(); ++i) {
        tr.t.push_back(cfg.time_to_recoil(si.t[i]));
        tr.v.push_back(cfg.velocity_to_recoil(si.v[i]));
    }
    const auto sched = propagator::ForceSchedule::from_si(cfg, sc.delay, sc.rise, acceleration);
    const auto fo = fit_all(sc, tr, cfg, sched.delay, sched.force);
    const BandFacts bf = band_facts(cfg, sc.cutoff);
    return {{"depth", depth},
            {"acceleration_m_s2", acceleration},
            {"timescales", timescales(cfg, acceleration, bf)},
            {"fits", fo.records},
            {"masses", fo.masses},
            {"notes", fo.notes}};
}

}  // namespace onset::scenario
