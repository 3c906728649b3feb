#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "onset/csv.hpp"
#include "onset/scenario.hpp"

using namespace onset;
using namespace onset::scenario;
namespace fs = std::filesystem;

namespace {
json small() {
    return {{"schema_version", 1},
            {"name", "small"},
            {"seed", 3},
            {"lattice", {{"depth", 9.4}, {"mass", constants::rb87_mass}}},
            {"force", {{"acceleration", 2.0}}},
            {"sweep", {{{"depth", {5.0, 9.4}}}}},
            {"propagation", {{"sites", 128}, {"duration", 200e-6}, {"envelope_width", 5e-6}, {"edge_sites", 12}}},
            {"analysis",
             {{"fits", {{{"name", "gap"}, {"window", 200e-6}}}},
              {"imaging", {{"noise", 0.01}}},
              {"analytic_duration", 100e-6}}}};
}

bool has_issue(const ValidationReport& r, const std::string& field, const std::string& text = "") {
    for (const auto& i : r.issues)
        if (i.error && i.field.find(field) != std::string::npos && i.message.find(text) != std::string::npos)
            return true;
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const char* name) {
    const fs::path p = fs::temp_directory_path() / ("onset_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}
}  // namespace

TEST_CASE("a valid config passes and echoes every default") {
    const auto rep = validate(small());
    CHECK(rep.ok());
    const auto sc = parse(small());
    const json echo = to_json(sc);
    CHECK(echo["propagation"]["steps_per_recoil"] == 500.0);
    CHECK(echo["bands"]["cutoff"] == 32);
    CHECK(parse(echo).sites == sc.sites);
    CHECK(to_json(parse(echo)) == echo);
}

TEST_CASE("missing mass is an error") {
    json c = small();
    c["lattice"].erase("mass");
    const auto rep = validate(c);
    CHECK_FALSE(rep.ok());
    CHECK(has_issue(rep, "lattice.mass", "required"));
    CHECK_THROWS_AS(parse(c), ValidationError);
}

TEST_CASE("negative depth is an error") {
    json c = small();
    c["lattice"]["depth"] = -1.0;
    CHECK(has_issue(validate(c), "lattice.depth"));
    json d = small();
    d["sweep"][0]["depth"] = {5.0, -2.0};
    CHECK(has_issue(validate(d), "sweep[0].depth"));
}

TEST_CASE("a too large time step names the s*dt rule") {
    json c = small();
    c["lattice"]["depth"] = 400.0;
    c.erase("sweep");
    c["propagation"]["steps_per_recoil"] = 300.0;
    const auto rep = validate(c);
    CHECK(has_issue(rep, "steps_per_recoil", "s*dt/t_r"));
}

TEST_CASE("every problem is listed at once") {
    json c = small();
    c["lattice"].erase("mass");
    c["force"]["delay"] = -1e-6;
    c["propagation"]["cadence"] = "fast";
    c["propagation"]["colour"] = 1;
    c["sweep"][0]["acceleration"] = json::array();
    c["analysis"]["mass_fit"] = "nope";
    const auto rep = validate(c);
    CHECK(rep.errors() >= 6);
    CHECK(has_issue(rep, "lattice.mass"));
    CHECK(has_issue(rep, "force.delay"));
    CHECK(has_issue(rep, "propagation.cadence", "number"));
    CHECK(has_issue(rep, "propagation.colour", "unknown"));
    CHECK(has_issue(rep, "sweep[0].acceleration", "empty"));
    CHECK(has_issue(rep, "analysis.mass_fit"));
    CHECK(rep.to_json().size() == rep.issues.size());
}

TEST_CASE("physics guards") {
    SUBCASE("box margin") {
        json c = small();
        c["propagation"]["sites"] = 64;
        CHECK(has_issue(validate(c), "propagation.sites", "box margin"));
    }
    SUBCASE("narrow envelope") {
        json c = small();
        c["propagation"]["envelope_width"] = 0.5e-6;
        CHECK(has_issue(validate(c), "envelope_width"));
    }
    SUBCASE("first-order guard is a warning") {
        json c = small();
        c["force"]["acceleration"] = 400.0;
        c["propagation"]["duration"] = 20e-6;
        c["analysis"]["fits"][0]["window"] = 20e-6;
        const auto rep = validate(c);
        const bool warned = std::any_of(rep.issues.begin(), rep.issues.end(), [](const Issue& i) {
            return !i.error && i.message.find("first-order guard") != std::string::npos;
        });
        CHECK(warned);
    }
    SUBCASE("schema version") {
        json c = small();
        c["schema_version"] = 2;
        CHECK(has_issue(validate(c), "schema_version"));
    }
}

TEST_CASE("sweep expansion") {
    json c = small();
    c["sweep"] = {{{"depth", {3.0, 6.0}}, {"acceleration", {1.0, 2.0, 3.0}}}, {{"duration", {100e-6}}}};
    const auto pts = expand(parse(c));
    REQUIRE(pts.size() == 7);
    CHECK(pts[0].depth == 3.0);
    CHECK(pts[2].acceleration == 3.0);
    CHECK(pts[6].depth == 9.4);
    CHECK(pts[6].duration == 100e-6);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(pts[i].index == i);
    CHECK(pts[1].id != pts[4].id);
}

TEST_CASE("builtins parse") {
    for (const auto& n : builtin_names()) {
        const auto rep = validate(builtin(n));
        CHECK_MESSAGE(rep.ok(), n << ":\n" << rep.str());
    }
    CHECK(expand(parse(builtin("fig3"))).size() == 13);
    CHECK(expand(parse(builtin("fig4"))).size() == 13);
    CHECK_THROWS_AS(builtin("fig9"), InvalidArgument);
}

TEST_CASE("fnv1a") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(hex(fnv1a("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("a run writes a deterministic bundle") {
    const auto sc = parse(small());
    RunOptions o1, o2;
    o1.out = scratch("a");
    o2.out = scratch("b");
    const auto b1 = run(sc, o1);
    const auto b2 = run(sc, o2);
    CHECK(b1.failures.empty());
    CHECK(b1.manifest == b2.manifest);
    for (const auto& f : b1.manifest["files"]) {
        const std::string path = f["path"];
        CHECK_MESSAGE(slurp(o1.out / path) == slurp(o2.out / path), path);
        CHECK(hex(fnv1a(slurp(o1.out / path))) == f["fnv1a"]);
    }
    CHECK(b1.manifest["config_hash"] == hex(fnv1a(to_json(sc).dump())));
    CHECK(b1.manifest["versions"].contains("fftw"));
    const std::string id = b1.summary["points"][1]["id"];
    for (const char* f : {"trace.csv", "velocity.csv", "frames.csv", "fit_gap.json", "residuals_gap.csv",
                          "point.json", "analytic.csv"})
        CHECK_MESSAGE(fs::exists(o1.out / "points" / id / f), f);
    CHECK(fs::exists(o1.out / "bands" / "s9.4.csv"));

    const auto t = csv::read_file((o1.out / "summary.csv").string());
    REQUIRE(t.rows() == 2);
    CHECK(t.column("ok")[1] == 1.0);
    // gap frequency between the zone-edge and zone-centre gaps
    CHECK(t.column("omega_d_rad_s")[1] > t.column("gap_kr_rad_s")[1]);
    CHECK(t.column("omega_d_rad_s")[1] < t.column("gap_k0_rad_s")[1]);
    CHECK(std::isfinite(t.column("m_dyn")[1]));
    CHECK(t.column("sigma_m_dyn")[1] > 0.0);

    SUBCASE("seed changes the noisy frames only") {
        RunOptions o3;
        o3.out = scratch("c");
        o3.seed = 99;
        const auto b3 = run(sc, o3);
        CHECK(slurp(o1.out / "points" / id / "trace.csv") == slurp(o3.out / "points" / id / "trace.csv"));
        CHECK(slurp(o1.out / "points" / id / "frames.csv") != slurp(o3.out / "points" / id / "frames.csv"));
        CHECK(b3.manifest["seed"] == 99);
    }
    SUBCASE("a foreign directory is not overwritten") {
        const fs::path d = scratch("d");
        fs::create_directories(d / "points");
        RunOptions o;
        o.out = d;
        CHECK_THROWS_AS(run(sc, o), Error);
    }
    SUBCASE("analysis of the written trace") {
        const auto v = csv::read_file((o1.out / "points" / id / "velocity.csv").string());
        VelocityTrace tr;
        for (std::size_t i = 0; i < v.rows(); ++i) {
            tr.t.push_back(v.column("t_us")[i] * 1e-6);
            tr.v.push_back(v.column("v_analysis_mm_s")[i] * 1e-3);
        }
        const json res = analyze_trace(sc, tr, 9.4, 2.0);
        const json point = json::parse(slurp(o1.out / "points" / id / "point.json"));
        const double a = res["fits"]["gap"]["si"]["omega_d_rad_s"]["value"];
        const double b = point["fits"]["gap"]["si"]["omega_d_rad_s"]["value"];
        // csv round trip keeps 17 significant digits
        CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
}

TEST_CASE("propagation without analysis") {
    RunOptions o;
    o.out = scratch("e");
    o.analyze = false;
    json c = small();
    c.erase("sweep");
    const auto b = run(parse(c), o);
    const std::string id = b.summary["points"][0]["id"];
    CHECK(fs::exists(o.out / "points" / id / "trace.csv"));
    CHECK_FALSE(fs::exists(o.out / "points" / id / "fit_gap.json"));
    CHECK_FALSE(fs::exists(o.out / "points" / id / "frames.csv"));
}
