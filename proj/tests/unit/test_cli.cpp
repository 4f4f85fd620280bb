#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "nvform/cli/app.hpp"
#include "nvform/cli/config.hpp"

namespace fs = std::filesystem;
using nvform::cli::parse_config;
using nvform::cli::serialize;

namespace {

const fs::path source_dir = NVFORM_SOURCE_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run nvform_run(std::vector<std::string> args) {
    args.insert(args.begin(), "nvform");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = nvform::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("nvform_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("canonical config serialization is idempotent for every preset") {
    for (const auto& entry : fs::directory_iterator(source_dir / "presets")) {
        CAPTURE(entry.path().filename().string());
        const auto once = serialize(parse_config(slurp(entry.path())));
        const auto twice = serialize(parse_config(once));
        CHECK(once == twice);
    }
}

TEST_CASE("unknown keys are rejected with their line number") {
    const std::string text = "{\n  \"trials\": 3,\n  \"geometry\": {\"kind\": \"bulk\", \"slab_depth_cutoff_nm\": 2000},\n"
                             "  \"beam\": {\"dose_pC\": 1, \"spot_size\": 20}\n}\n";
    try {
        parse_config(text);
        FAIL("expected a ConfigError");
    } catch (const nvform::cli::ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("spot_size") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
    }
}

TEST_CASE("malformed values name the key") {
    CHECK_THROWS_AS(parse_config(R"({"trials": "many"})"), nvform::cli::ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trials": 0})"), nvform::cli::ConfigError);
    CHECK_THROWS_AS(parse_config("{\"trials\": 3,"), nvform::cli::ConfigError);
}

TEST_CASE("zero dose gives no NVs") {
    const auto out = scratch("zero");
    const auto r = nvform_run({"simulate", "--config", (source_dir / "presets/zero_dose.json").string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto summary = read_json(out / "summary.json");
    CHECK(summary["doses"][0]["mean_nv"].get<double>() == 0.0);
    CHECK(summary["doses"][0]["n_nv"].get<int>() == 0);
}

TEST_CASE("mean NV count rises with dose for the 480 nm pillar preset") {
    const auto out = scratch("ladder");
    const auto r = nvform_run({"simulate", "--config", (source_dir / "presets/fig2_480nm_D17.json").string(), "--trials", "4",
                               "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto doses = read_json(out / "summary.json")["doses"];
    REQUIRE(doses.size() == 3);
    for (std::size_t i = 1; i < doses.size(); ++i)
        CHECK(doses[i]["mean_nv"].get<double>() > doses[i - 1]["mean_nv"].get<double>());
}

TEST_CASE("reruns with the same seed are byte-identical and every output is in the manifest") {
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    const auto cfg = (source_dir / "presets/desk_480nm_D17.json").string();
    REQUIRE(nvform_run({"simulate", "--config", cfg, "--trials", "6", "--out", a.string()}).code == 0);
    REQUIRE(nvform_run({"simulate", "--config", cfg, "--trials", "6", "--out", b.string()}).code == 0);
    const auto manifest = read_json(a / "manifest.json");
    CHECK(manifest["master_seed"].get<std::uint64_t>() == 1480);
    std::size_t listed = 0;
    for (const auto& o : manifest["outputs"]) {
        const auto file = o["file"].get<std::string>();
        CAPTURE(file);
        CHECK(slurp(a / file) == slurp(b / file));
        CHECK(nvform::cli::sha256_hex(slurp(a / file)) == o["sha256"].get<std::string>());
        ++listed;
    }
    std::size_t on_disk = 0;
    for (const auto& e : fs::directory_iterator(a))
        if (e.path().filename() != "manifest.json") ++on_disk;
    CHECK(listed == on_disk);
}

TEST_CASE("a different seed changes the positions") {
    const auto a = scratch("seed_a"), b = scratch("seed_b");
    const auto cfg = (source_dir / "presets/desk_480nm_D17.json").string();
    REQUIRE(nvform_run({"simulate", "--config", cfg, "--trials", "6", "--out", a.string()}).code == 0);
    REQUIRE(nvform_run({"simulate", "--config", cfg, "--trials", "6", "--seed", "99", "--out", b.string()}).code == 0);
    CHECK(slurp(a / "nv_positions_d0_24pC.csv") != slurp(b / "nv_positions_d0_24pC.csv"));
}

TEST_CASE("mle-fit recovers the bundled lambda = 2 fixture") {
    const auto out = scratch("mle");
    const auto r = nvform_run({"mle-fit", (source_dir / "data/fixtures/orientation_histogram.csv").string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = read_json(out / "mle_fit.json");
    CHECK(j["ci95"][0].get<double>() <= 2.0);
    CHECK(j["ci95"][1].get<double>() >= 2.0);
}

TEST_CASE("mle-fit of an all-zero histogram gives lambda = 0") {
    const auto dir = scratch("mle_zero");
    fs::create_directories(dir);
    std::ofstream(dir / "h.csv") << "l,count\n0,121\n1,0\n2,0\n3,0\n4,0\n";
    REQUIRE(nvform_run({"mle-fit", (dir / "h.csv").string(), "--out", (dir / "out").string()}).code == 0);
    CHECK(read_json(dir / "out/mle_fit.json")["lambda_hat"].get<double>() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("missing input files are configuration errors") {
    const auto r = nvform_run({"mle-fit", "/nonexistent/histogram.csv", "--out", scratch("missing").string()});
    CHECK(r.code == nvform::cli::exit_config_error);
    CHECK(r.err.find("/nonexistent/histogram.csv") != std::string::npos);
    CHECK(nvform_run({"simulate", "--config", "/nonexistent.json"}).code == nvform::cli::exit_config_error);
    CHECK(nvform_run({"simulate"}).code == nvform::cli::exit_config_error);
    CHECK(nvform_run({"bogus"}).code == nvform::cli::exit_config_error);
    CHECK(nvform_run({"--help"}).code == 0);
}

TEST_CASE("localize --invert-D converts the jump count directly") {
    const auto out = scratch("invert");
    const auto r = nvform_run({"localize", "--invert-D", "--n-jumps", "2.098e4", "--cell-size-nm", "2", "--anneal-time-s", "660",
                               "--out", out.string()});
    REQUIRE(r.code == 0);
    const double d = read_json(out / "diffusion.json")["inversion"]["diffusion_constant_nm2_per_s"].get<double>();
    CHECK(d == doctest::Approx(21.2).epsilon(0.001));
}

TEST_CASE("localize recovers sigma_loc from the bundled mesa image") {
    const auto out = scratch("mesa");
    const auto fx = source_dir / "data/fixtures";
    const auto r = nvform_run({"localize", "--image", (fx / "mesa_image.txt").string(), "--targets",
                               (fx / "mesa_targets.csv").string(), "--tile-size-nm", "2000", "--psf-sigma-nm", "235",
                               "--sys-sigma-nm", "41", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = read_json(out / "variance_budget.json");
    CHECK(j["tiles_used"].get<int>() == 162);
    CHECK(j["sigma_loc_nm"].get<double>() == doctest::Approx(102.0).epsilon(0.05));
}

TEST_CASE("an image without peaks is a numeric failure") {
    const auto dir = scratch("flat");
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "flat.txt");
        os << "nvform-image 1\npitch_nm 100\norigin_nm 0 0\nshape 5 5\n";
        for (int r = 0; r < 5; ++r) os << "1 1 1 1 1\n";
    }
    const auto r = nvform_run({"localize", "--image", (dir / "flat.txt").string(), "--tile-size-nm", "300", "--psf-sigma-nm",
                               "235", "--out", (dir / "out").string()});
    CHECK(r.code == nvform::cli::exit_numeric_failure);
}

TEST_CASE("point distributions give a single-bin histogram") {
    const auto out = scratch("point");
    REQUIRE(nvform_run({"sensitivity", "--config", (source_dir / "presets/sensitivity_point.json").string(), "--out",
                        out.string()})
                .code == 0);
    std::istringstream hist(slurp(out / "eta_histogram.csv"));
    std::string line;
    int rows = 0;
    std::getline(hist, line);
    while (std::getline(hist, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1);
    CHECK(read_json(out / "yield.json")["yield_fraction"].get<double>() == 1.0);
}

TEST_CASE("effmap reports the uniform limit at a quarter of the diameter") {
    const auto out = scratch("effmap");
    const auto r = nvform_run({"effmap", "--map", (source_dir / "data/fixtures/efficiency_map_480nm.csv").string(),
                               "--diameter-nm", "480", "--points", "5", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = read_json(out / "effmap.json");
    CHECK(j["uniform"]["sigma_loc_pillar_nm"].get<double>() == doctest::Approx(120.0).epsilon(0.005));
}

TEST_CASE("localize --invert-D inverts a simulated sigma_loc curve from a config") {
    const auto dir = scratch("curve");
    fs::create_directories(dir);
    std::ofstream(dir / "bulk.json") << R"({"scenario": "curve", "trials": 6, "master_seed": 3,
  "geometry": {"kind": "bulk", "slab_depth_cutoff_nm": 2000},
  "nitrogen": {"density_scale": 30, "window_half_width_nm": 300},
  "beam": {"dose_pC": 40},
  "lattice": {"cell_size_nm": 2, "anneal_time_s": 660, "diffusion_constant_nm2_per_s": 21}})";
    const auto r = nvform_run({"localize", "--config", (dir / "bulk.json").string(), "--invert-D", "--sigma-loc-nm", "40",
                               "--n-min", "500", "--n-max", "5000", "--grid-points", "3", "--out", (dir / "out").string()});
    REQUIRE(r.code == 0);
    const auto inv = read_json(dir / "out/diffusion.json")["inversion"];
    const double n = inv["n_jumps"].get<double>();
    CHECK(n > 500.0);
    CHECK(n < 5000.0);
    CHECK(inv["diffusion_constant_nm2_per_s"].get<double>() == doctest::Approx(4.0 * n / (6.0 * 660.0)));
    CHECK(fs::exists(dir / "out/sigma_curve.csv"));
}
