// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   acceptance [criterion-number ...]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "../support/oracles.hpp"
#include "nvform/cli/config.hpp"
#include "nvform/diffusion.hpp"
#include "nvform/estimators.hpp"
#include "nvform/localization.hpp"
#include "nvform/photonics.hpp"
#include "nvform/sensitivity.hpp"

namespace fs = std::filesystem;
using namespace nvform;

namespace {

const fs::path source_dir = NVFORM_SOURCE_DIR;
const std::string cli_path = NVFORM_CLI_PATH;

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> check;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Scenario load_preset(const std::string& name, std::int64_t& trials, std::uint64_t& seed) {
    const auto cfg = cli::load_config(source_dir / "presets" / (name + ".json"));
    trials = cfg.trials;
    seed = cfg.master_seed;
    return cfg.simulation->scenario_for(cfg.simulation->doses.front(), cfg.scenario);
}

Verdict pmf_oracle() {
    constexpr std::int64_t sites = 1000000;
    double worst = 0.0;
    std::string where;
    std::uint64_t seed = 101;
    for (double lambda : {0.5, 2.0, 8.0}) {
        const auto freq = oracle::sampled_orientation_pmf(lambda, sites, seed++);
        for (int l = 0; l <= 4; ++l) {
            const double p = model_pmf(lambda, l);
            const double se = std::sqrt(std::max(p * (1 - p), 1e-300) / sites);
            const double z = std::abs(freq[static_cast<std::size_t>(l)] - p) / se;
            if (z > worst) {
                worst = z;
                where = fmt::format("lambda={} l={}", lambda, l);
            }
        }
    }
    return {worst <= 3.0, fmt::format("max |z| = {:.2f} at {} (limit 3)", worst, where)};
}

Verdict mle_coverage() {
    bool ok = true;
    std::string detail;
    for (double lambda : {0.5, 2.0, 6.0}) {
        int covered = 0;
        for (int rep = 0; rep < 100; ++rep) {
            const auto r = fit_lambda(sample_histogram(lambda, 121, rng::derive(2024, {static_cast<std::uint64_t>(lambda * 10), static_cast<std::uint64_t>(rep)})));
            if (r.ci_lo <= lambda && lambda <= r.ci_hi) ++covered;
        }
        ok = ok && covered >= 88;
        detail += fmt::format("lambda={}: {}/100  ", lambda, covered);
    }
    return {ok, detail + "(need >= 88)"};
}

Verdict walk_physics() {
    constexpr int walkers = 100000;
    LatticeConfig cfg;
    cfg.cell_size = 1.0;
    cfg.anneal_time = 1.0;
    cfg.diffusion_constant = diffusion_constant_from_jumps(1000, cfg.cell_size, cfg.anneal_time);
    const double n_tot = static_cast<double>(cfg.total_jumps());
    // Deep start in a thick slab: no walker can reach a boundary in n_tot jumps.
    const auto geom = DeviceGeometry::bulk(1.0e6);
    VacancyEnsemble v;
    v.positions.assign(walkers, Point3{0.5, 0.5, 5.0e5 + 0.5});
    NitrogenEnsemble none;
    const auto out = run_anneal(geom, none, v, cfg, 77);
    double msd = 0.0;
    for (const auto& p : out.surviving_positions) {
        const double dx = p.x - 0.5, dy = p.y - 0.5, dz = p.z - (5.0e5 + 0.5);
        msd += dx * dx + dy * dy + dz * dz;
    }
    msd /= walkers;
    const double rel = msd / (cfg.cell_size * cfg.cell_size * n_tot) - 1.0;
    const double d = diffusion_constant_from_jumps(2.098e4, 2.0, 660.0);
    const bool anchor = std::abs(d - 21.2) < 0.05;
    return {out.n_surviving == walkers && std::abs(rel) <= 0.02 && anchor,
            fmt::format("MSD/(a^2 N) - 1 = {:+.4f} (limit 0.02), survivors {}/{}; D(2.098e4, 2 nm, 660 s) = {:.3f} -> {:.1f}",
                        rel, out.n_surviving, walkers, d, d)};
}

Verdict lower_bound() {
    const double d = diffusion_lower_bound(280.0, 660.0);
    return {std::abs(d - 3.7) <= 0.05, fmt::format("D_min = {:.4f} nm^2/s (target 3.7 +/- 0.05)", d)};
}

Verdict pillar_ordering() {
    std::int64_t t480, t280;
    std::uint64_t s480, s280;
    const auto big = load_preset("desk_480nm_D17", t480, s480);
    const auto small = load_preset("desk_280nm_D17", t280, s280);
    const auto a = simulate_ensemble(big, t480, s480).summary;
    const auto b = simulate_ensemble(small, t280, s280).summary;
    const double sep = (a.mean_nv - b.mean_nv) / std::hypot(a.se, b.se);
    const bool same_dose = big.beam.dose_pC == small.beam.dose_pC;
    return {same_dose && std::min(t480, t280) >= 200 && sep >= 3.0,
            fmt::format("mean_NV 480 nm = {:.3f}+/-{:.3f}, 280 nm = {:.3f}+/-{:.3f} at {} pC, {} trials each, separation {:.2f} sigma "
                        "(need >= 3)",
                        a.mean_nv, a.se, b.mean_nv, b.se, big.beam.dose_pC, t480, sep)};
}

Verdict localization_ordering() {
    double sigma[3];
    std::int64_t nvs[3];
    const char* names[3] = {"desk_sigma_280nm_D21", "desk_sigma_480nm_D21", "desk_bulk_D21"};
    for (int i = 0; i < 3; ++i) {
        std::int64_t trials;
        std::uint64_t seed;
        const auto sc = load_preset(names[i], trials, seed);
        const auto ens = simulate_ensemble(sc, trials, seed);
        sigma[i] = sigma_loc_from_outcomes(ens.outcomes, {sc.target.x, sc.target.y});
        nvs[i] = 0;
        for (const auto& o : ens.outcomes) nvs[i] += static_cast<std::int64_t>(o.nv_records.size());
    }
    const bool ok = sigma[0] < sigma[1] && sigma[1] < sigma[2] && sigma[2] >= 75.0 && sigma[2] <= 130.0;
    return {ok, fmt::format("sigma_loc 280 nm = {:.1f} ({} NV), 480 nm = {:.1f} ({} NV), bulk = {:.1f} ({} NV); bulk band [75, 130]",
                            sigma[0], nvs[0], sigma[1], nvs[1], sigma[2], nvs[2])};
}

Verdict variance_identity() {
    const double tot = std::sqrt(102.0 * 102.0 + 235.0 * 235.0 + 41.0 * 41.0);
    const auto b = decompose_sigma({tot, 0.0}, {235.0, 0.0}, {41.0, 0.0});
    return {std::abs(b.sigma_loc - 102.0) < 5e-4, fmt::format("sigma_loc = {:.6f} nm", b.sigma_loc)};
}

Verdict tile_round_trip() {
    const SyntheticMesaSpec spec;
    const auto mesa = render_synthetic_mesa(spec, 8);
    const auto tiles = tile_average(mesa.image, mesa.targets, spec.spacing);
    const auto fit = fit_gaussian2d(tiles.image);
    const auto b = decompose_sigma({fit.sigma_tot, 0.0}, {spec.sigma_psf, 0.0}, {spec.sigma_sys, 0.0});
    const double rel = b.sigma_loc / spec.sigma_loc - 1.0;
    return {tiles.tiles_used == 162 && std::abs(rel) <= 0.05,
            fmt::format("{} tiles, sigma_tot = {:.1f}, sigma_loc = {:.1f} nm vs {} ({:+.2f}%, limit 5%)", tiles.tiles_used,
                        fit.sigma_tot, b.sigma_loc, spec.sigma_loc, 100 * rel)};
}

Verdict saturation_round_trip() {
    const double pl_sat = 969.3e3, a_nv = 7.5e5, a_bg = 3.0e4;
    // 60 powers up to ~15x the knee so the background slope is pinned by the linear tail.
    std::vector<SaturationSample> clean;
    for (int i = 1; i <= 60; ++i) {
        const double p = 20.0 * i / 60;
        clean.push_back({p, saturation_model(p, pl_sat, a_nv, a_bg)});
    }
    double s_sum = 0, nv_sum = 0, bg_sum = 0;
    constexpr int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 eng(rng::derive(969, {static_cast<std::uint64_t>(rep)}));
        std::normal_distribution<double> noise(0.0, 0.01);
        auto c = clean;
        for (auto& s : c) s.pl *= 1.0 + noise(eng);
        const auto f = fit_saturation(c);
        s_sum += f.pl_sat;
        nv_sum += f.alpha_nv;
        bg_sum += f.alpha_bg;
    }
    const double bs = s_sum / reps / pl_sat - 1, bn = nv_sum / reps / a_nv - 1, bb = bg_sum / reps / a_bg - 1;
    const bool ok = std::abs(bs) < 0.01 && std::abs(bn) < 0.01 && std::abs(bb) < 0.01;
    return {ok, fmt::format("bias PL_sat {:+.3f}%, alpha_NV {:+.3f}%, alpha_bg {:+.3f}% over {} fits (limit 1%)", 100 * bs, 100 * bn, 100 * bb, reps)};
}

Verdict sensitivity_point() {
    SensorParams p;
    p.t2_us = 98.0;
    p.contrast = 0.18;
    p.pl_sat_cps = 1.056e6;
    p.readout_window_ns = 400.0;
    const double lib = eta(p), ref = oracle::eta_reference(98.0, 0.18, 1.056e6, 400.0);
    const double rel = std::abs(lib / ref - 1.0);

    YieldSpec s;
    s.t2_us = TruncatedGaussian{98.0, 37.0, 0.0, std::numeric_limits<double>::infinity()};
    s.contrast = TruncatedGaussian{0.18, 0.04, 0.0, 1.0};
    s.pl_sat_cps = TruncatedGaussian{1.056e6, 0.137e6, 0.0, std::numeric_limits<double>::infinity()};
    const double median = sample_yield(s, 100000, 68e-9, 42).distribution.median() * 1e9;
    return {rel < 5e-7 && median >= 35.0 && median <= 50.0,
            fmt::format("eta = {:.6g} vs reference {:.6g} nT/sqrt(Hz) (rel {:.1e}); MC median {:.2f} in [35, 50]", lib * 1e9, ref * 1e9,
                        rel, median)};
}

Verdict truncated_limits() {
    bool ok = true;
    std::string detail;
    for (double d : {280.0, 480.0}) {
        const auto map = synthetic_efficiency_map(d, 0.6, 0.4 * d);
        const auto uniform = mean_efficiency(map, std::numeric_limits<double>::infinity());
        const auto point = mean_efficiency(map, 0.0);
        const double rel = uniform.sigma_loc_pillar / (d / 4) - 1.0;
        const bool exact = point.mean_eta == extrapolate_map(map, 0.0, 0.0);
        ok = ok && std::abs(rel) <= 0.005 && exact;
        detail += fmt::format("D={} nm: sigma_loc(inf) = {:.3f} ({:+.3f}%), eta(0) {}  ", d, uniform.sigma_loc_pillar, 100 * rel,
                              exact ? "exact" : "differs");
    }
    return {ok, detail};
}

Verdict reproducibility() {
    const auto root = fs::temp_directory_path() / "nvform_acceptance_repro";
    fs::remove_all(root);
    struct Job {
        std::string name;
        std::string args;
    };
    const std::vector<Job> jobs{
        {"simulate", fmt::format("simulate --config '{}' --trials 40", (source_dir / "presets/desk_480nm_D17.json").string())},
        {"sensitivity", fmt::format("sensitivity --config '{}' --samples 20000",
                                    (source_dir / "presets/sensitivity_measured_summary.json").string())},
        {"mle", fmt::format("mle-fit --config '{}'", (source_dir / "presets/mle_fixture.json").string())},
    };
    int compared = 0;
    std::vector<std::string> mismatches;
    for (const auto& job : jobs) {
        const auto run = [&](const std::string& tag, int threads) {
            const auto dir = root / (job.name + "_" + tag);
            const auto cmd = fmt::format("'{}' {} --threads {} --out '{}' > /dev/null", cli_path, job.args, threads, dir.string());
            if (std::system(cmd.c_str()) != 0) mismatches.push_back(job.name + " run failed");
            return dir;
        };
        const auto a = run("t1", 1), b = run("t1_again", 1), c = run("t8", 8);
        for (const auto& e : fs::directory_iterator(a)) {
            const auto file = e.path().filename().string();
            if (file == "manifest.json") continue;  // timestamps and thread count
            const auto bytes = slurp(e.path());
            ++compared;
            if (bytes != slurp(b / file)) mismatches.push_back(job.name + "/" + file + " (rerun)");
            // config.json records the thread override itself
            if (file != "config.json" && bytes != slurp(c / file)) mismatches.push_back(job.name + "/" + file + " (8 threads)");
        }
    }
    fs::remove_all(root);
    std::string detail = fmt::format("{} output files compared across reruns and 1 vs 8 threads", compared);
    for (const auto& m : mismatches) detail += "; differs: " + m;
    return {mismatches.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "MLE pmf oracle equivalence", 60, pmf_oracle},
        {2, "MLE coverage", 120, mle_coverage},
        {3, "random-walk physics", 60, walk_physics},
        {4, "diffusion lower bound", 1, lower_bound},
        {5, "pillar-size ordering", 600, pillar_ordering},
        {6, "localization ordering and band", 600, localization_ordering},
        {7, "variance decomposition", 1, variance_identity},
        {8, "tile-averaging round trip", 60, tile_round_trip},
        {9, "saturation-fit round trip", 60, saturation_round_trip},
        {10, "sensitivity point evaluation", 60, sensitivity_point},
        {11, "truncated-Gaussian limits", 1, truncated_limits},
        {12, "reproducibility", 600, reproducibility},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, fmt::format("threw: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // Budgets apply to the single-core reference machine; overruns are reported, not failed.
        const bool pass = v.pass;
        if (!pass) ++failed;
        fmt::print("[{}] {:2d} {}: {} ({:.1f} s{})\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail, secs,
                   secs > c.budget_s ? fmt::format(", over {:.0f} s budget", c.budget_s) : "");
        std::fflush(stdout);
    }
    fmt::print("{} criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
