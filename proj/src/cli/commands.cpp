#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nvform/cli/app.hpp"
#include "nvform/cli/config.hpp"
#include "nvform/csv.hpp"
#include "nvform/estimators.hpp"
#include "nvform/localization.hpp"
#include "nvform/photonics.hpp"
#include "nvform/rng.hpp"
#include "nvform/sensitivity.hpp"
#include "output.hpp"

#ifndef NVFORM_VERSION
#define NVFORM_VERSION "0.0.0"
#endif

namespace nvform::cli {

using ojson = nlohmann::ordered_json;

namespace {

std::ifstream open_input(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw InvalidInput(fmt::format("cannot open {} '{}'", what, path));
    return in;
}

CsvTable read_csv_file(const std::string& path, const char* what) {
    auto in = open_input(path, what);
    try {
        return read_csv(in);
    } catch (const InvalidInput& e) {
        throw InvalidInput(fmt::format("{} '{}': {}", what, path, e.what()));
    }
}

RunConfig load_with_overrides(const CommonOptions& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    auto cfg = load_config(o.config);
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.trials) {
        if (*o.trials < 1) throw ConfigError("--trials must be >= 1");
        cfg.trials = *o.trials;
    }
    if (o.threads) cfg.threads = *o.threads;
    return cfg;
}

std::string output_dir(const CommonOptions& o, const std::optional<std::string>& from_config = std::nullopt) {
    if (!o.out.empty()) return o.out;
    return from_config.value_or("nvform_out");
}

ojson manifest_header(const char* command, const std::string& config_hash, std::uint64_t seed, unsigned threads,
                      const std::string& started) {
    return ojson{{"tool", "nvform"},     {"version", NVFORM_VERSION}, {"command", command},
                 {"config_sha256", config_hash}, {"master_seed", seed},   {"threads", threads},
                 {"started_utc", started}, {"finished_utc", utc_now()}};
}

// Hash of an options object for commands driven by flags rather than a config file.
std::string options_hash(const ojson& options) { return sha256_hex(options.dump()); }

std::string number_or_inf(double v) { return std::isinf(v) ? std::string("inf") : fmt::format("{:.6f}", v); }

OrientationHistogram read_histogram_csv(const std::string& path) {
    const auto t = read_csv_file(path, "histogram file");
    const auto cl = t.column("l"), cc = t.column("count");
    OrientationHistogram h;
    std::array<bool, 5> seen{};
    for (const auto& row : t.rows) {
        const double l = row[cl], c = row[cc];
        if (l < 0 || l > 4 || std::floor(l) != l) throw InvalidInput(fmt::format("histogram '{}': l = {} outside 0..4", path, l));
        if (c < 0 || std::floor(c) != c) throw InvalidInput(fmt::format("histogram '{}': count {} is not a non-negative integer", path, c));
        const auto li = static_cast<std::size_t>(l);
        if (seen[li]) throw InvalidInput(fmt::format("histogram '{}': l = {} listed twice", path, li));
        seen[li] = true;
        h.counts[li] = static_cast<std::int64_t>(c);
    }
    return h;
}

ojson mle_json(const OrientationHistogram& h, const MleResult& r) {
    ojson j{{"histogram", h.counts},
            {"n_sites", h.n_sites()},
            {"lambda_hat", r.lambda_hat},
            {"ci95", {r.ci_lo, r.ci_hi}},
            {"log_likelihood", r.log_likelihood},
            {"one_sided", r.one_sided},
            {"at_identifiability_ceiling", r.at_identifiability_ceiling}};
    if (r.systematic_sigma) j["systematic_sigma"] = *r.systematic_sigma;
    const double s = ci_to_sigma(r), sys = r.systematic_sigma.value_or(0.0);
    j["sigma_total"] = std::sqrt(s * s + sys * sys);
    return j;
}

}  // namespace

int cmd_simulate(const CommonOptions& o, std::ostream& log) {
    const auto started = utc_now();
    const auto cfg = load_with_overrides(o);
    if (!cfg.simulation) throw ConfigError("simulate needs geometry, layers, beam and lattice sections in the config");
    const auto& sim = *cfg.simulation;
    const auto canonical = serialize(cfg);
    OutputSet out(output_dir(o, cfg.output_dir));
    out.write("config.json", canonical);

    ojson summary{{"scenario", cfg.scenario},
                  {"master_seed", cfg.master_seed},
                  {"trials", cfg.trials},
                  {"n_jumps_total", sim.lattice.total_jumps()},
                  {"capture_probability", capture_probability(sim.lattice)}};
    ojson doses = ojson::array();
    for (std::size_t d = 0; d < sim.doses.size(); ++d) {
        const double dose = sim.doses[d];
        const auto scenario = sim.scenario_for(dose, cfg.scenario);
        const auto dose_seed = rng::derive(cfg.master_seed, {rng::stream::dose, d});
        const auto ens = simulate_ensemble(scenario, cfg.trials, dose_seed, cfg.threads);

        std::ostringstream csv;
        csv << "trial_id,nv_x,nv_y,nv_z,orientation,capture_step\n";
        std::int64_t n_nv = 0, n_vac = 0, n_abs = 0, n_surv = 0;
        for (std::size_t t = 0; t < ens.outcomes.size(); ++t) {
            const auto& oc = ens.outcomes[t];
            for (const auto& nv : oc.nv_records)
                fmt::print(csv, "{},{:.6f},{:.6f},{:.6f},{},{}\n", t, nv.position.x, nv.position.y, nv.position.z,
                           nv.orientation, nv.capture_step);
            n_nv += static_cast<std::int64_t>(oc.nv_records.size());
            n_vac += oc.n_initial_vacancies;
            n_abs += oc.n_absorbed_boundary;
            n_surv += oc.n_surviving;
        }
        const auto file = fmt::format("nv_positions_d{}_{:g}pC.csv", d, dose);
        out.write(file, csv.str());

        ojson entry{{"dose_pC", dose},
                    {"dose_e_per_cm2", units::dose_pC_to_e_per_cm2(dose)},
                    {"mean_nv", ens.summary.mean_nv},
                    {"se", ens.summary.se},
                    {"n_trials", ens.summary.n_trials},
                    {"n_nv", n_nv},
                    {"vacancies_initial", n_vac},
                    {"vacancies_absorbed", n_abs},
                    {"vacancies_surviving", n_surv},
                    {"positions_file", file}};
        if (n_nv >= 2) entry["sigma_loc_nm"] = sigma_loc_from_outcomes(ens.outcomes, {sim.target_x, sim.target_y});
        else entry["sigma_loc_nm"] = nullptr;

        if (sim.export_vacancies) {
            std::ostringstream vcsv;
            vcsv << "trial_id,x_nm,y_nm,z_nm\n";
            for (std::int64_t t = 0; t < cfg.trials; ++t) {
                const auto ts = trial_seed(dose_seed, static_cast<std::uint64_t>(t));
                const auto v = generate_vacancies(scenario.beam, scenario.geometry, scenario.target,
                                                  rng::derive(ts, {rng::stream::vacancies}));
                for (const auto& p : v.positions) fmt::print(vcsv, "{},{:.6f},{:.6f},{:.6f}\n", t, p.x, p.y, p.z);
            }
            const auto vfile = fmt::format("vacancies_d{}_{:g}pC.csv", d, dose);
            out.write(vfile, vcsv.str());
            entry["vacancies_file"] = vfile;
        }
        fmt::print(log, "dose {:g} pC: mean NV {:.4f} +/- {:.4f} over {} trials\n", dose, ens.summary.mean_nv,
                   ens.summary.se, ens.summary.n_trials);
        doses.push_back(entry);
    }
    summary["doses"] = doses;
    out.write("summary.json", summary.dump(2) + "\n");
    out.write_manifest(manifest_header("simulate", sha256_hex(canonical), cfg.master_seed, cfg.threads, started));
    return exit_ok;
}

int cmd_mle_fit(const MleOptions& o, std::ostream& log) {
    const auto started = utc_now();
    std::optional<RunConfig> cfg;
    if (!o.common.config.empty()) cfg = load_with_overrides(o.common);
    const std::uint64_t seed = o.common.seed.value_or(cfg ? cfg->master_seed : 1);
    const unsigned threads = o.common.threads.value_or(cfg ? cfg->threads : 1);

    OrientationHistogram hist, control;
    bool have_control = false;
    if (!o.histogram.empty()) {
        hist = read_histogram_csv(o.histogram);
    } else if (cfg && cfg->mle) {
        hist.counts = cfg->mle->histogram;
    } else {
        throw ConfigError("mle-fit needs a histogram CSV or a config with an mle section");
    }
    if (!o.control.empty()) {
        control = read_histogram_csv(o.control);
        have_control = true;
    } else if (cfg && cfg->mle && cfg->mle->control) {
        control.counts = *cfg->mle->control;
        have_control = true;
    }
    const int sets = o.systematic_sets.value_or(cfg && cfg->mle ? cfg->mle->systematic_sets : 0);
    if (sets < 0) throw ConfigError("--systematic-sets must be >= 0");

    auto fit = [&](const OrientationHistogram& h, std::uint64_t stream) {
        auto r = fit_lambda(h);
        if (sets > 0)
            r.systematic_sigma =
                systematic_uncertainty(r.lambda_hat, sets, static_cast<int>(h.n_sites()), rng::derive(seed, {stream}), threads)
                    .rms_error;
        return r;
    };
    const auto main = fit(hist, 0);
    ojson result = mle_json(hist, main);
    if (have_control) {
        const auto ctl = fit(control, 1);
        const auto net = subtract_control(main, ctl);
        result["control"] = mle_json(control, ctl);
        result["net"] = {{"lambda", net.lambda}, {"sigma", net.sigma}};
    }
    fmt::print(log, "lambda = {:.4f}, 95% CI [{:.4f}, {:.4f}]\n", main.lambda_hat, main.ci_lo, main.ci_hi);

    const ojson options{{"histogram", hist.counts},
                        {"control", have_control ? ojson(control.counts) : ojson(nullptr)},
                        {"systematic_sets", sets},
                        {"seed", seed}};
    OutputSet out(output_dir(o.common, cfg ? cfg->output_dir : std::nullopt));
    out.write("mle_fit.json", result.dump(2) + "\n");
    out.write_manifest(manifest_header("mle-fit", options_hash(options), seed, threads, started));
    return exit_ok;
}

int cmd_localize(const LocalizeOptions& o, std::ostream& log) {
    const auto started = utc_now();
    if (o.image.empty() && o.positions.empty() && !o.invert_d && !o.pillar_diameter_nm)
        throw ConfigError("localize needs --image, --positions, --invert-D or --pillar-diameter-nm");
    std::optional<RunConfig> cfg;
    if (!o.common.config.empty()) cfg = load_with_overrides(o.common);
    const std::uint64_t seed = o.common.seed.value_or(cfg ? cfg->master_seed : 1);
    const unsigned threads = o.common.threads.value_or(cfg ? cfg->threads : 1);

    OutputSet out(output_dir(o.common, cfg ? cfg->output_dir : std::nullopt));
    ojson options{{"seed", seed}};
    std::optional<double> measured_sigma_loc = o.sigma_loc_nm;

    if (!o.image.empty()) {
        auto in = open_input(o.image, "image file");
        const auto image = read_image(in);
        options["image_sha256"] = file_sha256(o.image);
        if (!o.tile_size_nm) throw ConfigError("--tile-size-nm is required with --image");
        if (!o.psf_sigma_nm) throw ConfigError("--psf-sigma-nm is required with --image");

        std::vector<Point2> targets;
        if (!o.targets.empty()) {
            const auto t = read_csv_file(o.targets, "targets file");
            const auto cx = t.column("x_nm"), cy = t.column("y_nm");
            for (const auto& row : t.rows) targets.push_back({row[cx], row[cy]});
            options["targets_sha256"] = file_sha256(o.targets);
        } else {
            const auto [mn, mx] = std::minmax_element(image.values.begin(), image.values.end());
            const double threshold = *mn + o.peak_fraction * (*mx - *mn);
            const int window = std::max(1, static_cast<int>(std::lround(0.5 * *o.tile_size_nm / image.pitch)));
            if (*mx > *mn) targets = detect_peaks(image, threshold, window);
        }
        if (targets.empty()) throw NumericError("no peaks found in the image to average");

        Measured sys{o.sys_sigma_nm.value_or(0.0), o.sys_sigma_err_nm};
        std::optional<AffineFit> affine;
        if (!o.calibration.empty()) {
            const auto t = read_csv_file(o.calibration, "calibration file");
            const auto dx = t.column("detected_x_nm"), dy = t.column("detected_y_nm");
            const auto gx = t.column("design_x_nm"), gy = t.column("design_y_nm");
            std::vector<Point2> detected, design;
            for (const auto& row : t.rows) {
                detected.push_back({row[dx], row[dy]});
                design.push_back({row[gx], row[gy]});
            }
            affine = fit_affine(detected, design);
            if (!o.sys_sigma_nm) sys.value = affine->rmse / std::sqrt(2.0);
            options["calibration_sha256"] = file_sha256(o.calibration);
        }

        const auto tiles = tile_average(image, targets, *o.tile_size_nm);
        const auto fit = fit_gaussian2d(tiles.image);
        const auto budget =
            decompose_sigma({fit.sigma_tot, fit.sigma_tot_error()}, {*o.psf_sigma_nm, o.psf_sigma_err_nm}, sys);
        measured_sigma_loc = measured_sigma_loc.value_or(budget.sigma_loc);

        ojson j{{"tiles_used", tiles.tiles_used},
                {"tiles_skipped", tiles.tiles_skipped},
                {"fit",
                 {{"amplitude", fit.amplitude},
                  {"x0_nm", fit.x0},
                  {"y0_nm", fit.y0},
                  {"sigma_tot_nm", fit.sigma_tot},
                  {"sigma_tot_err_nm", fit.sigma_tot_error()},
                  {"offset", fit.offset}}},
                {"sigma_tot_nm", budget.sigma_tot},
                {"sigma_psf_nm", budget.sigma_psf},
                {"sigma_sys_nm", budget.sigma_sys},
                {"sigma_loc_nm", budget.sigma_loc},
                {"sigma_loc_err_nm", budget.sigma_loc_uncertainty}};
        if (affine) j["registration_rmse_nm"] = affine->rmse;
        out.write("variance_budget.json", j.dump(2) + "\n");

        std::ostringstream prof, tile;
        write_radial_profile_csv(prof, radial_profile(tiles.image, {fit.x0, fit.y0}, o.bin_width_nm.value_or(image.pitch)));
        out.write("radial_profile.csv", prof.str());
        write_image(tile, tiles.image);
        out.write("tile_average.txt", tile.str());
        fmt::print(log, "sigma_tot {:.2f} nm -> sigma_loc {:.2f} +/- {:.2f} nm from {} tiles\n", budget.sigma_tot,
                   budget.sigma_loc, budget.sigma_loc_uncertainty, tiles.tiles_used);
    }

    if (!o.positions.empty()) {
        const auto t = read_csv_file(o.positions, "positions file");
        const auto cx = t.column("nv_x"), cy = t.column("nv_y");
        std::vector<Point2> pts;
        for (const auto& row : t.rows) pts.push_back({row[cx], row[cy]});
        const double s = sigma_loc_from_positions(pts, {o.target_x_nm, o.target_y_nm});
        measured_sigma_loc = measured_sigma_loc.value_or(s);
        options["positions_sha256"] = file_sha256(o.positions);
        out.write("positions_sigma.json",
                  ojson{{"n_nv", pts.size()}, {"target_nm", {o.target_x_nm, o.target_y_nm}}, {"sigma_loc_nm", s}}.dump(2) +
                      "\n");
        fmt::print(log, "sigma_loc {:.2f} nm from {} positions\n", s, pts.size());
    }

    ojson diffusion;
    if (o.pillar_diameter_nm) {
        const double t = o.anneal_time_s.value_or(660.0);
        diffusion["lower_bound"] = {{"pillar_diameter_nm", *o.pillar_diameter_nm},
                                    {"anneal_time_s", t},
                                    {"diffusion_constant_nm2_per_s", diffusion_lower_bound(*o.pillar_diameter_nm, t)}};
    }
    if (o.invert_d) {
        if (o.n_jumps) {
            if (!o.cell_size_nm || !o.anneal_time_s)
                throw ConfigError("--invert-D with --n-jumps needs --cell-size-nm and --anneal-time-s");
            const double d = diffusion_constant_from_jumps(*o.n_jumps, *o.cell_size_nm, *o.anneal_time_s);
            diffusion["inversion"] = {{"method", "direct"},
                                      {"n_jumps", *o.n_jumps},
                                      {"cell_size_nm", *o.cell_size_nm},
                                      {"anneal_time_s", *o.anneal_time_s},
                                      {"diffusion_constant_nm2_per_s", d}};
            fmt::print(log, "D = {:.3f} nm^2/s\n", d);
        } else {
            if (!cfg || !cfg->simulation) throw ConfigError("--invert-D without --n-jumps needs --config with a scenario");
            if (!measured_sigma_loc) throw ConfigError("--invert-D needs --sigma-loc-nm, --image or --positions");
            auto sim = *cfg->simulation;
            if (o.cell_size_nm) sim.lattice.cell_size = *o.cell_size_nm;
            if (o.anneal_time_s) sim.lattice.anneal_time = *o.anneal_time_s;
            InversionOptions io;
            io.n_jumps_min = o.n_min;
            io.n_jumps_max = o.n_max;
            io.grid_points = o.grid_points;
            io.trials_per_point = cfg->trials;
            io.fit_decades = o.fit_decades;
            io.seed = seed;
            io.threads = threads;
            const auto inv = invert_diffusion_constant(*measured_sigma_loc, sim.scenario_for(sim.doses.front(), cfg->scenario), io);
            std::ostringstream curve;
            curve << "n_jumps,sigma_loc_nm,n_nv\n";
            for (const auto& p : inv.curve) fmt::print(curve, "{:.6g},{:.6f},{}\n", p.n_jumps, p.sigma_loc, p.n_nv);
            out.write("sigma_curve.csv", curve.str());
            diffusion["inversion"] = {{"method", "simulated_curve"},
                                      {"sigma_loc_target_nm", *measured_sigma_loc},
                                      {"n_jumps", inv.n_jumps},
                                      {"cell_size_nm", sim.lattice.cell_size},
                                      {"anneal_time_s", sim.lattice.anneal_time},
                                      {"diffusion_constant_nm2_per_s", inv.diffusion_constant},
                                      {"power_law", {{"exponent", inv.fit.exponent},
                                                     {"log_prefactor", inv.fit.log_prefactor},
                                                     {"r_squared", inv.fit.r_squared}}}};
            options["config_sha256"] = sha256_hex(serialize(*cfg));
            fmt::print(log, "N_jumps = {:.4g}, D = {:.3f} nm^2/s\n", inv.n_jumps, inv.diffusion_constant);
        }
    }
    if (!diffusion.empty()) out.write("diffusion.json", diffusion.dump(2) + "\n");

    options["flags"] = {{"tile_size_nm", o.tile_size_nm ? ojson(*o.tile_size_nm) : ojson(nullptr)},
                        {"psf_sigma_nm", o.psf_sigma_nm ? ojson(*o.psf_sigma_nm) : ojson(nullptr)},
                        {"sys_sigma_nm", o.sys_sigma_nm ? ojson(*o.sys_sigma_nm) : ojson(nullptr)},
                        {"n_jumps", o.n_jumps ? ojson(*o.n_jumps) : ojson(nullptr)},
                        {"invert_d", o.invert_d}};
    out.write_manifest(manifest_header("localize", options_hash(options), seed, threads, started));
    return exit_ok;
}

int cmd_sensitivity(const SensitivityOptions& o, std::ostream& log) {
    const auto started = utc_now();
    auto cfg = load_with_overrides(o.common);
    if (!cfg.sensitivity) throw ConfigError("sensitivity needs a 'sensitivity' section in the config");
    if (o.samples) {
        if (*o.samples < 1) throw ConfigError("--samples must be >= 1");
        cfg.sensitivity->samples = *o.samples;
    }
    const auto& sc = *cfg.sensitivity;
    const auto spec = sc.yield_spec(cfg.base_dir);
    const double threshold = sc.threshold_nT_per_sqrtHz * 1e-9;
    const auto r = sample_yield(spec, sc.samples, threshold, cfg.master_seed, cfg.threads);
    const auto& d = r.distribution;

    OutputSet out(output_dir(o.common, cfg.output_dir));
    const auto canonical = serialize(cfg);
    out.write("config.json", canonical);
    std::ostringstream hist, cdf;
    write_histogram_csv(hist, d.histogram(sc.histogram_bins));
    write_cdf_csv(cdf, d, sc.cdf_points);
    out.write("eta_histogram.csv", hist.str());
    out.write("eta_cdf.csv", cdf.str());

    ojson deciles = ojson::array();
    for (int q = 1; q <= 9; ++q) deciles.push_back(d.quantile(q / 10.0) * 1e9);
    const double b = electron_dipole_field(sc.nv_depth_nm, sc.dipole_kappa);
    ojson y{{"samples", sc.samples},
            {"threshold_nT_per_sqrtHz", sc.threshold_nT_per_sqrtHz},
            {"yield_fraction", r.yield_fraction},
            {"median_nT_per_sqrtHz", d.median() * 1e9},
            {"deciles_nT_per_sqrtHz", deciles},
            {"single_spin",
             {{"nv_depth_nm", sc.nv_depth_nm},
              {"dipole_kappa", sc.dipole_kappa},
              {"dipole_field_nT", b * 1e9},
              {"averaging_time_at_threshold_s", single_spin_averaging_time(threshold, sc.nv_depth_nm, sc.dipole_kappa)},
              {"averaging_time_at_median_s", single_spin_averaging_time(d.median(), sc.nv_depth_nm, sc.dipole_kappa)}}}};
    out.write("yield.json", y.dump(2) + "\n");
    fmt::print(log, "median eta {:.2f} nT/sqrt(Hz); {:.1f}% below {:g} nT/sqrt(Hz)\n", d.median() * 1e9,
               100.0 * r.yield_fraction, sc.threshold_nT_per_sqrtHz);
    out.write_manifest(manifest_header("sensitivity", sha256_hex(canonical), cfg.master_seed, cfg.threads, started));
    return exit_ok;
}

int cmd_effmap(const EffmapOptions& o, std::ostream& log) {
    const auto started = utc_now();
    const bool have_map = !o.map.empty() || o.synthetic_decay_nm;
    if (!have_map && o.saturation.empty()) throw ConfigError("effmap needs --map, --synthetic-decay-nm or --saturation");
    OutputSet out(output_dir(o.common));
    ojson options;

    if (have_map) {
        if (!o.diameter_nm) throw ConfigError("--diameter-nm is required with an efficiency map");
        if (o.points < 3) throw ConfigError("--points must be >= 3");
        std::map<double, double> weights;
        if (!o.weights.empty()) {
            const auto t = read_csv_file(o.weights, "weights file");
            const auto cw = t.column("wavelength_nm"), cv = t.column("weight");
            for (const auto& row : t.rows) weights[row[cw]] = row[cv];
            options["weights_sha256"] = file_sha256(o.weights);
        }
        EfficiencyMap map;
        if (!o.map.empty()) {
            auto in = open_input(o.map, "efficiency map");
            map = read_efficiency_map_csv(in, *o.diameter_nm, weights);
            options["map_sha256"] = file_sha256(o.map);
        } else {
            map = synthetic_efficiency_map(*o.diameter_nm, 0.6, *o.synthetic_decay_nm);
            options["synthetic_decay_nm"] = *o.synthetic_decay_nm;
        }
        options["diameter_nm"] = *o.diameter_nm;
        options["points"] = o.points;
        const double radius = map.radius();

        std::ostringstream curve;
        curve << "sigma0_nm,sigma_loc_pillar_nm,mean_eta\n";
        std::vector<double> sigmas{0.0};
        for (int i = 0; i < o.points - 2; ++i)
            sigmas.push_back(radius / 100.0 * std::pow(1e4, static_cast<double>(i) / (o.points - 3)));
        sigmas.push_back(std::numeric_limits<double>::infinity());
        for (double s0 : sigmas) {
            const auto m = mean_efficiency(map, s0);
            fmt::print(curve, "{},{:.6f},{:.8f}\n", number_or_inf(s0), m.sigma_loc_pillar, m.mean_eta);
        }
        out.write("efficiency_curve.csv", curve.str());

        const auto on_axis = mean_efficiency(map, 0.0), uniform = mean_efficiency(map, std::numeric_limits<double>::infinity());
        ojson j{{"pillar_diameter_nm", *o.diameter_nm},
                {"on_axis_eta", on_axis.mean_eta},
                {"uniform", {{"sigma_loc_pillar_nm", uniform.sigma_loc_pillar}, {"mean_eta", uniform.mean_eta}}}};
        ojson at = ojson::array();
        for (double s : o.sigma_loc_nm) {
            const double s0 = sigma0_for_sigma_loc(s, radius);
            const auto m = mean_efficiency(map, s0);
            at.push_back({{"sigma_loc_pillar_nm", s}, {"sigma0_nm", s0}, {"mean_eta", m.mean_eta}});
            fmt::print(log, "sigma_loc {:g} nm: mean eta {:.4f} (uniform {:.4f})\n", s, m.mean_eta, uniform.mean_eta);
        }
        j["at_sigma_loc"] = at;
        options["sigma_loc_nm"] = o.sigma_loc_nm;
        out.write("effmap.json", j.dump(2) + "\n");
    }

    if (!o.saturation.empty()) {
        auto in = open_input(o.saturation, "saturation file");
        const auto fit = fit_saturation(read_saturation_csv(in));
        ojson cov = ojson::array();
        for (const auto& row : fit.covariance) cov.push_back(row);
        const ojson j{{"pl_sat_cps", fit.pl_sat},
                      {"alpha_nv_cps_per_mW", fit.alpha_nv},
                      {"alpha_bg_cps_per_mW", fit.alpha_bg},
                      {"covariance", cov},
                      {"knee_power_mW", fit.knee_power()},
                      {"knee_reached", fit.knee_reached},
                      {"background_clamped", fit.background_clamped}};
        out.write("saturation_fit.json", j.dump(2) + "\n");
        options["saturation_sha256"] = file_sha256(o.saturation);
        fmt::print(log, "PL_sat = {:.1f} kcps\n", fit.pl_sat / 1e3);
        if (!fit.knee_reached) fmt::print(log, "warning: highest power stays below the saturation knee; PL_sat is an extrapolation\n");
    }
    out.write_manifest(manifest_header("effmap", options_hash(options), 0, 1, started));
    return exit_ok;
}

}  // namespace nvform::cli
