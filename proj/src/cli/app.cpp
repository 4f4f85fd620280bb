#include "nvform/cli/app.hpp"

#include <ostream>

#include <CLI11.hpp>
#include <fmt/ostream.h>

#include "commands.hpp"
#include "nvform/cli/config.hpp"
#include "nvform/errors.hpp"

#ifndef NVFORM_VERSION
#define NVFORM_VERSION "0.0.0"
#endif

namespace nvform::cli {

namespace {

void add_common(CLI::App* sub, CommonOptions& c, bool config_required) {
    auto* opt = sub->add_option("--config", c.config, "JSON run configuration");
    if (config_required) opt->required();
    sub->add_option("--seed", c.seed, "Override master_seed");
    sub->add_option("--trials", c.trials, "Override trials");
    sub->add_option("--threads", c.threads, "Override worker threads");
    sub->add_option("--out", c.out, "Output directory");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Monte Carlo NV formation under focused electron irradiation, with estimators", "nvform"};
    app.set_version_flag("--version", NVFORM_VERSION);
    app.require_subcommand(1);

    CommonOptions sim;
    auto* s = app.add_subcommand("simulate", "Run the irradiation and anneal Monte Carlo for each dose");
    add_common(s, sim, true);

    MleOptions mle;
    auto* m = app.add_subcommand("mle-fit", "Fit the Poisson mean from a distinct-orientation histogram");
    add_common(m, mle.common, false);
    m->add_option("histogram", mle.histogram, "CSV with columns l,count");
    m->add_option("--control", mle.control, "Unirradiated control histogram CSV");
    m->add_option("--systematic-sets", mle.systematic_sets, "Bootstrap sets for the systematic error");

    LocalizeOptions loc;
    auto* l = app.add_subcommand("localize", "Localization analysis of PL images, positions, and diffusion inversion");
    add_common(l, loc.common, false);
    l->add_option("--image", loc.image, "PL image (nvform-image text format)");
    l->add_option("--targets", loc.targets, "CSV of target centres x_nm,y_nm; default is peak detection");
    l->add_option("--tile-size-nm", loc.tile_size_nm);
    l->add_option("--peak-fraction", loc.peak_fraction, "Peak threshold as a fraction of the image range");
    l->add_option("--psf-sigma-nm", loc.psf_sigma_nm);
    l->add_option("--psf-sigma-err-nm", loc.psf_sigma_err_nm);
    l->add_option("--sys-sigma-nm", loc.sys_sigma_nm);
    l->add_option("--sys-sigma-err-nm", loc.sys_sigma_err_nm);
    l->add_option("--calibration", loc.calibration, "CSV detected_x_nm,detected_y_nm,design_x_nm,design_y_nm");
    l->add_option("--bin-width-nm", loc.bin_width_nm, "Radial profile bin width; default is the pixel pitch");
    l->add_option("--positions", loc.positions, "NV positions CSV from simulate");
    l->add_option("--target-x-nm", loc.target_x_nm);
    l->add_option("--target-y-nm", loc.target_y_nm);
    l->add_flag("--invert-D", loc.invert_d, "Infer the vacancy diffusion constant");
    l->add_option("--sigma-loc-nm", loc.sigma_loc_nm, "Measured sigma_loc to invert");
    l->add_option("--n-jumps", loc.n_jumps, "Direct conversion of a jump count to D");
    l->add_option("--cell-size-nm", loc.cell_size_nm);
    l->add_option("--anneal-time-s", loc.anneal_time_s);
    l->add_option("--n-min", loc.n_min);
    l->add_option("--n-max", loc.n_max);
    l->add_option("--grid-points", loc.grid_points);
    l->add_option("--fit-decades", loc.fit_decades);
    l->add_option("--pillar-diameter-nm", loc.pillar_diameter_nm, "Report the lower bound on D for this pillar");

    SensitivityOptions sens;
    auto* y = app.add_subcommand("sensitivity", "Sample the AC magnetic sensitivity distribution and yield");
    add_common(y, sens.common, true);
    y->add_option("--samples", sens.samples);

    EffmapOptions eff;
    auto* e = app.add_subcommand("effmap", "Collection efficiency averaged over the NV position distribution");
    add_common(e, eff.common, false);
    e->add_option("--map", eff.map, "Efficiency sweep or grid CSV");
    e->add_option("--synthetic-decay-nm", eff.synthetic_decay_nm, "Use a synthetic Gaussian-decay map instead of --map");
    e->add_option("--diameter-nm", eff.diameter_nm);
    e->add_option("--weights", eff.weights, "CSV wavelength_nm,weight");
    e->add_option("--sigma-loc-nm", eff.sigma_loc_nm, "Report mean efficiency at these sigma_loc values");
    e->add_option("--points", eff.points, "Points on the efficiency curve");
    e->add_option("--saturation", eff.saturation, "Saturation curve CSV P_mW,PL_cps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? exit_ok : exit_config_error;
    }

    try {
        if (*s) return cmd_simulate(sim, out);
        if (*m) return cmd_mle_fit(mle, out);
        if (*l) return cmd_localize(loc, out);
        if (*y) return cmd_sensitivity(sens, out);
        if (*e) return cmd_effmap(eff, out);
    } catch (const NumericError& ex) {
        fmt::print(err, "numeric failure: {}\n", ex.what());
        return exit_numeric_failure;
    } catch (const InvalidInput& ex) {
        fmt::print(err, "error: {}\n", ex.what());
        return exit_config_error;
    } catch (const std::filesystem::filesystem_error& ex) {
        fmt::print(err, "error: {}\n", ex.what());
        return exit_config_error;
    }
    return exit_config_error;
}

}  // namespace nvform::cli
