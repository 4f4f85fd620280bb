#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace nvform {

struct SaturationSample {
    double power = 0.0;  // excitation power, any consistent unit (CSV: mW)
    double pl = 0.0;     // counts/s
};

/// PL = PL_sat / (1 + PL_sat / (alpha_nv P)) + alpha_bg P
double saturation_model(double power, double pl_sat, double alpha_nv, double alpha_bg);

struct SaturationFit {
    double pl_sat = 0.0;
    double alpha_nv = 0.0;
    double alpha_bg = 0.0;
    /// Parameter order: pl_sat, alpha_nv, alpha_bg. The alpha_bg row/column is zero when clamped.
    std::array<std::array<double, 3>, 3> covariance{};
    double rss = 0.0;
    /// Largest sampled power reaches the knee PL_sat / alpha_nv.
    bool knee_reached = false;
    /// The unconstrained optimum had alpha_bg < 0; refitted with alpha_bg = 0.
    bool background_clamped = false;

    double knee_power() const { return pl_sat / alpha_nv; }
    double operator()(double power) const { return saturation_model(power, pl_sat, alpha_nv, alpha_bg); }
};

/// Needs >= 5 samples at distinct positive powers. Throws NumericError if the fit does not converge.
SaturationFit fit_saturation(std::span<const SaturationSample> curve);

/// CSV with header P_mW,PL_cps.
std::vector<SaturationSample> read_saturation_csv(std::istream& is);

/// Efficiency versus displacement along x and along y, already reduced over
/// wavelength and dipole orientation. `dr` starts at 0 and is strictly increasing.
struct AxisSweeps {
    std::vector<double> dr;
    std::vector<double> eta_x;
    std::vector<double> eta_y;
};

/// Full 2-D map on a rectilinear grid, eta[iy * xs.size() + ix].
struct GridMap {
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<double> eta;
};

struct EfficiencyMap {
    double pillar_diameter = 0.0;  // nm
    std::variant<AxisSweeps, GridMap> data;

    double radius() const { return 0.5 * pillar_diameter; }
    void validate() const;
};

/// One row of a raw sweep file before reduction.
struct SweepRow {
    double dr = 0.0;
    double eta_x = 0.0;
    double eta_y = 0.0;
    std::optional<double> wavelength_nm;
    std::optional<int> dipole;
};

/// Weighted average over wavelengths (uniform unless `weights` names every
/// wavelength present), then the plain mean over dipole orientations. Every
/// (wavelength, dipole) group must share one dr grid.
AxisSweeps reduce_sweeps(std::span<const SweepRow> rows, const std::map<double, double>& weights = {});

/// Reads either a sweep CSV (dr_nm,eta_x,eta_y[,wavelength_nm][,dipole]) or a
/// grid CSV (dx_nm,dy_nm,eta), chosen from the header.
EfficiencyMap read_efficiency_map_csv(std::istream& is, double pillar_diameter,
                                      const std::map<double, double>& wavelength_weights = {});
void write_efficiency_map_csv(std::ostream& os, const EfficiencyMap& map);

/// eta(dr, theta) = cos^2(theta) eta_x(dr) + sin^2(theta) eta_y(dr) for sweeps;
/// bilinear lookup at (dr cos theta, dr sin theta) for grids. Throws outside the domain.
double extrapolate_map(const EfficiencyMap& map, double dr, double theta);

struct MeanEfficiency {
    double mean_eta = 0.0;
    double sigma_loc_pillar = 0.0;  // pooled per-axis RMS of the truncated distribution
};

struct QuadratureOptions {
    int radial_panels = 48;
    int angular_points = 128;
};

/// Efficiency averaged over an isotropic Gaussian of width sigma0 truncated at
/// the pillar wall. sigma0 = 0 gives the on-axis value; sigma0 = inf a uniform disk.
MeanEfficiency mean_efficiency(const EfficiencyMap& map, double sigma0, const QuadratureOptions& q = {});

/// Closed-form pooled per-axis RMS of a Gaussian (width sigma0) truncated to a disk of radius R.
double truncated_gaussian_sigma_loc(double sigma0, double radius);

/// sigma0 whose truncated distribution has the requested sigma_loc; needs sigma_loc < R/2.
double sigma0_for_sigma_loc(double sigma_loc, double radius);

/// Radially decaying analytic map for tests and demos:
/// eta_x = eta0 exp(-(dr/L)^2), eta_y = eta0 exp(-(dr/(anisotropy L))^2).
EfficiencyMap synthetic_efficiency_map(double pillar_diameter, double eta0, double decay_length,
                                       double anisotropy = 1.25, int n_points = 101);

}  // namespace nvform
