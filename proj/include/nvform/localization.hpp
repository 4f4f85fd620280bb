#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nvform/diffusion.hpp"
#include "nvform/geometry.hpp"

namespace nvform {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Row-major intensity grid. Pixel (row, col) is centred at
/// (origin_x + col * pitch, origin_y + row * pitch).
struct PixelImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double pitch = 1.0;  // nm
    double origin_x = 0.0;
    double origin_y = 0.0;
    std::vector<double> values;

    PixelImage() = default;
    PixelImage(std::size_t rows, std::size_t cols, double pitch, double origin_x = 0.0, double origin_y = 0.0);

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double x_of(std::size_t c) const { return origin_x + static_cast<double>(c) * pitch; }
    double y_of(std::size_t r) const { return origin_y + static_cast<double>(r) * pitch; }

    void validate() const;
};

/// Text image format:
///   nvform-image 1
///   pitch_nm <p>
///   origin_nm <x> <y>
///   shape <rows> <cols>
/// followed by `rows` lines of `cols` whitespace-separated values.
PixelImage read_image(std::istream& is);
void write_image(std::ostream& os, const PixelImage& image);

struct GaussianFit2D {
    double amplitude = 0.0;  // PL_max above offset
    double x0 = 0.0;
    double y0 = 0.0;
    double sigma_tot = 0.0;
    double offset = 0.0;
    /// Parameter order: amplitude, x0, y0, sigma_tot, offset.
    std::array<std::array<double, 5>, 5> covariance{};
    double rss = 0.0;

    double sigma_tot_error() const;
    double operator()(double x, double y) const;
};

/// Isotropic 2-D Gaussian plus constant, fitted by nonlinear least squares.
/// Throws NumericError on a flat image or when the fit does not converge.
GaussianFit2D fit_gaussian2d(const PixelImage& image);

struct RadialBin {
    double r_center = 0.0;
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// Angle-averaged profile about `center` in annuli of `bin_width` nm.
std::vector<RadialBin> radial_profile(const PixelImage& image, Point2 center, double bin_width);
void write_radial_profile_csv(std::ostream& os, const std::vector<RadialBin>& bins);

struct AffineTransform2D {
    Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    Point2 apply(Point2 p) const;
    AffineTransform2D inverse() const;
};

struct AffineFit {
    AffineTransform2D transform;
    /// sqrt(mean |T(detected_i) - design_i|^2); the residual registration error.
    double rmse = 0.0;
};

/// Least-squares affine map detected -> design. Throws on < 3 or collinear points.
AffineFit fit_affine(std::span<const Point2> detected, std::span<const Point2> design);

/// Local maxima above `threshold` separated by at least `window` pixels, refined
/// by the intensity centroid within the window.
std::vector<Point2> detect_peaks(const PixelImage& image, double threshold, int window);

struct TileAverage {
    PixelImage image;  // origin is relative to the tile centre
    std::size_t tiles_used = 0;
    std::size_t tiles_skipped = 0;
};

/// Pixel-wise mean of square tiles centred on the nearest pixel to each target.
/// Tiles that do not fit inside the image are skipped and counted.
TileAverage tile_average(const PixelImage& image, std::span<const Point2> targets, double tile_size);

struct Measured {
    double value = 0.0;
    double uncertainty = 0.0;
};

struct VarianceBudget {
    double sigma_tot = 0.0;
    double sigma_loc = 0.0;
    double sigma_psf = 0.0;
    double sigma_sys = 0.0;
    double sigma_loc_uncertainty = 0.0;
};

/// sigma_loc = sqrt(tot^2 - psf^2 - sys^2) with first-order error propagation.
/// A radicand below -1e-12 tot^2 throws NumericError naming the deficit.
VarianceBudget decompose_sigma(Measured sigma_tot, Measured sigma_psf, Measured sigma_sys);

/// Pooled per-axis RMS deviation from the target: sqrt(sum(dx^2 + dy^2) / 2N).
double sigma_loc_from_positions(std::span<const Point2> positions, Point2 target);
double sigma_loc_from_positions(std::span<const Point3> positions, Point2 target);
double sigma_loc_from_outcomes(const std::vector<AnnealOutcome>& outcomes, Point2 target);

/// Smallest D for which the diffusion length 2 sqrt(2 D t) exceeds half the pillar diameter.
double diffusion_lower_bound(double pillar_diameter, double anneal_time);

/// Grid of irradiated spots for pipeline tests: each spot holds
/// `emitters_per_spot` emitters scattered by sigma_loc around the target, the
/// whole spot is displaced by sigma_sys, and every emitter is imaged with an
/// isotropic PSF of width sigma_psf. Targets sit on pixel centres.
struct SyntheticMesaSpec {
    int spot_rows = 9;
    int spot_cols = 18;
    double spacing = 2000.0;  // nm, a multiple of pitch
    double pitch = 100.0;
    double margin = 1500.0;
    double sigma_loc = 102.0;
    double sigma_psf = 235.0;
    double sigma_sys = 41.0;
    int emitters_per_spot = 20;
    double emitter_amplitude = 1.0;
    double background = 0.0;
};

struct SyntheticMesa {
    PixelImage image;
    std::vector<Point2> targets;
};

SyntheticMesa render_synthetic_mesa(const SyntheticMesaSpec& spec, std::uint64_t seed);

struct InversionOptions {
    double n_jumps_min = 1e3;
    double n_jumps_max = 4e4;
    int grid_points = 6;
    std::int64_t trials_per_point = 20;
    /// Power-law fit uses grid points with N >= n_jumps_max / 10^fit_decades.
    double fit_decades = 1.0;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct SigmaCurvePoint {
    double n_jumps = 0.0;
    double sigma_loc = 0.0;
    std::int64_t n_nv = 0;
};

struct PowerLawFit {
    double log_prefactor = 0.0;
    double exponent = 0.0;
    double r_squared = 0.0;

    double operator()(double n) const;
    double inverse(double sigma) const;
};

struct DiffusionInversion {
    double n_jumps = 0.0;
    double diffusion_constant = 0.0;
    std::vector<SigmaCurvePoint> curve;
    PowerLawFit fit;
};

/// Simulated sigma_loc(N_jumps) curve on a log-spaced grid.
std::vector<SigmaCurvePoint> sigma_loc_curve(const Scenario& scenario, const InversionOptions& options);

PowerLawFit fit_power_law(std::span<const SigmaCurvePoint> points);

/// Invert the simulated curve for the N_jumps giving `sigma_loc_target`, then D = a^2 N / (6 t).
DiffusionInversion invert_diffusion_constant(double sigma_loc_target, const Scenario& scenario,
                                             const InversionOptions& options);

}  // namespace nvform
