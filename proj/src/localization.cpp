#include "nvform/localization.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <random>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "lsq.hpp"
#include "nvform/errors.hpp"
#include "nvform/rng.hpp"

namespace nvform {

PixelImage::PixelImage(std::size_t r, std::size_t c, double p, double ox, double oy)
    : rows(r), cols(c), pitch(p), origin_x(ox), origin_y(oy), values(r * c, 0.0) {}

void PixelImage::validate() const {
    if (!(pitch > 0.0)) throw InvalidInput("image pitch must be positive");
    if (rows == 0 || cols == 0) throw InvalidInput("image is empty");
    if (values.size() != rows * cols) throw InvalidInput("image value count does not match its shape");
    for (double v : values)
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("image intensities must be finite and non-negative");
}

PixelImage read_image(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "nvform-image" || version != 1)
        throw InvalidInput("not an nvform-image v1 file");
    PixelImage img;
    std::string key;
    bool have_pitch = false, have_origin = false, have_shape = false;
    while (!(have_pitch && have_origin && have_shape)) {
        if (!(is >> key)) throw InvalidInput("truncated image header");
        if (key == "pitch_nm") {
            is >> img.pitch;
            have_pitch = true;
        } else if (key == "origin_nm") {
            is >> img.origin_x >> img.origin_y;
            have_origin = true;
        } else if (key == "shape") {
            is >> img.rows >> img.cols;
            have_shape = true;
        } else {
            throw InvalidInput("unknown image header key '" + key + "'");
        }
        if (!is) throw InvalidInput("malformed image header near '" + key + "'");
    }
    img.values.resize(img.rows * img.cols);
    for (auto& v : img.values)
        if (!(is >> v)) throw InvalidInput("image has fewer values than its shape declares");
    img.validate();
    return img;
}

void write_image(std::ostream& os, const PixelImage& img) {
    fmt::print(os, "nvform-image 1\npitch_nm {:.17g}\norigin_nm {:.17g} {:.17g}\nshape {} {}\n", img.pitch,
               img.origin_x, img.origin_y, img.rows, img.cols);
    for (std::size_t r = 0; r < img.rows; ++r) {
        for (std::size_t c = 0; c < img.cols; ++c) fmt::print(os, c ? " {:.10g}" : "{:.10g}", img.at(r, c));
        os << '\n';
    }
}

double GaussianFit2D::sigma_tot_error() const { return std::sqrt(std::max(0.0, covariance[3][3])); }

double GaussianFit2D::operator()(double x, double y) const {
    const double dx = x - x0, dy = y - y0;
    return amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_tot * sigma_tot)) + offset;
}

GaussianFit2D fit_gaussian2d(const PixelImage& img) {
    img.validate();
    const auto [mn, mx] = std::minmax_element(img.values.begin(), img.values.end());
    const double lo = *mn, hi = *mx;
    if (!(hi - lo > 1e-9 * std::max(1.0, std::abs(hi)))) throw NumericError("gaussian fit: flat image has no peak");

    // Start: centroid and half-maximum area of the above-half-max region.
    const double half = lo + 0.5 * (hi - lo);
    double w = 0.0, sx = 0.0, sy = 0.0;
    std::size_t above = 0;
    for (std::size_t r = 0; r < img.rows; ++r)
        for (std::size_t c = 0; c < img.cols; ++c) {
            const double v = img.at(r, c);
            if (v < half) continue;
            ++above;
            w += v - lo;
            sx += (v - lo) * img.x_of(c);
            sy += (v - lo) * img.y_of(r);
        }
    Eigen::VectorXd start(5);
    const double area = static_cast<double>(above) * img.pitch * img.pitch;
    start << hi - lo, sx / w, sy / w, std::max(img.pitch, std::sqrt(area / (2.0 * std::numbers::pi * std::log(2.0)))), lo;

    detail::LsqProblem prob;
    prob.n_params = 5;
    prob.n_residuals = static_cast<int>(img.values.size());
    prob.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& res) {
        const double s2 = 2.0 * p[3] * p[3];
        for (std::size_t r = 0; r < img.rows; ++r) {
            const double dy = img.y_of(r) - p[2];
            for (std::size_t c = 0; c < img.cols; ++c) {
                const double dx = img.x_of(c) - p[1];
                res[static_cast<Eigen::Index>(r * img.cols + c)] =
                    p[0] * std::exp(-(dx * dx + dy * dy) / s2) + p[4] - img.at(r, c);
            }
        }
    };
    prob.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        const double s = p[3], s2 = s * s;
        for (std::size_t r = 0; r < img.rows; ++r) {
            const double dy = img.y_of(r) - p[2];
            for (std::size_t c = 0; c < img.cols; ++c) {
                const double dx = img.x_of(c) - p[1];
                const double rr = dx * dx + dy * dy;
                const double e = std::exp(-rr / (2.0 * s2));
                const auto i = static_cast<Eigen::Index>(r * img.cols + c);
                j(i, 0) = e;
                j(i, 1) = p[0] * e * dx / s2;
                j(i, 2) = p[0] * e * dy / s2;
                j(i, 3) = p[0] * e * rr / (s2 * s);
                j(i, 4) = 1.0;
            }
        }
    };

    const auto res = detail::levenberg_marquardt(prob, start);
    if (!res.converged || !(std::abs(res.params[3]) > 0.0))
        throw NumericError("gaussian fit did not converge: " + res.diagnostics());

    GaussianFit2D fit;
    fit.amplitude = res.params[0];
    fit.x0 = res.params[1];
    fit.y0 = res.params[2];
    fit.sigma_tot = std::abs(res.params[3]);
    fit.offset = res.params[4];
    fit.rss = res.rss;
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) fit.covariance[a][b] = res.covariance(a, b);
    if (fit.amplitude < 0.0) throw NumericError("gaussian fit converged to a dip, not a peak: " + res.diagnostics());
    return fit;
}

std::vector<RadialBin> radial_profile(const PixelImage& img, Point2 center, double bin_width) {
    img.validate();
    if (!(bin_width > 0.0)) throw InvalidInput("bin width must be positive");
    std::vector<double> sum, sum2;
    std::vector<std::size_t> n;
    for (std::size_t r = 0; r < img.rows; ++r)
        for (std::size_t c = 0; c < img.cols; ++c) {
            const double rad = std::hypot(img.x_of(c) - center.x, img.y_of(r) - center.y);
            const auto b = static_cast<std::size_t>(rad / bin_width);
            if (b >= sum.size()) {
                sum.resize(b + 1, 0.0);
                sum2.resize(b + 1, 0.0);
                n.resize(b + 1, 0);
            }
            const double v = img.at(r, c);
            sum[b] += v;
            sum2[b] += v * v;
            ++n[b];
        }
    std::vector<RadialBin> bins;
    for (std::size_t b = 0; b < sum.size(); ++b) {
        if (n[b] == 0) continue;
        RadialBin bin;
        bin.r_center = (static_cast<double>(b) + 0.5) * bin_width;
        bin.n = n[b];
        bin.mean = sum[b] / static_cast<double>(n[b]);
        if (n[b] > 1) {
            const double var = std::max(0.0, (sum2[b] - n[b] * bin.mean * bin.mean) / (static_cast<double>(n[b]) - 1.0));
            bin.se = std::sqrt(var / static_cast<double>(n[b]));
        }
        bins.push_back(bin);
    }
    return bins;
}

void write_radial_profile_csv(std::ostream& os, const std::vector<RadialBin>& bins) {
    os << "r_nm,mean_PL,se\n";
    for (const auto& b : bins) fmt::print(os, "{:.6f},{:.10g},{:.10g}\n", b.r_center, b.mean, b.se);
}

Point2 AffineTransform2D::apply(Point2 p) const {
    const Eigen::Vector2d v = linear * Eigen::Vector2d(p.x, p.y) + translation;
    return {v.x(), v.y()};
}

AffineTransform2D AffineTransform2D::inverse() const {
    AffineTransform2D inv;
    inv.linear = linear.inverse();
    inv.translation = -inv.linear * translation;
    return inv;
}

AffineFit fit_affine(std::span<const Point2> detected, std::span<const Point2> design) {
    if (detected.size() != design.size()) throw InvalidInput("fit_affine: point lists differ in length");
    const auto n = static_cast<Eigen::Index>(detected.size());
    if (n < 3) throw InvalidInput("fit_affine needs at least 3 correspondences");

    Eigen::MatrixXd x(n, 3), y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.row(i) << detected[static_cast<std::size_t>(i)].x, detected[static_cast<std::size_t>(i)].y, 1.0;
        y.row(i) << design[static_cast<std::size_t>(i)].x, design[static_cast<std::size_t>(i)].y;
    }
    Eigen::MatrixXd centered = x.leftCols(2);
    centered.rowwise() -= centered.colwise().mean();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const auto sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-9 * sv(0)) throw NumericError("fit_affine: detected points are collinear");

    const Eigen::MatrixXd m = x.colPivHouseholderQr().solve(y);  // 3x2
    AffineFit fit;
    fit.transform.linear = m.topRows(2).transpose();
    fit.transform.translation = m.row(2).transpose();
    if (std::abs(fit.transform.linear.determinant()) < 1e-12 * fit.transform.linear.squaredNorm())
        throw NumericError("fit_affine: fitted linear part is singular");
    fit.rmse = std::sqrt((x * m - y).squaredNorm() / static_cast<double>(n));
    return fit;
}

std::vector<Point2> detect_peaks(const PixelImage& img, double threshold, int window) {
    img.validate();
    if (window < 1) throw InvalidInput("peak window must be >= 1 pixel");
    struct Candidate {
        double v;
        std::size_t r, c;
    };
    std::vector<Candidate> cand;
    const auto rows = static_cast<long>(img.rows), cols = static_cast<long>(img.cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            const double v = img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            if (v < threshold) continue;
            bool is_max = true;
            for (long dr = -1; dr <= 1 && is_max; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    if ((dr || dc) && rr >= 0 && rr < rows && cc >= 0 && cc < cols &&
                        img.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) cand.push_back({v, static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
        }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.v > b.v; });

    std::vector<Candidate> kept;
    for (const auto& k : cand) {
        const bool near = std::any_of(kept.begin(), kept.end(), [&](const auto& o) {
            return std::abs(static_cast<long>(o.r) - static_cast<long>(k.r)) <= window &&
                   std::abs(static_cast<long>(o.c) - static_cast<long>(k.c)) <= window;
        });
        if (!near) kept.push_back(k);
    }

    std::vector<Point2> peaks;
    for (const auto& k : kept) {
        double w = 0.0, sx = 0.0, sy = 0.0;
        for (long r = static_cast<long>(k.r) - window; r <= static_cast<long>(k.r) + window; ++r)
            for (long c = static_cast<long>(k.c) - window; c <= static_cast<long>(k.c) + window; ++c) {
                if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
                const double v = img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) - threshold;
                if (v <= 0.0) continue;
                w += v;
                sx += v * img.x_of(static_cast<std::size_t>(c));
                sy += v * img.y_of(static_cast<std::size_t>(r));
            }
        peaks.push_back(w > 0.0 ? Point2{sx / w, sy / w} : Point2{img.x_of(k.c), img.y_of(k.r)});
    }
    return peaks;
}

TileAverage tile_average(const PixelImage& img, std::span<const Point2> targets, double tile_size) {
    img.validate();
    if (targets.empty()) throw InvalidInput("tile_average needs at least one target");
    if (!(tile_size > 0.0)) throw InvalidInput("tile size must be positive");
    const long half = std::max(0L, std::lround(tile_size / img.pitch) / 2);
    const auto side = static_cast<std::size_t>(2 * half + 1);

    TileAverage out;
    out.image = PixelImage(side, side, img.pitch, -half * img.pitch, -half * img.pitch);
    for (const auto& t : targets) {
        const long rc = std::lround((t.y - img.origin_y) / img.pitch);
        const long cc = std::lround((t.x - img.origin_x) / img.pitch);
        if (rc - half < 0 || cc - half < 0 || rc + half >= static_cast<long>(img.rows) ||
            cc + half >= static_cast<long>(img.cols)) {
            ++out.tiles_skipped;
            continue;
        }
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c)
                out.image.at(r, c) += img.at(static_cast<std::size_t>(rc - half) + r, static_cast<std::size_t>(cc - half) + c);
        ++out.tiles_used;
    }
    if (out.tiles_used == 0) throw InvalidInput("every tile falls off the image edge");
    for (auto& v : out.image.values) v /= static_cast<double>(out.tiles_used);
    return out;
}

VarianceBudget decompose_sigma(Measured tot, Measured psf, Measured sys) {
    for (const auto* m : {&tot, &psf, &sys})
        if (!(m->value >= 0.0) || !(m->uncertainty >= 0.0)) throw InvalidInput("sigma values must be non-negative");
    const double radicand = tot.value * tot.value - psf.value * psf.value - sys.value * sys.value;
    if (radicand < -1e-12 * tot.value * tot.value)
        throw NumericError(fmt::format("sigma_loc unresolvable below instrument floor: sigma_tot^2 falls short of "
                                       "sigma_psf^2 + sigma_sys^2 by {:.6g} nm^2",
                                       -radicand));
    VarianceBudget b;
    b.sigma_tot = tot.value;
    b.sigma_psf = psf.value;
    b.sigma_sys = sys.value;
    b.sigma_loc = std::sqrt(std::max(0.0, radicand));
    const double num = std::hypot(tot.value * tot.uncertainty, psf.value * psf.uncertainty, sys.value * sys.uncertainty);
    b.sigma_loc_uncertainty = b.sigma_loc > 0.0 ? num / b.sigma_loc : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    return b;
}

double sigma_loc_from_positions(std::span<const Point2> positions, Point2 target) {
    if (positions.size() < 2) throw InvalidInput("sigma_loc needs at least 2 positions");
    double ss = 0.0;
    for (const auto& p : positions) ss += (p.x - target.x) * (p.x - target.x) + (p.y - target.y) * (p.y - target.y);
    return std::sqrt(ss / (2.0 * static_cast<double>(positions.size())));
}

double sigma_loc_from_positions(std::span<const Point3> positions, Point2 target) {
    std::vector<Point2> flat;
    flat.reserve(positions.size());
    for (const auto& p : positions) flat.push_back({p.x, p.y});
    return sigma_loc_from_positions(flat, target);
}

double sigma_loc_from_outcomes(const std::vector<AnnealOutcome>& outcomes, Point2 target) {
    std::vector<Point2> flat;
    for (const auto& o : outcomes)
        for (const auto& nv : o.nv_records) flat.push_back({nv.position.x, nv.position.y});
    return sigma_loc_from_positions(flat, target);
}

double diffusion_lower_bound(double pillar_diameter, double anneal_time) {
    if (!(pillar_diameter > 0.0) || !(anneal_time > 0.0)) throw InvalidInput("diameter and time must be positive");
    const double quarter = pillar_diameter / 4.0;
    return quarter * quarter / (2.0 * anneal_time);
}

double PowerLawFit::operator()(double n) const { return std::exp(log_prefactor + exponent * std::log(n)); }

double PowerLawFit::inverse(double sigma) const { return std::exp((std::log(sigma) - log_prefactor) / exponent); }

PowerLawFit fit_power_law(std::span<const SigmaCurvePoint> pts) {
    if (pts.size() < 2) throw NumericError("power-law fit needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += std::log(p.n_jumps);
        my += std::log(p.sigma_loc);
    }
    const double n = static_cast<double>(pts.size());
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : pts) {
        const double dx = std::log(p.n_jumps) - mx, dy = std::log(p.sigma_loc) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw NumericError("power-law fit: all grid points share one N");
    PowerLawFit f;
    f.exponent = sxy / sxx;
    f.log_prefactor = my - f.exponent * mx;
    f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

std::vector<SigmaCurvePoint> sigma_loc_curve(const Scenario& scenario, const InversionOptions& o) {
    if (!(o.n_jumps_min >= 1.0) || !(o.n_jumps_max > o.n_jumps_min) || o.grid_points < 2)
        throw InvalidInput("inversion grid needs 1 <= n_min < n_max and >= 2 points");
    const double a = scenario.lattice.cell_size, t = scenario.lattice.anneal_time;
    std::vector<SigmaCurvePoint> curve;
    for (int g = 0; g < o.grid_points; ++g) {
        const double frac = static_cast<double>(g) / (o.grid_points - 1);
        const double n = std::round(o.n_jumps_min * std::pow(o.n_jumps_max / o.n_jumps_min, frac));
        Scenario s = scenario;
        s.lattice.diffusion_constant = diffusion_constant_from_jumps(n, a, t);
        const auto run = simulate_ensemble(s, o.trials_per_point,
                                           rng::derive(o.seed, {rng::stream::grid_point, static_cast<std::uint64_t>(g)}),
                                           o.threads);
        SigmaCurvePoint p;
        p.n_jumps = n;
        for (const auto& out : run.outcomes) p.n_nv += static_cast<std::int64_t>(out.nv_records.size());
        if (p.n_nv < 2)
            throw NumericError(fmt::format("sigma_loc curve: only {} NVs formed at N_jumps = {}", p.n_nv, n));
        p.sigma_loc = sigma_loc_from_outcomes(run.outcomes, {scenario.target.x, scenario.target.y});
        curve.push_back(p);
    }
    return curve;
}

DiffusionInversion invert_diffusion_constant(double target, const Scenario& scenario, const InversionOptions& o) {
    if (!(target > 0.0)) throw InvalidInput("target sigma_loc must be positive");
    DiffusionInversion inv;
    inv.curve = sigma_loc_curve(scenario, o);
    const auto [lo, hi] = std::minmax_element(inv.curve.begin(), inv.curve.end(),
                                              [](const auto& l, const auto& r) { return l.sigma_loc < r.sigma_loc; });
    if (target < lo->sigma_loc || target > hi->sigma_loc)
        throw NumericError(fmt::format("target sigma_loc {:.4g} nm outside simulated range [{:.4g}, {:.4g}] nm", target,
                                       lo->sigma_loc, hi->sigma_loc));
    const double n_cut = o.n_jumps_max / std::pow(10.0, o.fit_decades);
    std::vector<SigmaCurvePoint> upper;
    for (const auto& p : inv.curve)
        if (p.n_jumps >= n_cut * (1.0 - 1e-12)) upper.push_back(p);
    if (upper.size() < 2) upper.assign(inv.curve.end() - 2, inv.curve.end());
    inv.fit = fit_power_law(upper);
    inv.n_jumps = inv.fit.inverse(target);
    inv.diffusion_constant = diffusion_constant_from_jumps(inv.n_jumps, scenario.lattice.cell_size, scenario.lattice.anneal_time);
    return inv;
}

SyntheticMesa render_synthetic_mesa(const SyntheticMesaSpec& spec, std::uint64_t seed) {
    if (spec.spot_rows < 1 || spec.spot_cols < 1 || spec.emitters_per_spot < 1) throw InvalidInput("empty synthetic mesa");
    if (!(spec.pitch > 0.0) || !(spec.sigma_psf > 0.0) || spec.sigma_loc < 0.0 || spec.sigma_sys < 0.0)
        throw InvalidInput("bad synthetic mesa widths");
    const double steps = spec.spacing / spec.pitch;
    if (std::abs(steps - std::round(steps)) > 1e-9) throw InvalidInput("spot spacing must be a multiple of the pitch");

    const auto margin_px = static_cast<std::size_t>(std::ceil(spec.margin / spec.pitch));
    const auto step_px = static_cast<std::size_t>(std::lround(steps));
    const std::size_t rows = 2 * margin_px + (spec.spot_rows - 1) * step_px + 1;
    const std::size_t cols = 2 * margin_px + (spec.spot_cols - 1) * step_px + 1;
    SyntheticMesa out;
    out.image = PixelImage(rows, cols, spec.pitch, -static_cast<double>(margin_px) * spec.pitch,
                           -static_cast<double>(margin_px) * spec.pitch);
    std::fill(out.image.values.begin(), out.image.values.end(), spec.background);

    auto eng = rng::make_engine(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double reach = 6.0 * spec.sigma_psf;
    const double two_s2 = 2.0 * spec.sigma_psf * spec.sigma_psf;
    for (int sr = 0; sr < spec.spot_rows; ++sr)
        for (int sc = 0; sc < spec.spot_cols; ++sc) {
            const Point2 target{sc * spec.spacing, sr * spec.spacing};
            out.targets.push_back(target);
            const double shift_x = spec.sigma_sys * unit(eng), shift_y = spec.sigma_sys * unit(eng);
            for (int e = 0; e < spec.emitters_per_spot; ++e) {
                const double ex = target.x + shift_x + spec.sigma_loc * unit(eng);
                const double ey = target.y + shift_y + spec.sigma_loc * unit(eng);
                const auto c0 = static_cast<long>(std::floor((ex - reach - out.image.origin_x) / spec.pitch));
                const auto r0 = static_cast<long>(std::floor((ey - reach - out.image.origin_y) / spec.pitch));
                const auto c1 = static_cast<long>(std::ceil((ex + reach - out.image.origin_x) / spec.pitch));
                const auto r1 = static_cast<long>(std::ceil((ey + reach - out.image.origin_y) / spec.pitch));
                for (long r = std::max(0L, r0); r <= std::min<long>(r1, static_cast<long>(rows) - 1); ++r)
                    for (long c = std::max(0L, c0); c <= std::min<long>(c1, static_cast<long>(cols) - 1); ++c) {
                        const double dx = out.image.x_of(static_cast<std::size_t>(c)) - ex;
                        const double dy = out.image.y_of(static_cast<std::size_t>(r)) - ey;
                        out.image.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +=
                            spec.emitter_amplitude * std::exp(-(dx * dx + dy * dy) / two_s2);
                    }
            }
        }
    return out;
}

}  // namespace nvform
