#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nvform/errors.hpp"
#include "nvform/localization.hpp"

using namespace nvform;

namespace {

PixelImage gaussian_image(double x0, double y0, double sigma, double amp, double offset, std::size_t n = 41,
                          double pitch = 10.0) {
    PixelImage img(n, n, pitch, -0.5 * (n - 1) * pitch, -0.5 * (n - 1) * pitch);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double dx = img.x_of(c) - x0, dy = img.y_of(r) - y0;
            img.at(r, c) = amp * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) + offset;
        }
    return img;
}

}  // namespace

TEST_CASE("image text format round-trips") {
    auto img = gaussian_image(3, -4, 40, 2.5, 0.1, 7, 12.5);
    std::stringstream ss;
    write_image(ss, img);
    const auto back = read_image(ss);
    CHECK(back.rows == img.rows);
    CHECK(back.pitch == img.pitch);
    CHECK(back.origin_x == img.origin_x);
    for (std::size_t i = 0; i < img.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(img.values[i]).epsilon(1e-9));

    std::stringstream bad("nvform-image 1\npitch_nm 1\nshape 2 2\norigin_nm 0 0\n1 2 3\n");
    CHECK_THROWS_AS(read_image(bad), InvalidInput);
    std::stringstream wrong("P2 3 3\n");
    CHECK_THROWS_AS(read_image(wrong), InvalidInput);
}

TEST_CASE("gaussian fit recovers noiseless parameters") {
    const auto fit = fit_gaussian2d(gaussian_image(12.0, -7.0, 55.0, 3.0, 0.4));
    CHECK(fit.x0 == doctest::Approx(12.0).epsilon(1e-6));
    CHECK(fit.y0 == doctest::Approx(-7.0).epsilon(1e-6));
    CHECK(fit.sigma_tot == doctest::Approx(55.0).epsilon(1e-8));
    CHECK(fit.amplitude == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(fit.offset == doctest::Approx(0.4).epsilon(1e-8));
}

TEST_CASE("gaussian fit is translation-equivariant") {
    auto img = gaussian_image(5.0, 3.0, 50.0, 1.0, 0.2);
    const auto a = fit_gaussian2d(img);
    img.origin_x += 3 * img.pitch;
    img.origin_y -= 2 * img.pitch;
    const auto b = fit_gaussian2d(img);
    CHECK(b.x0 - a.x0 == doctest::Approx(3 * img.pitch).epsilon(1e-8));
    CHECK(b.y0 - a.y0 == doctest::Approx(-2 * img.pitch).epsilon(1e-8));
    CHECK(b.sigma_tot == doctest::Approx(a.sigma_tot).epsilon(1e-10));
}

TEST_CASE("gaussian fit with noise reports a sensible error bar") {
    auto img = gaussian_image(0, 0, 60, 1.0, 0.1);
    std::mt19937_64 eng(4);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (auto& v : img.values) v = std::max(0.0, v + noise(eng));
    const auto fit = fit_gaussian2d(img);
    CHECK(fit.sigma_tot_error() > 0.0);
    CHECK(std::abs(fit.sigma_tot - 60.0) < 5.0 * fit.sigma_tot_error());
}

TEST_CASE("flat image has no peak to fit") {
    PixelImage img(10, 10, 5.0);
    std::fill(img.values.begin(), img.values.end(), 3.0);
    CHECK_THROWS_AS(fit_gaussian2d(img), NumericError);
}

TEST_CASE("variance decomposition identity") {
    const auto b = decompose_sigma({std::sqrt(102.0 * 102 + 235.0 * 235 + 41.0 * 41), 0}, {235, 0}, {41, 0});
    CHECK(b.sigma_loc == doctest::Approx(102.0).epsilon(1e-12));
    std::mt19937_64 eng(1);
    std::uniform_real_distribution<double> u(0.0, 300.0);
    for (int i = 0; i < 200; ++i) {
        const double loc = u(eng), psf = u(eng), sys = u(eng);
        const double tot = std::sqrt(loc * loc + psf * psf + sys * sys);
        CHECK(decompose_sigma({tot, 0}, {psf, 0}, {sys, 0}).sigma_loc == doctest::Approx(loc).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("variance decomposition propagates uncertainty to first order") {
    const Measured tot{260.0, 2.0}, psf{235.0, 1.0}, sys{41.0, 3.0};
    const auto b = decompose_sigma(tot, psf, sys);
    auto loc = [](double t, double p, double s) { return std::sqrt(t * t - p * p - s * s); };
    const double h = 1e-4;
    const double dt = (loc(tot.value + h, psf.value, sys.value) - loc(tot.value - h, psf.value, sys.value)) / (2 * h);
    const double dp = (loc(tot.value, psf.value + h, sys.value) - loc(tot.value, psf.value - h, sys.value)) / (2 * h);
    const double ds = (loc(tot.value, psf.value, sys.value + h) - loc(tot.value, psf.value, sys.value - h)) / (2 * h);
    CHECK(b.sigma_loc_uncertainty ==
          doctest::Approx(std::hypot(dt * tot.uncertainty, dp * psf.uncertainty, ds * sys.uncertainty)).epsilon(1e-6));
}

TEST_CASE("unresolvable sigma_loc is an explicit error") {
    CHECK_THROWS_AS(decompose_sigma({200, 1}, {235, 1}, {41, 1}), NumericError);
    CHECK(decompose_sigma({std::hypot(235.0, 41.0), 1}, {235, 1}, {41, 1}).sigma_loc == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("tile averaging is linear and counts skipped tiles") {
    PixelImage a(30, 30, 10.0), b(30, 30, 10.0), sum(30, 30, 10.0);
    std::mt19937_64 eng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        a.values[i] = u(eng);
        b.values[i] = u(eng);
        sum.values[i] = a.values[i] + b.values[i];
    }
    const std::vector<Point2> targets{{100, 100}, {150, 120}, {200, 200}, {5, 5}};
    const auto ta = tile_average(a, targets, 70.0);
    const auto tb = tile_average(b, targets, 70.0);
    const auto ts = tile_average(sum, targets, 70.0);
    CHECK(ta.tiles_used == 3);
    CHECK(ta.tiles_skipped == 1);
    CHECK(ta.image.rows == 7);
    CHECK(ta.image.origin_x == -30.0);
    for (std::size_t i = 0; i < ts.image.values.size(); ++i)
        CHECK(ts.image.values[i] == doctest::Approx(ta.image.values[i] + tb.image.values[i]).epsilon(1e-12));
    CHECK(ta.image.at(3, 3) == doctest::Approx((a.at(10, 10) + a.at(12, 15) + a.at(20, 20)) / 3.0));
    CHECK_THROWS_AS(tile_average(a, std::vector<Point2>{{0, 0}}, 70.0), InvalidInput);
}

TEST_CASE("synthetic mesa pipeline recovers sigma_loc") {
    SyntheticMesaSpec spec;
    spec.emitters_per_spot = 30;
    const auto mesa = render_synthetic_mesa(spec, 12);
    CHECK(mesa.targets.size() == 162);
    const auto tiles = tile_average(mesa.image, mesa.targets, 1800.0);
    CHECK(tiles.tiles_used == 162);
    const auto fit = fit_gaussian2d(tiles.image);
    const auto budget = decompose_sigma({fit.sigma_tot, fit.sigma_tot_error()}, {235, 0}, {41, 0});
    CHECK(budget.sigma_loc == doctest::Approx(102.0).epsilon(0.05));
    CHECK(std::abs(fit.x0) < 10.0);
}

TEST_CASE("affine fit recovers an exact transform") {
    AffineTransform2D t;
    t.linear << 1.01, -0.02, 0.015, 0.99;
    t.translation << 12.0, -30.0;
    std::vector<Point2> detected, design;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) {
            const Point2 d{i * 1000.0 + 3 * j, j * 1000.0 - 2 * i};
            detected.push_back(d);
            design.push_back(t.apply(d));
        }
    const auto fit = fit_affine(detected, design);
    CHECK(fit.rmse < 1e-8);
    CHECK(fit.transform.linear(0, 1) == doctest::Approx(-0.02));
    CHECK(fit.transform.translation(1) == doctest::Approx(-30.0));
    const auto p = fit.transform.inverse().apply(fit.transform.apply({7, 9}));
    CHECK(p.x == doctest::Approx(7.0));
    CHECK(p.y == doctest::Approx(9.0));
}

TEST_CASE("affine residual tracks registration noise") {
    std::mt19937_64 eng(8);
    std::normal_distribution<double> noise(0.0, 41.0);
    std::vector<Point2> detected, design;
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            design.push_back({i * 2000.0, j * 2000.0});
            detected.push_back({i * 2000.0 + noise(eng) + 100.0, j * 2000.0 + noise(eng) - 50.0});
        }
    const auto fit = fit_affine(detected, design);
    // Per-point residual norm has expectation 2 sigma^2 (1 - 3/n).
    CHECK(fit.rmse / std::sqrt(2.0) == doctest::Approx(41.0).epsilon(0.1));
}

TEST_CASE("affine fit rejects degenerate inputs") {
    const std::vector<Point2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    CHECK_THROWS_AS(fit_affine(line, line), NumericError);
    const std::vector<Point2> two{{0, 0}, {1, 0}};
    CHECK_THROWS_AS(fit_affine(two, two), InvalidInput);
}

TEST_CASE("peak detection finds separated spots") {
    SyntheticMesaSpec spec;
    spec.spot_rows = 3;
    spec.spot_cols = 4;
    spec.sigma_loc = 0.0;
    spec.sigma_sys = 0.0;
    spec.emitters_per_spot = 1;
    const auto mesa = render_synthetic_mesa(spec, 1);
    const auto peaks = detect_peaks(mesa.image, 0.3, 5);
    REQUIRE(peaks.size() == 12);
    for (const auto& t : mesa.targets) {
        double best = 1e9;
        for (const auto& p : peaks) best = std::min(best, std::hypot(p.x - t.x, p.y - t.y));
        CHECK(best < 1.0);
    }
    PixelImage dark(20, 20, 10.0);
    CHECK(detect_peaks(dark, 0.5, 3).empty());
}

TEST_CASE("radial profile of a constant image") {
    PixelImage img(21, 21, 10.0, -100, -100);
    std::fill(img.values.begin(), img.values.end(), 2.0);
    const auto bins = radial_profile(img, {0, 0}, 20.0);
    REQUIRE(!bins.empty());
    std::size_t n = 0;
    for (const auto& b : bins) {
        CHECK(b.mean == doctest::Approx(2.0));
        CHECK(b.se == doctest::Approx(0.0).scale(1.0));
        n += b.n;
    }
    CHECK(n == img.values.size());
    CHECK(bins.front().r_center == 10.0);
}

TEST_CASE("pooled per-axis sigma_loc") {
    const std::vector<Point2> pts{{10, 0}, {-10, 0}, {0, 10}, {0, -10}};
    CHECK(sigma_loc_from_positions(pts, {0, 0}) == doctest::Approx(std::sqrt(400.0 / 8.0)));
    CHECK_THROWS_AS(sigma_loc_from_positions(std::vector<Point2>{{1, 1}}, {0, 0}), InvalidInput);
}

TEST_CASE("diffusion lower bound") {
    CHECK(diffusion_lower_bound(280.0, 660.0) == doctest::Approx(70.0 * 70.0 / 1320.0));
    CHECK(diffusion_lower_bound(480.0, 660.0) == doctest::Approx(10.909).epsilon(1e-4));
    CHECK(diffusion_lower_bound(560.0, 660.0) == doctest::Approx(4.0 * diffusion_lower_bound(280.0, 660.0)));
}

TEST_CASE("power-law fit is exact on a power law") {
    std::vector<SigmaCurvePoint> pts;
    for (double n : {1e3, 3e3, 1e4, 3e4}) pts.push_back({n, 2.5 * std::pow(n, 0.45), 100});
    const auto f = fit_power_law(pts);
    CHECK(f.exponent == doctest::Approx(0.45));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK(f.inverse(f(5e3)) == doctest::Approx(5e3));
}

TEST_CASE("sigma_loc(N) grows with N and inverts inside the simulated range") {
    Scenario s;
    s.geometry = presets::bulk();
    s.nitrogen_window_half_width = 300.0;
    s.beam.dose_pC = 40.0;
    s.nitrogen_density_scale = 30.0;
    s.lattice.cell_size = 2.0;
    InversionOptions o;
    o.n_jumps_min = 500;
    o.n_jumps_max = 5000;
    o.grid_points = 3;
    o.trials_per_point = 6;
    o.seed = 4;
    const auto inv = invert_diffusion_constant(40.0, s, o);
    REQUIRE(inv.curve.size() == 3);
    CHECK(inv.curve[0].sigma_loc < inv.curve[2].sigma_loc);
    CHECK(inv.n_jumps > 500);
    CHECK(inv.n_jumps < 5000);
    CHECK(inv.diffusion_constant == doctest::Approx(diffusion_constant_from_jumps(inv.n_jumps, 2.0, 660.0)));
    CHECK_THROWS_AS(invert_diffusion_constant(1e4, s, o), NumericError);
}
