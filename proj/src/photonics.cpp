#include "nvform/photonics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <utility>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "lsq.hpp"
#include "nvform/csv.hpp"
#include "nvform/errors.hpp"

namespace nvform {

double saturation_model(double power, double pl_sat, double alpha_nv, double alpha_bg) {
    const double ap = alpha_nv * power;
    return pl_sat * ap / (ap + pl_sat) + alpha_bg * power;
}

namespace {

void validate_curve(std::span<const SaturationSample> curve) {
    if (curve.size() < 5) throw InvalidInput("saturation curve needs at least 5 samples");
    std::set<double> powers;
    for (const auto& s : curve) {
        if (!(s.power > 0.0) || !std::isfinite(s.power)) throw InvalidInput("excitation powers must be positive");
        if (!std::isfinite(s.pl) || s.pl <= 0.0) throw InvalidInput("PL samples must be positive and finite");
        if (!powers.insert(s.power).second) throw InvalidInput("excitation powers must be distinct");
    }
}

// Residuals are relative to the observed rate, matching multiplicative counting noise.
detail::LsqResult fit_once(std::span<const SaturationSample> curve, bool with_background, const Eigen::VectorXd& start) {
    detail::LsqProblem prob;
    prob.n_params = with_background ? 3 : 2;
    prob.n_residuals = static_cast<int>(curve.size());
    prob.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const double bg = with_background ? p[2] : 0.0;
        for (std::size_t i = 0; i < curve.size(); ++i)
            r[static_cast<Eigen::Index>(i)] = (saturation_model(curve[i].power, p[0], p[1], bg) - curve[i].pl) / curve[i].pl;
    };
    prob.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const double pw = curve[i].power, ap = p[1] * pw, d = ap + p[0];
            const auto k = static_cast<Eigen::Index>(i);
            j(k, 0) = ap * ap / (d * d) / curve[i].pl;
            j(k, 1) = p[0] * p[0] * pw / (d * d) / curve[i].pl;
            if (with_background) j(k, 2) = pw / curve[i].pl;
        }
    };
    return detail::levenberg_marquardt(prob, start);
}

detail::LsqResult best_fit(std::span<const SaturationSample> curve, bool with_background) {
    auto by_power = std::vector<SaturationSample>(curve.begin(), curve.end());
    std::sort(by_power.begin(), by_power.end(), [](const auto& a, const auto& b) { return a.power < b.power; });
    const double pl_max = std::max_element(by_power.begin(), by_power.end(), [](const auto& a, const auto& b) {
                              return a.pl < b.pl;
                          })->pl;
    const double slope0 = by_power.front().pl / by_power.front().power;
    const auto& l1 = by_power[by_power.size() - 2];
    const auto& l2 = by_power.back();
    const double slope_end = std::max(0.0, (l2.pl - l1.pl) / (l2.power - l1.power));

    std::optional<detail::LsqResult> best;
    for (double s_scale : {1.0, 2.0, 0.5})
        for (double bg_scale : {0.0, 0.5}) {
            if (!with_background && bg_scale != 0.0) continue;
            Eigen::VectorXd start(with_background ? 3 : 2);
            start[0] = s_scale * pl_max;
            start[1] = 1.2 * slope0;
            if (with_background) start[2] = bg_scale * slope_end;
            auto r = fit_once(curve, with_background, start);
            if (r.converged && r.params[0] > 0.0 && r.params[1] > 0.0 && (!best || r.rss < best->rss)) best = std::move(r);
        }
    if (!best) throw NumericError("saturation fit did not converge from any starting point");
    return *best;
}

}  // namespace

SaturationFit fit_saturation(std::span<const SaturationSample> curve) {
    validate_curve(curve);
    auto r = best_fit(curve, true);
    SaturationFit fit;
    if (r.params[2] < 0.0) {
        r = best_fit(curve, false);
        fit.background_clamped = true;
    }
    fit.pl_sat = r.params[0];
    fit.alpha_nv = r.params[1];
    fit.alpha_bg = fit.background_clamped ? 0.0 : r.params[2];
    fit.rss = r.rss;
    const int n = fit.background_clamped ? 2 : 3;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) fit.covariance[a][b] = r.covariance(a, b);
    double p_max = 0.0;
    for (const auto& s : curve) p_max = std::max(p_max, s.power);
    fit.knee_reached = p_max >= fit.knee_power();
    return fit;
}

std::vector<SaturationSample> read_saturation_csv(std::istream& is) {
    const auto t = read_csv(is);
    const auto p = t.column("P_mW"), pl = t.column("PL_cps");
    std::vector<SaturationSample> out;
    for (const auto& row : t.rows) out.push_back({row[p], row[pl]});
    return out;
}

namespace {

void check_increasing(const std::vector<double>& v, const char* what) {
    if (v.size() < 2) throw InvalidInput(fmt::format("{} needs at least 2 points", what));
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw InvalidInput(fmt::format("{} must be strictly increasing", what));
}

void check_efficiencies(const std::vector<double>& v) {
    for (double e : v)
        if (!(e >= 0.0 && e <= 1.0)) throw InvalidInput("efficiencies must lie in [0, 1]");
}

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

bool covers_disk(const EfficiencyMap& map) {
    const double r = map.radius() * (1.0 - 1e-9);
    if (const auto* s = std::get_if<AxisSweeps>(&map.data)) return s->dr.back() >= r;
    const auto& g = std::get<GridMap>(map.data);
    return g.xs.front() <= -r && g.xs.back() >= r && g.ys.front() <= -r && g.ys.back() >= r;
}

}  // namespace

void EfficiencyMap::validate() const {
    if (!(pillar_diameter > 0.0)) throw InvalidInput("pillar diameter must be positive");
    if (const auto* s = std::get_if<AxisSweeps>(&data)) {
        check_increasing(s->dr, "sweep dr");
        if (s->dr.front() != 0.0) throw InvalidInput("sweep dr must start at 0");
        if (s->eta_x.size() != s->dr.size() || s->eta_y.size() != s->dr.size())
            throw InvalidInput("eta_x / eta_y length differs from dr");
        check_efficiencies(s->eta_x);
        check_efficiencies(s->eta_y);
    } else {
        const auto& g = std::get<GridMap>(data);
        check_increasing(g.xs, "grid dx");
        check_increasing(g.ys, "grid dy");
        if (g.eta.size() != g.xs.size() * g.ys.size()) throw InvalidInput("grid efficiency count does not match its axes");
        check_efficiencies(g.eta);
    }
}

AxisSweeps reduce_sweeps(std::span<const SweepRow> rows, const std::map<double, double>& weights) {
    if (rows.empty()) throw InvalidInput("no sweep rows");
    constexpr double no_wavelength = -1.0;
    std::map<std::pair<int, double>, std::vector<SweepRow>> groups;  // (dipole, wavelength)
    for (const auto& r : rows) groups[{r.dipole.value_or(-1), r.wavelength_nm.value_or(no_wavelength)}].push_back(r);

    std::vector<double> grid;
    for (auto& [key, g] : groups) {
        std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return a.dr < b.dr; });
        std::vector<double> dr;
        for (const auto& r : g) dr.push_back(r.dr);
        if (grid.empty())
            grid = dr;
        else if (dr != grid)
            throw InvalidInput("every (wavelength, dipole) sweep must share one dr grid");
    }

    std::map<int, std::set<double>> wavelengths_by_dipole;
    for (const auto& [key, g] : groups) wavelengths_by_dipole[key.first].insert(key.second);
    const auto& reference = wavelengths_by_dipole.begin()->second;
    for (const auto& [d, ws] : wavelengths_by_dipole)
        if (ws != reference) throw InvalidInput("every dipole orientation must cover the same wavelengths");

    auto weight_of = [&](double wl) {
        if (weights.empty()) return 1.0;
        const auto it = weights.find(wl);
        if (it == weights.end()) throw InvalidInput(fmt::format("no spectral weight for wavelength {} nm", wl));
        if (!(it->second >= 0.0)) throw InvalidInput("spectral weights must be non-negative");
        return it->second;
    };

    AxisSweeps out;
    out.dr = grid;
    out.eta_x.assign(grid.size(), 0.0);
    out.eta_y.assign(grid.size(), 0.0);
    for (const auto& [d, ws] : wavelengths_by_dipole) {
        double wsum = 0.0;
        std::vector<double> ex(grid.size(), 0.0), ey(grid.size(), 0.0);
        for (double wl : ws) {
            const double w = weight_of(wl);
            wsum += w;
            const auto& g = groups.at({d, wl});
            for (std::size_t i = 0; i < grid.size(); ++i) {
                ex[i] += w * g[i].eta_x;
                ey[i] += w * g[i].eta_y;
            }
        }
        if (!(wsum > 0.0)) throw InvalidInput("spectral weights sum to zero");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            out.eta_x[i] += ex[i] / wsum;
            out.eta_y[i] += ey[i] / wsum;
        }
    }
    const double n_dipoles = static_cast<double>(wavelengths_by_dipole.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out.eta_x[i] /= n_dipoles;
        out.eta_y[i] /= n_dipoles;
    }
    return out;
}

EfficiencyMap read_efficiency_map_csv(std::istream& is, double pillar_diameter,
                                      const std::map<double, double>& wavelength_weights) {
    const auto t = read_csv(is);
    EfficiencyMap map;
    map.pillar_diameter = pillar_diameter;
    if (t.find("dr_nm")) {
        const auto c_dr = t.column("dr_nm"), c_x = t.column("eta_x"), c_y = t.column("eta_y");
        const auto c_wl = t.find("wavelength_nm");
        const auto c_dp = t.find("dipole");
        std::vector<SweepRow> rows;
        for (const auto& r : t.rows) {
            SweepRow s{r[c_dr], r[c_x], r[c_y], std::nullopt, std::nullopt};
            if (c_wl) s.wavelength_nm = r[*c_wl];
            if (c_dp) s.dipole = static_cast<int>(std::lround(r[*c_dp]));
            rows.push_back(s);
        }
        map.data = reduce_sweeps(rows, wavelength_weights);
    } else if (t.find("dx_nm")) {
        const auto c_x = t.column("dx_nm"), c_y = t.column("dy_nm"), c_e = t.column("eta");
        std::set<double> xs, ys;
        for (const auto& r : t.rows) {
            xs.insert(r[c_x]);
            ys.insert(r[c_y]);
        }
        GridMap g{{xs.begin(), xs.end()}, {ys.begin(), ys.end()}, {}};
        const double missing = std::numeric_limits<double>::quiet_NaN();
        g.eta.assign(g.xs.size() * g.ys.size(), missing);
        for (const auto& r : t.rows) {
            const auto ix = static_cast<std::size_t>(std::lower_bound(g.xs.begin(), g.xs.end(), r[c_x]) - g.xs.begin());
            const auto iy = static_cast<std::size_t>(std::lower_bound(g.ys.begin(), g.ys.end(), r[c_y]) - g.ys.begin());
            auto& cell = g.eta[iy * g.xs.size() + ix];
            if (!std::isnan(cell)) throw InvalidInput(fmt::format("duplicate grid point ({}, {})", r[c_x], r[c_y]));
            cell = r[c_e];
        }
        if (std::any_of(g.eta.begin(), g.eta.end(), [](double v) { return std::isnan(v); }))
            throw InvalidInput("efficiency grid is not rectilinear: some (dx, dy) points are missing");
        map.data = std::move(g);
    } else {
        throw InvalidInput("efficiency map CSV needs dr_nm,eta_x,eta_y or dx_nm,dy_nm,eta columns");
    }
    map.validate();
    return map;
}

void write_efficiency_map_csv(std::ostream& os, const EfficiencyMap& map) {
    if (const auto* s = std::get_if<AxisSweeps>(&map.data)) {
        os << "dr_nm,eta_x,eta_y\n";
        for (std::size_t i = 0; i < s->dr.size(); ++i) fmt::print(os, "{:.10g},{:.10g},{:.10g}\n", s->dr[i], s->eta_x[i], s->eta_y[i]);
        return;
    }
    const auto& g = std::get<GridMap>(map.data);
    os << "dx_nm,dy_nm,eta\n";
    for (std::size_t iy = 0; iy < g.ys.size(); ++iy)
        for (std::size_t ix = 0; ix < g.xs.size(); ++ix)
            fmt::print(os, "{:.10g},{:.10g},{:.10g}\n", g.xs[ix], g.ys[iy], g.eta[iy * g.xs.size() + ix]);
}

double extrapolate_map(const EfficiencyMap& map, double dr, double theta) {
    if (!(dr >= 0.0)) throw InvalidInput("displacement must be non-negative");
    const double c = std::cos(theta), s = std::sin(theta);
    if (const auto* sw = std::get_if<AxisSweeps>(&map.data)) {
        if (dr > sw->dr.back() * (1.0 + 1e-12))
            throw InvalidInput(fmt::format("displacement {} nm outside sweep domain [0, {}] nm", dr, sw->dr.back()));
        return c * c * interp(sw->dr, sw->eta_x, dr) + s * s * interp(sw->dr, sw->eta_y, dr);
    }
    const auto& g = std::get<GridMap>(map.data);
    const double x = dr * c, y = dr * s;
    const double tol = 1e-9 * std::max(1.0, dr);
    if (x < g.xs.front() - tol || x > g.xs.back() + tol || y < g.ys.front() - tol || y > g.ys.back() + tol)
        throw InvalidInput(fmt::format("point ({:.6g}, {:.6g}) nm outside the efficiency grid", x, y));
    auto locate = [](const std::vector<double>& axis, double v) {
        auto i = static_cast<std::size_t>(std::upper_bound(axis.begin(), axis.end(), v) - axis.begin());
        i = std::clamp<std::size_t>(i, 1, axis.size() - 1);
        const double t = std::clamp((v - axis[i - 1]) / (axis[i] - axis[i - 1]), 0.0, 1.0);
        return std::pair{i - 1, t};
    };
    const auto [ix, tx] = locate(g.xs, x);
    const auto [iy, ty] = locate(g.ys, y);
    const auto nx = g.xs.size();
    auto e = [&](std::size_t i, std::size_t j) { return g.eta[j * nx + i]; };
    return (1 - tx) * (1 - ty) * e(ix, iy) + tx * (1 - ty) * e(ix + 1, iy) + (1 - tx) * ty * e(ix, iy + 1) +
           tx * ty * e(ix + 1, iy + 1);
}

MeanEfficiency mean_efficiency(const EfficiencyMap& map, double sigma0, const QuadratureOptions& q) {
    map.validate();
    if (!(sigma0 >= 0.0)) throw InvalidInput("sigma0 must be non-negative");
    if (q.radial_panels < 1 || q.angular_points < 3) throw InvalidInput("quadrature needs >= 1 panel and >= 3 angles");
    if (!covers_disk(map)) throw InvalidInput("efficiency map does not cover the pillar cross-section");
    if (sigma0 == 0.0) return {extrapolate_map(map, 0.0, 0.0), 0.0};

    const double radius = map.radius();
    const bool uniform = std::isinf(sigma0);
    const double r_max = uniform ? radius : std::min(radius, 12.0 * sigma0);
    auto weight = [&](double r) { return uniform ? 1.0 : std::exp(-r * r / (2.0 * sigma0 * sigma0)); };
    auto angular_mean = [&](double r) {
        double sum = 0.0;
        for (int k = 0; k < q.angular_points; ++k)
            sum += extrapolate_map(map, r, 2.0 * std::numbers::pi * k / q.angular_points);
        return sum / q.angular_points;
    };

    using Rule = boost::math::quadrature::gauss<double, 20>;
    const auto& nodes = Rule::abscissa();
    const auto& wts = Rule::weights();
    double num = 0.0, den = 0.0, second = 0.0;
    const double h = r_max / q.radial_panels;
    for (int p = 0; p < q.radial_panels; ++p) {
        const double mid = (p + 0.5) * h, half = 0.5 * h;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            for (double sign : {-1.0, 1.0}) {
                if (nodes[i] == 0.0 && sign > 0.0) continue;
                const double r = mid + sign * half * nodes[i];
                const double w = wts[i] * half * weight(r) * r;
                den += w;
                num += w * angular_mean(r);
                second += w * r * r;
            }
    }
    return {num / den, std::sqrt(second / den / 2.0)};
}

double truncated_gaussian_sigma_loc(double sigma0, double radius) {
    if (!(sigma0 >= 0.0) || !(radius > 0.0)) throw InvalidInput("need sigma0 >= 0 and radius > 0");
    if (sigma0 == 0.0) return 0.0;
    if (std::isinf(sigma0)) return radius / 2.0;
    const double u = radius * radius / (2.0 * sigma0 * sigma0);
    // E[r^2] = 2 sigma0^2 (1 - u / (e^u - 1)); series for small u avoids cancellation.
    const double bracket = u < 1e-3 ? u / 2.0 - u * u / 12.0 + u * u * u * u / 720.0 : 1.0 - u / std::expm1(u);
    return std::sqrt(sigma0 * sigma0 * bracket);
}

double sigma0_for_sigma_loc(double sigma_loc, double radius) {
    if (!(radius > 0.0)) throw InvalidInput("radius must be positive");
    if (!(sigma_loc >= 0.0) || sigma_loc >= radius / 2.0)
        throw InvalidInput(fmt::format("sigma_loc {} nm not reachable inside radius {} nm (limit R/2)", sigma_loc, radius));
    if (sigma_loc == 0.0) return 0.0;
    auto f = [&](double log_s) { return truncated_gaussian_sigma_loc(std::exp(log_s), radius) - sigma_loc; };
    double lo = std::log(sigma_loc), hi = lo + 1.0;
    while (f(hi) < 0.0) hi += 1.0;
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
    return std::exp(0.5 * (a + b));
}

EfficiencyMap synthetic_efficiency_map(double pillar_diameter, double eta0, double decay_length, double anisotropy,
                                       int n_points) {
    if (n_points < 2 || !(decay_length > 0.0) || !(anisotropy > 0.0)) throw InvalidInput("bad synthetic map parameters");
    AxisSweeps s;
    const double r = 0.5 * pillar_diameter;
    for (int i = 0; i < n_points; ++i) {
        const double dr = r * i / (n_points - 1);
        s.dr.push_back(dr);
        s.eta_x.push_back(eta0 * std::exp(-(dr / decay_length) * (dr / decay_length)));
        const double ly = anisotropy * decay_length;
        s.eta_y.push_back(eta0 * std::exp(-(dr / ly) * (dr / ly)));
    }
    EfficiencyMap map{pillar_diameter, std::move(s)};
    map.validate();
    return map;
}

}  // namespace nvform
