#include "nvform/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nvform/csv.hpp"
#include "nvform/errors.hpp"
#include "nvform/parallel.hpp"
#include "nvform/units.hpp"

namespace nvform {

void SensorParams::validate() const {
    if (!(t2_us > 0.0)) throw InvalidInput("T2 must be positive");
    if (!(contrast > 0.0 && contrast < 1.0)) throw InvalidInput("contrast must lie in (0, 1)");
    if (!(pl_sat_cps > 0.0)) throw InvalidInput("PL_sat must be positive");
    if (!(readout_window_ns > 0.0)) throw InvalidInput("readout window must be positive");
    if (tau_policy == TauPolicy::Fixed && !(fixed_two_tau_us > 0.0)) throw InvalidInput("fixed 2tau must be positive");
}

double SensorParams::two_tau_us() const { return tau_policy == TauPolicy::TwoTauEqualsT2 ? t2_us : fixed_two_tau_us; }

double SensorParams::n_avg() const { return 0.5 * pl_sat_cps * readout_window_ns * 1e-9; }

double eta(const SensorParams& p) {
    p.validate();
    const double two_tau_s = p.two_tau_us() * 1e-6;
    const double prefactor = units::hbar / (units::electron_g * units::bohr_magneton);
    const double decay = std::exp(-p.two_tau_us() / p.t2_us);
    return prefactor / (decay * std::sqrt(two_tau_s)) * std::sqrt(1.0 + 4.0 / (p.contrast * p.contrast * p.n_avg()));
}

void validate(const ParamDistribution& d, double lower, double upper) {
    auto in_range = [&](double v) { return v > lower && v < upper; };
    if (const auto* p = std::get_if<PointDist>(&d)) {
        if (!in_range(p->value)) throw InvalidInput(fmt::format("point value {} outside ({}, {})", p->value, lower, upper));
    } else if (const auto* g = std::get_if<TruncatedGaussian>(&d)) {
        if (!std::isfinite(g->mean) || !(g->sigma >= 0.0)) throw InvalidInput("gaussian needs finite mean and sigma >= 0");
        if (!(g->lower < g->upper) || g->lower < lower || g->upper > upper)
            throw InvalidInput(fmt::format("truncation bounds must satisfy {} <= lower < upper <= {}", lower, upper));
        if (g->sigma == 0.0 && !(g->mean > g->lower && g->mean < g->upper))
            throw InvalidInput("zero-width gaussian has its mean outside the truncation bounds");
        if (g->sigma > 0.0) {
            const boost::math::normal_distribution<> n(g->mean, g->sigma);
            const double mass = (std::isinf(g->upper) ? 1.0 : boost::math::cdf(n, g->upper)) -
                                (std::isinf(g->lower) ? 0.0 : boost::math::cdf(n, g->lower));
            if (!(mass > 1e-12)) throw InvalidInput("truncation window holds no probability mass");
        }
    } else {
        const auto& e = std::get<Empirical>(d);
        if (e.samples.empty()) throw InvalidInput("empirical distribution has no samples");
        for (double v : e.samples)
            if (!in_range(v)) throw InvalidInput(fmt::format("empirical sample {} outside ({}, {})", v, lower, upper));
    }
}

double draw(const ParamDistribution& d, rng::Engine& eng) {
    if (const auto* p = std::get_if<PointDist>(&d)) return p->value;
    if (const auto* g = std::get_if<TruncatedGaussian>(&d)) {
        const double u = rng::uniform01(eng);
        if (g->sigma == 0.0) return g->mean;
        const boost::math::normal_distribution<> n(g->mean, g->sigma);
        const double lo = std::isinf(g->lower) ? 0.0 : boost::math::cdf(n, g->lower);
        const double hi = std::isinf(g->upper) ? 1.0 : boost::math::cdf(n, g->upper);
        // Open interval (lo, hi) so the bounds themselves are never returned.
        const double p = lo + (u + 0x1.0p-54) * (hi - lo);
        const double x = boost::math::quantile(n, std::clamp(p, std::nextafter(lo, 1.0), std::nextafter(hi, 0.0)));
        return std::clamp(x, std::nextafter(g->lower, g->upper), std::nextafter(g->upper, g->lower));
    }
    const auto& e = std::get<Empirical>(d);
    rng::BoundedDraw pick(static_cast<std::uint32_t>(e.samples.size()));
    return e.samples[pick(eng)];
}

void YieldSpec::validate() const {
    const double inf = std::numeric_limits<double>::infinity();
    if (joint) {
        if (joint->empty()) throw InvalidInput("joint sample file has no rows");
        for (const auto& r : *joint) SensorParams{r[0], r[1], r[2], readout_window_ns, tau_policy, fixed_two_tau_us}.validate();
    } else {
        nvform::validate(t2_us, 0.0, inf);
        nvform::validate(contrast, 0.0, 1.0);
        nvform::validate(pl_sat_cps, 0.0, inf);
    }
    if (!(readout_window_ns > 0.0)) throw InvalidInput("readout window must be positive");
    if (tau_policy == TauPolicy::Fixed && !(fixed_two_tau_us > 0.0)) throw InvalidInput("fixed 2tau must be positive");
}

SensitivityDistribution::SensitivityDistribution(std::vector<double> samples) : sorted_(std::move(samples)) {
    std::sort(sorted_.begin(), sorted_.end());
}

double SensitivityDistribution::cdf(double x) const {
    if (sorted_.empty()) throw InvalidInput("empty distribution");
    const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return static_cast<double>(k) / static_cast<double>(sorted_.size());
}

double SensitivityDistribution::quantile(double p) const {
    if (sorted_.empty()) throw InvalidInput("empty distribution");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("quantile level must lie in [0, 1]");
    const auto n = static_cast<double>(sorted_.size());
    const auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(p * n) - 1.0));
    return sorted_[std::min(k, sorted_.size() - 1)];
}

Histogram SensitivityDistribution::histogram(int bins) const {
    if (sorted_.empty()) throw InvalidInput("empty distribution");
    if (bins < 1) throw InvalidInput("histogram needs >= 1 bin");
    Histogram h;
    const double lo = sorted_.front(), hi = sorted_.back();
    if (lo == hi) {
        h.edges = {lo, hi};
        h.counts = {static_cast<std::int64_t>(sorted_.size())};
        return h;
    }
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    h.edges.back() = hi;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : sorted_) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
        ++h.counts[std::min(b, h.counts.size() - 1)];
    }
    return h;
}

YieldResult sample_yield(const YieldSpec& spec, std::int64_t n, double threshold, std::uint64_t seed, unsigned threads) {
    spec.validate();
    if (n < 1) throw InvalidInput("sample count must be >= 1");
    if (!(threshold > 0.0)) throw InvalidInput("threshold must be positive");
    std::vector<double> samples(static_cast<std::size_t>(n));
    const auto blocks = static_cast<std::size_t>((n + yield_block_size - 1) / yield_block_size);
    parallel_for(blocks, threads, [&](std::size_t b) {
        auto eng = rng::make_engine(rng::derive(seed, {rng::stream::sensitivity_block, b}));
        const auto begin = static_cast<std::int64_t>(b) * yield_block_size;
        const auto end = std::min(n, begin + yield_block_size);
        std::optional<rng::BoundedDraw> row_pick;
        if (spec.joint) row_pick.emplace(static_cast<std::uint32_t>(spec.joint->size()));
        for (auto i = begin; i < end; ++i) {
            SensorParams p;
            if (spec.joint) {
                const auto& r = (*spec.joint)[(*row_pick)(eng)];
                p.t2_us = r[0];
                p.contrast = r[1];
                p.pl_sat_cps = r[2];
            } else {
                p.t2_us = draw(spec.t2_us, eng);
                p.contrast = draw(spec.contrast, eng);
                p.pl_sat_cps = draw(spec.pl_sat_cps, eng);
            }
            p.readout_window_ns = spec.readout_window_ns;
            p.tau_policy = spec.tau_policy;
            p.fixed_two_tau_us = spec.fixed_two_tau_us;
            samples[static_cast<std::size_t>(i)] = eta(p);
        }
    });
    YieldResult r;
    r.distribution = SensitivityDistribution(std::move(samples));
    r.threshold = threshold;
    r.yield_fraction = r.distribution.cdf(threshold);
    return r;
}

std::vector<std::array<double, 3>> read_joint_samples_csv(std::istream& is) {
    const auto t = read_csv(is);
    const auto a = t.column("t2_us"), b = t.column("contrast"), c = t.column("pl_sat_cps");
    std::vector<std::array<double, 3>> rows;
    for (const auto& r : t.rows) rows.push_back({r[a], r[b], r[c]});
    return rows;
}

std::vector<double> read_sample_column_csv(std::istream& is, const char* column) { return read_csv(is).values(column); }

void write_cdf_csv(std::ostream& os, const SensitivityDistribution& d, int points) {
    if (points < 2) throw InvalidInput("CDF needs >= 2 points");
    os << "eta_T_per_sqrtHz,cdf\n";
    for (int i = 0; i < points; ++i) {
        const double x = d.quantile(static_cast<double>(i) / (points - 1));
        fmt::print(os, "{:.8e},{:.8f}\n", x, d.cdf(x));
    }
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
    os << "eta_lo_T_per_sqrtHz,eta_hi_T_per_sqrtHz,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) fmt::print(os, "{:.8e},{:.8e},{}\n", h.edges[i], h.edges[i + 1], h.counts[i]);
}

double electron_dipole_field(double depth_nm, double kappa) {
    if (!(depth_nm > 0.0) || !(kappa > 0.0)) throw InvalidInput("depth and kappa must be positive");
    const double d = depth_nm * 1e-9;
    return kappa * units::mu0_over_4pi * units::bohr_magneton / (d * d * d);
}

double single_spin_averaging_time(double eta_T_per_sqrtHz, double depth_nm, double kappa) {
    if (!(eta_T_per_sqrtHz > 0.0)) throw InvalidInput("sensitivity must be positive");
    const double b = electron_dipole_field(depth_nm, kappa);
    return (eta_T_per_sqrtHz / b) * (eta_T_per_sqrtHz / b);
}

}  // namespace nvform
