#include "nvform/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "nvform/errors.hpp"
#include "nvform/parallel.hpp"
#include "nvform/rng.hpp"

namespace nvform {

namespace {

constexpr std::array<double, 5> permutations_of_4{1.0, 4.0, 12.0, 24.0, 24.0};

double log_poisson(int n, double lambda) {
    if (lambda == 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return n * std::log(lambda) - lambda - std::lgamma(n + 1.0);
}

}  // namespace

std::int64_t OrientationHistogram::n_sites() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

void OrientationHistogram::validate() const {
    for (auto c : counts)
        if (c < 0) throw InvalidInput("orientation histogram counts must be non-negative");
    if (n_sites() < 1) throw InvalidInput("orientation histogram needs at least one site");
}

OrientationHistogram OrientationHistogram::from_site_counts(const std::vector<int>& distinct_per_site) {
    OrientationHistogram h;
    for (int l : distinct_per_site) {
        if (l < 0 || l > 4) throw InvalidInput("distinct orientation count must lie in 0..4");
        ++h.counts[static_cast<std::size_t>(l)];
    }
    return h;
}

unsigned __int128 stirling2(int n, int l) {
    if (n < 0 || l < 0 || l > n) throw InvalidInput("stirling2 requires 0 <= l <= n");
    using u128 = unsigned __int128;
    // row[k] = S(m, k) for the current m, k <= l.
    std::vector<u128> row(static_cast<std::size_t>(l) + 1, 0);
    row[0] = 1;
    for (int m = 1; m <= n; ++m) {
        for (int k = std::min(m, l); k >= 1; --k) {
            u128 scaled;
            if (__builtin_mul_overflow(row[k], static_cast<u128>(k), &scaled) ||
                __builtin_add_overflow(scaled, row[k - 1], &row[k]))
                throw InvalidInput("stirling2(" + std::to_string(n) + ", " + std::to_string(l) +
                                   ") exceeds 128-bit range");
        }
        row[0] = 0;
    }
    return row[static_cast<std::size_t>(l)];
}

int pmf_truncation(double lambda, double tail) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and non-negative");
    if (lambda == 0.0) return 0;
    for (int n = 0;; ++n) {
        if (n + 2 <= lambda) continue;
        // Tail after n is bounded by a geometric series with ratio lambda/(n+2).
        const double next = std::exp(log_poisson(n + 1, lambda));
        const double bound = next / (1.0 - lambda / (n + 2.0));
        if (bound < tail) return n;
    }
}

double model_pmf(double lambda, int l, int truncation) {
    if (!(lambda >= 0.0)) throw InvalidInput("lambda must be non-negative");
    if (l < 0 || l > 4) return 0.0;
    if (truncation < 0) throw InvalidInput("truncation must be non-negative");
    // scaled[k] = S(n, k) / 4^n, advanced with the Stirling recurrence.
    std::array<double, 5> scaled{1.0, 0.0, 0.0, 0.0, 0.0};
    double sum = 0.0;
    for (int n = 0; n <= truncation; ++n) {
        if (n > 0) {
            for (int k = 4; k >= 1; --k) scaled[k] = (k * scaled[k] + scaled[k - 1]) / 4.0;
            scaled[0] = 0.0;
        }
        if (scaled[l] != 0.0) sum += std::exp(log_poisson(n, lambda)) * scaled[l];
    }
    return permutations_of_4[static_cast<std::size_t>(l)] * sum;
}

double model_pmf(double lambda, int l) { return model_pmf(lambda, l, pmf_truncation(lambda)); }

std::array<double, 5> model_pmf_all(double lambda) {
    const int truncation = pmf_truncation(lambda);
    std::array<double, 5> scaled{1.0, 0.0, 0.0, 0.0, 0.0};
    std::array<double, 5> sum{};
    for (int n = 0; n <= truncation; ++n) {
        if (n > 0) {
            for (int k = 4; k >= 1; --k) scaled[k] = (k * scaled[k] + scaled[k - 1]) / 4.0;
            scaled[0] = 0.0;
        }
        const double w = std::exp(log_poisson(n, lambda));
        for (int k = 0; k <= 4; ++k) sum[k] += w * scaled[k];
    }
    for (int k = 0; k <= 4; ++k) sum[k] *= permutations_of_4[static_cast<std::size_t>(k)];
    return sum;
}

double log_likelihood(const OrientationHistogram& hist, double lambda) {
    const auto p = model_pmf_all(lambda);
    double ll = 0.0;
    for (std::size_t l = 0; l < 5; ++l) {
        if (hist.counts[l] == 0) continue;
        if (p[l] <= 0.0) return -std::numeric_limits<double>::infinity();
        ll += static_cast<double>(hist.counts[l]) * std::log(p[l]);
    }
    return ll;
}

MleResult fit_lambda(const OrientationHistogram& hist) {
    hist.validate();
    MleResult r;
    const auto& c = hist.counts;
    const bool all_zero = c[1] == 0 && c[2] == 0 && c[3] == 0 && c[4] == 0;
    const bool all_four = c[0] == 0 && c[1] == 0 && c[2] == 0 && c[3] == 0;
    auto ll = [&](double lambda) { return log_likelihood(hist, lambda); };

    if (all_zero) {
        r.lambda_hat = 0.0;
        r.one_sided = true;
    } else if (all_four) {
        r.lambda_hat = lambda_search_max;
        r.at_identifiability_ceiling = true;
    } else {
        // Coarse log-spaced scan to bracket the maximum, then Brent inside the bracket.
        constexpr int grid = 96;
        const double lo_grid = 1e-4;
        std::vector<double> xs(grid), ys(grid);
        for (int i = 0; i < grid; ++i) {
            xs[i] = lo_grid * std::pow(lambda_search_max / lo_grid, static_cast<double>(i) / (grid - 1));
            ys[i] = ll(xs[i]);
        }
        const auto best = static_cast<int>(std::max_element(ys.begin(), ys.end()) - ys.begin());
        const double a = best == 0 ? 0.0 : xs[best - 1];
        const double b = best == grid - 1 ? lambda_search_max : xs[best + 1];
        const auto [x, fx] = boost::math::tools::brent_find_minima(
            [&](double lambda) {
                const double v = ll(lambda);
                return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
            },
            a, b, std::numeric_limits<double>::digits / 2);
        r.lambda_hat = x;
    }
    r.log_likelihood = ll(r.lambda_hat);

    const double level = r.log_likelihood - profile_delta_loglik;
    auto g = [&](double lambda) {
        const double v = ll(lambda);
        return std::isfinite(v) ? v - level : -1e300;
    };
    boost::math::tools::eps_tolerance<double> tol(48);
    auto solve = [&](double x0, double x1) {
        std::uintmax_t iters = 200;
        const auto [u, v] = boost::math::tools::toms748_solve(g, x0, x1, tol, iters);
        return 0.5 * (u + v);
    };

    // Walk outward geometrically to a finite bracket before root-finding.
    if (r.lambda_hat == 0.0 || g(0.0) >= 0.0) {
        r.ci_lo = 0.0;
    } else {
        double inner = r.lambda_hat, outer = 0.5 * r.lambda_hat;
        while (g(outer) >= 0.0) {
            inner = outer;
            outer *= 0.5;
        }
        r.ci_lo = solve(outer, inner);
    }

    if (r.at_identifiability_ceiling || g(lambda_search_max) >= 0.0) {
        r.ci_hi = lambda_search_max;
    } else {
        double inner = std::max(r.lambda_hat, 1e-6), outer = std::min(2.0 * inner, lambda_search_max);
        while (g(outer) >= 0.0) {
            inner = outer;
            outer = std::min(2.0 * outer, lambda_search_max);
        }
        r.ci_hi = solve(inner, outer);
    }
    return r;
}

OrientationHistogram sample_histogram(double lambda, int n_sites, std::uint64_t seed) {
    if (!(lambda >= 0.0)) throw InvalidInput("lambda must be non-negative");
    if (n_sites < 1) throw InvalidInput("n_sites must be >= 1");
    auto eng = rng::make_engine(seed);
    std::poisson_distribution<int> nv_count(lambda > 0.0 ? lambda : 1.0);
    rng::BoundedDraw orientation(4);
    OrientationHistogram h;
    for (int s = 0; s < n_sites; ++s) {
        const int n = lambda > 0.0 ? nv_count(eng) : 0;
        unsigned seen = 0;
        for (int k = 0; k < n && seen != 0xFu; ++k) seen |= 1u << orientation(eng);
        ++h.counts[static_cast<std::size_t>(std::popcount(seen))];
    }
    return h;
}

SystematicResult systematic_uncertainty(double lambda_true, int n_sets, int set_size, std::uint64_t seed,
                                        unsigned threads) {
    if (!(lambda_true >= 0.0)) throw InvalidInput("lambda_true must be non-negative");
    if (n_sets < 1 || set_size < 1) throw InvalidInput("n_sets and set_size must be >= 1");
    SystematicResult r;
    r.lambda_fits.resize(static_cast<std::size_t>(n_sets));
    parallel_for(r.lambda_fits.size(), threads, [&](std::size_t i) {
        const auto h = sample_histogram(lambda_true, set_size, rng::derive(seed, {rng::stream::bootstrap, i}));
        r.lambda_fits[i] = fit_lambda(h).lambda_hat;
    });
    double ss = 0.0;
    for (double v : r.lambda_fits) ss += (v - lambda_true) * (v - lambda_true);
    r.rms_error = std::sqrt(ss / n_sets);
    return r;
}

double ci_to_sigma(const MleResult& r) { return (r.ci_hi - r.ci_lo) / (2.0 * 1.959963984540054); }

NetLambda subtract_control(const MleResult& irradiated, const MleResult& control) {
    auto total_sigma = [](const MleResult& r) {
        const double s = ci_to_sigma(r);
        const double sys = r.systematic_sigma.value_or(0.0);
        return std::sqrt(s * s + sys * sys);
    };
    const double si = total_sigma(irradiated), sc = total_sigma(control);
    return {irradiated.lambda_hat - control.lambda_hat, std::sqrt(si * si + sc * sc)};
}

}  // namespace nvform
