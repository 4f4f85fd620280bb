#pragma once

// Reference implementations used only by tests. Each one is written from the
// defining formula, independently of the library code path it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

inline double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Inclusion-exclusion form of the distinct-orientation pmf:
/// P(l) = C(4,l) sum_j (-1)^j C(l,j) exp(-lambda (1 - (l-j)/4)).
inline double distinct_orientation_pmf(double lambda, int l) {
    double s = 0.0;
    for (int j = 0; j <= l; ++j) s += ((j % 2) ? -1.0 : 1.0) * binom(l, j) * std::exp(-lambda * (1.0 - (l - j) / 4.0));
    return binom(4, l) * s;
}

/// Brute-force: Poisson NV count per site, each NV picks one of 4 orientations.
inline std::array<double, 5> sampled_orientation_pmf(double lambda, std::int64_t sites, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::poisson_distribution<int> count(lambda);
    std::uniform_int_distribution<int> orient(0, 3);
    std::array<double, 5> freq{};
    for (std::int64_t s = 0; s < sites; ++s) {
        const int n = count(eng);
        bool seen[4] = {false, false, false, false};
        for (int k = 0; k < n; ++k) seen[orient(eng)] = true;
        ++freq[static_cast<std::size_t>(seen[0] + seen[1] + seen[2] + seen[3])];
    }
    for (auto& f : freq) f /= static_cast<double>(sites);
    return freq;
}

/// Stirling numbers of the second kind by explicit formula
/// S(n,k) = (1/k!) sum_j (-1)^j C(k,j) (k-j)^n, exact for small n.
inline double stirling2_explicit(int n, int k) {
    double s = 0.0, fact = 1.0;
    for (int i = 2; i <= k; ++i) fact *= i;
    for (int j = 0; j <= k; ++j) s += ((j % 2) ? -1.0 : 1.0) * binom(k, j) * std::pow(k - j, n);
    return std::round(s / fact);
}

/// Free 3-D nearest-neighbour walk; returns the mean squared displacement in units of a^2.
inline double free_walk_msd(int walkers, int jumps, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_int_distribution<int> dir(0, 5);
    double sum = 0.0;
    for (int w = 0; w < walkers; ++w) {
        long x = 0, y = 0, z = 0;
        for (int j = 0; j < jumps; ++j) {
            switch (dir(eng)) {
                case 0: ++x; break;
                case 1: --x; break;
                case 2: ++y; break;
                case 3: --y; break;
                case 4: ++z; break;
                default: --z; break;
            }
        }
        sum += static_cast<double>(x * x + y * y + z * z);
    }
    return sum / walkers;
}

/// Hand evaluation of the AC sensitivity with 2tau = T2, SI units throughout.
inline double eta_reference(double t2_us, double contrast, double pl_sat_cps, double window_ns) {
    const double hbar = 1.054571817e-34, mu_b = 9.2740100783e-24, g = 2.0;
    const double t2 = t2_us * 1e-6;
    const double n_avg = 0.5 * pl_sat_cps * window_ns * 1e-9;
    return hbar / (g * mu_b) * std::exp(1.0) / std::sqrt(t2) * std::sqrt(1.0 + 4.0 / (contrast * contrast * n_avg));
}

/// Two-sample-free Kolmogorov-Smirnov statistic of samples against a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

}  // namespace oracle
