#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace nvform {

/// Number of sites showing l = 0..4 distinct NV orientations.
struct OrientationHistogram {
    std::array<std::int64_t, 5> counts{};

    std::int64_t n_sites() const;
    void validate() const;

    /// Histogram of distinct-orientation counts from per-site orientation lists.
    static OrientationHistogram from_site_counts(const std::vector<int>& distinct_per_site);
};

struct MleResult {
    double lambda_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double log_likelihood = 0.0;
    std::optional<double> systematic_sigma;
    /// Every site showed all four orientations: the likelihood keeps rising and
    /// lambda_hat / ci_hi sit at the search ceiling.
    bool at_identifiability_ceiling = false;
    /// Every site showed zero orientations: the interval is one-sided, [0, ci_hi].
    bool one_sided = false;
};

/// Exact Stirling number of the second kind S(n, l); throws on overflow or bad arguments.
unsigned __int128 stirling2(int n, int l);

/// Smallest N with Poisson(lambda) tail mass P(n > N) below `tail`.
int pmf_truncation(double lambda, double tail = 1e-12);

/// P_lambda(l) = sum_{n<=truncation} Pois(n; lambda) (1/4)^n S(n, l) 4!/(4-l)!.
double model_pmf(double lambda, int l, int truncation);
/// Same with the adaptive truncation.
double model_pmf(double lambda, int l);
std::array<double, 5> model_pmf_all(double lambda);

double log_likelihood(const OrientationHistogram& hist, double lambda);

/// Upper end of the lambda search interval.
inline constexpr double lambda_search_max = 256.0;
/// Half the 95% chi-square(1) quantile.
inline constexpr double profile_delta_loglik = 1.920729410347062;

/// Multinomial MLE of lambda with a profile-likelihood 95% interval.
MleResult fit_lambda(const OrientationHistogram& hist);

struct SystematicResult {
    double rms_error = 0.0;
    std::vector<double> lambda_fits;
};

/// Draw a synthetic histogram: per-site Poisson(lambda) NVs with uniform orientations.
OrientationHistogram sample_histogram(double lambda, int n_sites, std::uint64_t seed);

/// RMS of (lambda_i - lambda_true) over `n_sets` synthetic histograms of `set_size` sites.
SystematicResult systematic_uncertainty(double lambda_true, int n_sets, int set_size, std::uint64_t seed,
                                        unsigned threads = 1);

/// Background-subtracted estimate: irradiated minus as-grown control.
struct NetLambda {
    double lambda = 0.0;
    double sigma = 0.0;
};

/// Symmetric 1-sigma equivalent of a 95% interval, (hi - lo) / (2 * 1.959964).
double ci_to_sigma(const MleResult& r);

/// lambda_net = lambda_irr - lambda_ctrl, sigmas (CI-derived, plus systematic when present) in quadrature.
NetLambda subtract_control(const MleResult& irradiated, const MleResult& control);

}  // namespace nvform
