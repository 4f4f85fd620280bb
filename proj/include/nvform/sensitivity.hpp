#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "nvform/rng.hpp"

namespace nvform {

enum class TauPolicy { TwoTauEqualsT2, Fixed };

struct SensorParams {
    double t2_us = 0.0;           // Hahn-echo T2
    double contrast = 0.0;        // Rabi contrast, (0, 1)
    double pl_sat_cps = 0.0;
    double readout_window_ns = 400.0;
    TauPolicy tau_policy = TauPolicy::TwoTauEqualsT2;
    double fixed_two_tau_us = 0.0;  // used with TauPolicy::Fixed

    void validate() const;
    double two_tau_us() const;
    /// Photons per readout: 0.5 PL_sat t_window.
    double n_avg() const;
};

/// AC field sensitivity in T/sqrt(Hz):
/// hbar / (g mu_B) * 1 / (exp(-2tau/T2) sqrt(2tau)) * sqrt(1 + 4 / (C^2 n_avg)).
double eta(const SensorParams& p);

struct PointDist {
    double value = 0.0;
};

/// Normal(mean, sigma) restricted to (lower, upper), sampled by inverse CDF.
struct TruncatedGaussian {
    double mean = 0.0;
    double sigma = 0.0;
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
};

/// Resampling with replacement from measured values.
struct Empirical {
    std::vector<double> samples;
};

using ParamDistribution = std::variant<PointDist, TruncatedGaussian, Empirical>;

void validate(const ParamDistribution& d, double lower, double upper);
double draw(const ParamDistribution& d, rng::Engine& eng);

struct YieldSpec {
    ParamDistribution t2_us = PointDist{98.0};
    ParamDistribution contrast = PointDist{0.18};
    ParamDistribution pl_sat_cps = PointDist{1.056e6};
    /// Correlated (t2_us, contrast, pl_sat_cps) rows; when present the marginals above are ignored.
    std::optional<std::vector<std::array<double, 3>>> joint;
    double readout_window_ns = 400.0;
    TauPolicy tau_policy = TauPolicy::TwoTauEqualsT2;
    double fixed_two_tau_us = 0.0;

    void validate() const;
};

struct Histogram {
    std::vector<double> edges;  // size counts + 1
    std::vector<std::int64_t> counts;
};

class SensitivityDistribution {
public:
    SensitivityDistribution() = default;
    explicit SensitivityDistribution(std::vector<double> samples);

    const std::vector<double>& samples() const { return sorted_; }
    std::size_t size() const { return sorted_.size(); }
    /// P(eta <= x).
    double cdf(double x) const;
    /// Smallest sample with cdf >= p.
    double quantile(double p) const;
    double median() const { return quantile(0.5); }
    /// Equal-width bins over [min, max]; a single bin when all samples coincide.
    Histogram histogram(int bins) const;

private:
    std::vector<double> sorted_;
};

struct YieldResult {
    SensitivityDistribution distribution;
    double threshold = 0.0;
    double yield_fraction = 0.0;
};

inline constexpr std::int64_t yield_block_size = 4096;

/// Draws n independent parameter tuples in fixed blocks seeded from the
/// master seed, so the result does not depend on the worker count.
YieldResult sample_yield(const YieldSpec& spec, std::int64_t n, double threshold, std::uint64_t seed,
                         unsigned threads = 1);

/// Reads joint samples from CSV columns t2_us,contrast,pl_sat_cps.
std::vector<std::array<double, 3>> read_joint_samples_csv(std::istream& is);
/// Reads one column of an empirical sample file.
std::vector<double> read_sample_column_csv(std::istream& is, const char* column);

void write_cdf_csv(std::ostream& os, const SensitivityDistribution& d, int points = 1001);
void write_histogram_csv(std::ostream& os, const Histogram& h);

/// Dipole field of one electron spin at `depth_nm`: kappa (mu0/4pi) mu_B / d^3, in T.
double electron_dipole_field(double depth_nm, double kappa = 2.0);

/// Averaging time (s) for unit SNR on a single electron spin: (eta / B)^2.
double single_spin_averaging_time(double eta_T_per_sqrtHz, double depth_nm, double kappa = 2.0);

}  // namespace nvform
