#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvform/geometry.hpp"
#include "nvform/units.hpp"
#include "nvform/vacancy_source.hpp"

namespace nvform {

/// Coarse-grained cubic lattice used for the vacancy random walk.
struct LatticeConfig {
    double cell_size = 1.0;               // a, nm
    double anneal_time = 660.0;           // s
    double diffusion_constant = 17.0;     // D_V, nm^2/s
    std::int64_t jumps_per_step = 1;
    double unit_cell_volume = units::diamond_unit_cell_volume_nm3;  // nm^3
    bool top_surface_absorbing = true;

    /// N_tot = round(6 D t / a^2).
    std::int64_t total_jumps() const;
    void validate() const;

    friend bool operator==(const LatticeConfig&, const LatticeConfig&) = default;
};

/// D = a^2 N / (6 t).
double diffusion_constant_from_jumps(double n_jumps, double cell_size, double anneal_time);
/// N = 6 D t / a^2 (not rounded).
double jumps_from_diffusion_constant(double diffusion_constant, double cell_size, double anneal_time);

/// Capture probability for a vacancy and a nitrogen in the same coarse cell:
/// (16 r) / ((8 r)^2 / 2) with r = a^3 / V_uc. Throws InvalidInput when > 1.
double capture_probability(const LatticeConfig& cfg);

struct NvRecord {
    Point3 position;
    int orientation = 0;  // 0..3
    std::int64_t capture_step = 0;

    friend bool operator==(const NvRecord&, const NvRecord&) = default;
};

struct AnnealOutcome {
    std::vector<NvRecord> nv_records;
    std::int64_t n_absorbed_boundary = 0;
    std::int64_t n_surviving = 0;
    std::int64_t n_initial_vacancies = 0;
    /// Final positions of vacancies still walking at the end of the anneal.
    std::vector<Point3> surviving_positions;

    bool conserves_vacancies() const {
        return n_initial_vacancies ==
               static_cast<std::int64_t>(nv_records.size()) + n_absorbed_boundary + n_surviving;
    }
};

/// Walk every vacancy N_tot nearest-neighbour jumps on the cubic lattice.
///
/// A capture trial runs once before the first jump and after every block of
/// `jumps_per_step` jumps, for each unconsumed nitrogen sharing the vacancy's
/// cell. A jump whose destination leaves the solid absorbs the vacancy.
/// Vacancies advance in lockstep, block by block, so earlier-indexed vacancies
/// win ties for the same nitrogen within a block. `nitrogen.consumed` is updated.
AnnealOutcome run_anneal(const DeviceGeometry& geom, NitrogenEnsemble& nitrogen, const VacancyEnsemble& vacancies,
                         const LatticeConfig& cfg, std::uint64_t rng_seed);

/// Everything needed to generate and anneal one irradiation spot.
struct Scenario {
    std::string name = "scenario";
    DeviceGeometry geometry = presets::pillar_480nm();
    std::vector<DopedLayer> layers{presets::delta_layer()};
    BeamParams beam;
    LatticeConfig lattice;
    Point3 target{0.0, 0.0, 0.0};
    /// Multiplies every layer's areal density (desk-scale runs).
    double nitrogen_density_scale = 1.0;
    /// Lateral half-width of the nitrogen sampling window around the target; required for bulk.
    std::optional<double> nitrogen_window_half_width;

    void validate() const;
};

struct EnsembleSummary {
    double mean_nv = 0.0;
    double se = 0.0;
    std::int64_t n_trials = 0;
};

struct EnsembleResult {
    std::vector<AnnealOutcome> outcomes;
    EnsembleSummary summary;
};

/// One trial: nitrogen sampling, vacancy generation and annealing, all seeded from `trial_seed`.
AnnealOutcome simulate_trial(const Scenario& scenario, std::uint64_t trial_seed);

/// Per-trial seed for trial `index` under `seed`.
std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t index);

/// Independent trials on up to `threads` workers; identical for any worker count.
EnsembleResult simulate_ensemble(const Scenario& scenario, std::int64_t n_trials, std::uint64_t seed,
                                 unsigned threads = 1);

EnsembleSummary summarize(const std::vector<AnnealOutcome>& outcomes);

}  // namespace nvform
