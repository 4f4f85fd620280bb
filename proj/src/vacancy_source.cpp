#include "nvform/vacancy_source.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nvform/errors.hpp"
#include "nvform/rng.hpp"
#include "nvform/units.hpp"

namespace nvform {

double BeamParams::electrons() const { return units::dose_pC_to_electrons(dose_pC); }

double BeamParams::dose_e_per_cm2() const { return units::dose_pC_to_e_per_cm2(dose_pC); }

void BeamParams::validate() const {
    if (!(spot_diameter > 0.0)) throw InvalidInput("beam spot_diameter must be positive");
    if (!(dose_pC >= 0.0) || !std::isfinite(dose_pC)) throw InvalidInput("beam dose must be non-negative");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("beam alpha must lie in [0, 1]");
    if (!(vacancies_per_electron_per_um > 0.0)) throw InvalidInput("vacancies_per_electron_per_um must be positive");
    if (!(depth_cutoff > 0.0)) throw InvalidInput("beam depth_cutoff must be positive");
}

double max_vacancy_count(const BeamParams& beam) {
    return beam.electrons() * beam.vacancies_per_electron_per_um * (beam.depth_cutoff * 1e-3);
}

VacancyEnsemble generate_vacancies(const BeamParams& beam, const DeviceGeometry& geom, const Point3& target,
                                   std::uint64_t rng_seed) {
    beam.validate();
    geom.validate();
    VacancyEnsemble out;
    out.origin_spot = target;
    const double mean = beam.alpha * max_vacancy_count(beam);
    if (mean <= 0.0) return out;

    auto eng = rng::make_engine(rng_seed);
    const auto count = std::poisson_distribution<std::int64_t>(mean)(eng);
    const double sigma = beam.spot_diameter / units::fwhm_per_sigma;
    std::normal_distribution<double> lateral(0.0, sigma);

    out.positions.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        Point3 p;
        p.x = target.x + lateral(eng);
        p.y = target.y + lateral(eng);
        // (0, cutoff]
        p.z = beam.depth_cutoff * (1.0 - rng::uniform01(eng));
        if (contains(geom, p)) out.positions.push_back(p);
    }
    return out;
}

void write_vacancy_csv(std::ostream& os, const VacancyEnsemble& ensemble) {
    os << "x_nm,y_nm,z_nm\n";
    for (const auto& p : ensemble.positions) fmt::print(os, "{:.6f},{:.6f},{:.6f}\n", p.x, p.y, p.z);
}

}  // namespace nvform
