#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "nvform/geometry.hpp"

namespace nvform {

/// Focused 200 keV electron beam ("pencil" irradiation).
///
/// The vacancy column is depth-uniform down to `depth_cutoff` and laterally
/// Gaussian with FWHM equal to the spot diameter. `alpha` scales the ideal
/// vacancy yield to the effective number of NV-forming monovacancies; it is
/// degenerate with the capture probability when vacancies are sparse, so the
/// two are exposed as independent knobs.
struct BeamParams {
    double spot_diameter = 20.0;                  // nm (FWHM)
    double dose_pC = 0.0;                         // pC
    double vacancies_per_electron_per_um = 8.5e-5;
    double alpha = 0.024;
    double depth_cutoff = 1000.0;  // nm

    double electrons() const;
    double dose_e_per_cm2() const;
    void validate() const;

    friend bool operator==(const BeamParams&, const BeamParams&) = default;
};

struct VacancyEnsemble {
    std::vector<Point3> positions;
    Point3 origin_spot;
};

/// N_V^max = electrons x rate x depth_cutoff (um).
double max_vacancy_count(const BeamParams& beam);

/// Poisson(alpha * N_V^max) vacancies around `target`; positions outside the
/// solid are discarded.
VacancyEnsemble generate_vacancies(const BeamParams& beam, const DeviceGeometry& geom, const Point3& target,
                                   std::uint64_t rng_seed);

/// CSV with header x_nm,y_nm,z_nm.
void write_vacancy_csv(std::ostream& os, const VacancyEnsemble& ensemble);

}  // namespace nvform
