#pragma once

// Physical constants and unit conversions shared by all modules.
// Internal length unit is the nanometre; times are seconds unless a name says otherwise.

namespace nvform::units {

// CODATA 2018.
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double bohr_magneton = 9.2740100783e-24;  // J/T
inline constexpr double mu0_over_4pi = 1.00000000055e-7;   // T m / A
inline constexpr double electron_g = 2.0;

// Beam dose: 1 pC of charge delivered into the 20 nm spot.
inline constexpr double electrons_per_pC = 6.2415e6;
inline constexpr double e_per_cm2_per_pC = 2.0e18;

// Diamond conventional cubic cell, a0 = 0.357 nm, 8 atoms.
inline constexpr double diamond_lattice_nm = 0.357;
inline constexpr double diamond_unit_cell_volume_nm3 =
    diamond_lattice_nm * diamond_lattice_nm * diamond_lattice_nm;
inline constexpr double diamond_atoms_per_nm3 = 8.0 / diamond_unit_cell_volume_nm3;

// Areal density: 1 ppm*nm = 1e-6 * n_C * 1 nm.
inline constexpr double nm2_per_cm2 = 1.0e14;
inline constexpr double per_nm2_per_ppm_nm = 1.0e-6 * diamond_atoms_per_nm3;
inline constexpr double per_cm2_per_ppm_nm = per_nm2_per_ppm_nm * nm2_per_cm2;

inline constexpr double ppm_nm_to_per_cm2(double ppm_nm) { return ppm_nm * per_cm2_per_ppm_nm; }
inline constexpr double per_cm2_to_ppm_nm(double per_cm2) { return per_cm2 / per_cm2_per_ppm_nm; }
inline constexpr double per_cm2_to_per_nm2(double per_cm2) { return per_cm2 / nm2_per_cm2; }

inline constexpr double dose_pC_to_electrons(double pC) { return pC * electrons_per_pC; }
inline constexpr double dose_pC_to_e_per_cm2(double pC) { return pC * e_per_cm2_per_pC; }
inline constexpr double dose_e_per_cm2_to_pC(double e_cm2) { return e_cm2 / e_per_cm2_per_pC; }

/// FWHM of a Gaussian expressed in standard deviations, 2*sqrt(2 ln 2).
inline constexpr double fwhm_per_sigma = 2.3548200450309493;

}  // namespace nvform::units
