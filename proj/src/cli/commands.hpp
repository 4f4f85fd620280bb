#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nvform::cli {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> trials;
    std::optional<unsigned> threads;
    std::string out;
};

struct MleOptions {
    CommonOptions common;
    std::string histogram;
    std::string control;
    std::optional<int> systematic_sets;
};

struct LocalizeOptions {
    CommonOptions common;
    std::string image;
    std::string targets;
    std::optional<double> tile_size_nm;
    double peak_fraction = 0.5;
    std::optional<double> psf_sigma_nm;
    double psf_sigma_err_nm = 0.0;
    std::optional<double> sys_sigma_nm;
    double sys_sigma_err_nm = 0.0;
    std::string calibration;
    std::optional<double> bin_width_nm;
    std::string positions;
    double target_x_nm = 0.0;
    double target_y_nm = 0.0;
    bool invert_d = false;
    std::optional<double> sigma_loc_nm;
    std::optional<double> n_jumps;
    std::optional<double> cell_size_nm;
    std::optional<double> anneal_time_s;
    double n_min = 1e3;
    double n_max = 4e4;
    int grid_points = 6;
    double fit_decades = 1.0;
    std::optional<double> pillar_diameter_nm;
};

struct SensitivityOptions {
    CommonOptions common;
    std::optional<std::int64_t> samples;
};

struct EffmapOptions {
    CommonOptions common;
    std::string map;
    std::optional<double> diameter_nm;
    std::optional<double> synthetic_decay_nm;
    std::string weights;
    std::vector<double> sigma_loc_nm;
    int points = 41;
    std::string saturation;
};

int cmd_simulate(const CommonOptions& o, std::ostream& log);
int cmd_mle_fit(const MleOptions& o, std::ostream& log);
int cmd_localize(const LocalizeOptions& o, std::ostream& log);
int cmd_sensitivity(const SensitivityOptions& o, std::ostream& log);
int cmd_effmap(const EffmapOptions& o, std::ostream& log);

}  // namespace nvform::cli
