#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nvform/diffusion.hpp"
#include "nvform/errors.hpp"
#include "nvform/sensitivity.hpp"

namespace nvform::cli {

/// Configuration problem; the message names the key and its line in the file.
struct ConfigError : InvalidInput {
    using InvalidInput::InvalidInput;
};

struct SimulationConfig {
    DeviceGeometry geometry = presets::pillar_480nm();
    std::vector<DopedLayer> layers{presets::delta_layer()};
    double nitrogen_density_scale = 1.0;
    std::optional<double> nitrogen_window_half_width;
    BeamParams beam;  // dose taken from `doses`
    std::vector<double> doses{0.0};
    double target_x = 0.0;
    double target_y = 0.0;
    LatticeConfig lattice;
    bool export_vacancies = false;

    Scenario scenario_for(double dose_pC, const std::string& name) const;
};

/// One sampled sensor parameter: a point value, a truncated Gaussian, or a sample file column.
struct DistributionConfig {
    enum class Kind { Point, Gaussian, File } kind = Kind::Point;
    double value = 0.0;
    double mean = 0.0;
    double sigma = 0.0;
    std::optional<double> lower;
    std::optional<double> upper;
    std::string file;
    std::string column;

    static DistributionConfig point(double v) {
        DistributionConfig d;
        d.value = v;
        return d;
    }
};

struct SensitivityConfig {
    std::int64_t samples = 100000;
    double threshold_nT_per_sqrtHz = 68.0;
    double readout_window_ns = 400.0;
    std::optional<double> fixed_two_tau_us;  // unset: 2tau = T2
    int histogram_bins = 50;
    int cdf_points = 1001;
    DistributionConfig t2_us = DistributionConfig::point(98.0);
    DistributionConfig contrast = DistributionConfig::point(0.18);
    DistributionConfig pl_sat_cps = DistributionConfig::point(1.056e6);
    std::optional<std::string> joint_samples_file;
    double nv_depth_nm = 53.0;
    double dipole_kappa = 2.0;

    /// Resolves sample files relative to `base_dir`.
    YieldSpec yield_spec(const std::filesystem::path& base_dir) const;
};

struct MleConfig {
    std::array<std::int64_t, 5> histogram{};
    std::optional<std::array<std::int64_t, 5>> control;
    int systematic_sets = 0;
};

struct RunConfig {
    std::string scenario = "scenario";
    std::uint64_t master_seed = 1;
    std::int64_t trials = 1;
    unsigned threads = 1;
    std::optional<std::string> output_dir;
    std::optional<SimulationConfig> simulation;
    std::optional<SensitivityConfig> sensitivity;
    std::optional<MleConfig> mle;

    /// Directory of the config file; relative paths inside it resolve here.
    std::filesystem::path base_dir = ".";
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical form with every default written out. Parsing it gives back an equal config.
nlohmann::ordered_json to_json(const RunConfig& cfg);
std::string serialize(const RunConfig& cfg);

}  // namespace nvform::cli
