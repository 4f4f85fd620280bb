#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace nvform {

/// Position in nm. z is depth below the top surface (positive downward).
struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Point3&, const Point3&) = default;
};

enum class GeometryKind { TaperedPillar, Mesa, Bulk };

/// Diamond device: a pillar or mesa of `height` standing on a slab that extends
/// laterally without bound down to `slab_depth_cutoff`. Bulk has only the top
/// surface and the cutoff plane. Every face absorbs vacancies.
struct DeviceGeometry {
    GeometryKind kind = GeometryKind::Bulk;
    double top_diameter = 0.0;     // TaperedPillar
    double bottom_diameter = 0.0;  // TaperedPillar
    double height = 0.0;           // TaperedPillar, Mesa
    double mesa_side = 0.0;        // Mesa
    double slab_depth_cutoff = 0.0;

    static DeviceGeometry pillar(double top_diameter, double bottom_diameter, double height,
                                 double slab_depth_cutoff);
    static DeviceGeometry mesa(double side, double height, double slab_depth_cutoff);
    static DeviceGeometry bulk(double slab_depth_cutoff);

    /// Throws InvalidInput when the invariants for `kind` do not hold.
    void validate() const;

    /// Pillar radius at depth z (linear taper). Only meaningful for TaperedPillar, 0 <= z <= height.
    double pillar_radius_at(double z) const;

    /// Area of the horizontal cross-section at depth z, optionally clipped to a
    /// square window of half-width `window_half` centred on (cx, cy).
    /// Returns nullopt when the area is unbounded (bulk without window).
    std::optional<double> cross_section_area(double z, std::optional<double> window_half = std::nullopt,
                                             double cx = 0.0, double cy = 0.0) const;

    friend bool operator==(const DeviceGeometry&, const DeviceGeometry&) = default;
};

/// True iff p lies strictly inside the solid. Points on a face count as outside.
bool contains(const DeviceGeometry& geom, const Point3& p);

/// Nitrogen delta-doped layer modelled as a uniform slab centred at `depth`.
struct DopedLayer {
    double depth = 0.0;
    double thickness = 0.0;
    double areal_density_per_cm2 = 0.0;

    double areal_density_ppm_nm() const;
    static DopedLayer from_ppm_nm(double depth, double thickness, double ppm_nm);

    double z_min() const { return depth - 0.5 * thickness; }
    double z_max() const { return depth + 0.5 * thickness; }

    void validate_for(const DeviceGeometry& geom) const;

    friend bool operator==(const DopedLayer&, const DopedLayer&) = default;
};

struct NitrogenEnsemble {
    std::vector<Point3> positions;
    std::vector<std::uint8_t> consumed;  // parallel to positions

    std::size_t size() const { return positions.size(); }
};

/// Lateral sampling region for the nitrogen layer. Bulk geometries need a
/// window; for pillars and mesas it optionally clips the region.
struct SamplingWindow {
    double half_width = 0.0;
    double center_x = 0.0;
    double center_y = 0.0;
};

/// Expected nitrogen count: areal density x lateral cross-section at the layer depth.
double expected_nitrogen_count(const DeviceGeometry& geom, const DopedLayer& layer,
                               std::optional<SamplingWindow> window = std::nullopt,
                               double density_scale = 1.0);

/// Poisson-distributed nitrogen count with positions uniform in the layer slab
/// intersected with the solid (and the window, when given).
NitrogenEnsemble sample_nitrogen(const DeviceGeometry& geom, const DopedLayer& layer, std::uint64_t rng_seed,
                                 std::optional<SamplingWindow> window = std::nullopt,
                                 double density_scale = 1.0);

/// Concatenate several layers' ensembles (e.g. with the 154 nm interface peak).
NitrogenEnsemble sample_nitrogen(const DeviceGeometry& geom, const std::vector<DopedLayer>& layers,
                                 std::uint64_t rng_seed, std::optional<SamplingWindow> window = std::nullopt,
                                 double density_scale = 1.0);

namespace presets {
/// 480 nm and 280 nm tapered pillars (top/bottom diameters from SEM, height 1414 nm).
DeviceGeometry pillar_480nm();
DeviceGeometry pillar_280nm();
DeviceGeometry mesa_20um();
DeviceGeometry bulk();
/// 53 nm deep, 3.66 nm thick, 1.736e12 cm^-2.
DopedLayer delta_layer();
/// Substrate-interface peak at 154 nm, 5.2 ppm*nm (off by default).
DopedLayer interface_layer();
}  // namespace presets

}  // namespace nvform
