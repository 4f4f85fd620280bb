#include "nvform/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "nvform/errors.hpp"
#include "nvform/rng.hpp"
#include "nvform/units.hpp"

namespace nvform {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput(std::string(name) + " must be positive and finite");
}

double overlap_1d(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

// Area of a disk of radius r at the origin clipped to [x0,x1]x[y0,y1].
double disk_rect_area(double r, double x0, double x1, double y0, double y1) {
    x0 = std::max(x0, -r);
    x1 = std::min(x1, r);
    if (x1 <= x0) return 0.0;
    if (x0 <= -r && x1 >= r && y0 <= -r && y1 >= r) return std::numbers::pi * r * r;
    constexpr int n = 4096;
    const double h = (x1 - x0) / n;
    double area = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = x0 + (i + 0.5) * h;
        const double c = std::sqrt(std::max(0.0, r * r - x * x));
        area += overlap_1d(-c, c, y0, y1);
    }
    return area * h;
}

}  // namespace

DeviceGeometry DeviceGeometry::pillar(double top_diameter, double bottom_diameter, double height,
                                      double slab_depth_cutoff) {
    DeviceGeometry g;
    g.kind = GeometryKind::TaperedPillar;
    g.top_diameter = top_diameter;
    g.bottom_diameter = bottom_diameter;
    g.height = height;
    g.slab_depth_cutoff = slab_depth_cutoff;
    g.validate();
    return g;
}

DeviceGeometry DeviceGeometry::mesa(double side, double height, double slab_depth_cutoff) {
    DeviceGeometry g;
    g.kind = GeometryKind::Mesa;
    g.mesa_side = side;
    g.height = height;
    g.slab_depth_cutoff = slab_depth_cutoff;
    g.validate();
    return g;
}

DeviceGeometry DeviceGeometry::bulk(double slab_depth_cutoff) {
    DeviceGeometry g;
    g.kind = GeometryKind::Bulk;
    g.slab_depth_cutoff = slab_depth_cutoff;
    g.validate();
    return g;
}

void DeviceGeometry::validate() const {
    require_positive(slab_depth_cutoff, "slab_depth_cutoff");
    switch (kind) {
        case GeometryKind::TaperedPillar:
            require_positive(top_diameter, "top_diameter");
            require_positive(bottom_diameter, "bottom_diameter");
            require_positive(height, "height");
            if (top_diameter > bottom_diameter)
                throw InvalidInput("tapered pillar requires top_diameter <= bottom_diameter");
            if (slab_depth_cutoff < height) throw InvalidInput("slab_depth_cutoff must be >= height");
            break;
        case GeometryKind::Mesa:
            require_positive(mesa_side, "mesa_side");
            require_positive(height, "height");
            if (slab_depth_cutoff < height) throw InvalidInput("slab_depth_cutoff must be >= height");
            break;
        case GeometryKind::Bulk:
            break;
    }
}

double DeviceGeometry::pillar_radius_at(double z) const {
    const double r_top = 0.5 * top_diameter;
    const double r_bottom = 0.5 * bottom_diameter;
    return r_top + (r_bottom - r_top) * (z / height);
}

std::optional<double> DeviceGeometry::cross_section_area(double z, std::optional<double> window_half, double cx,
                                                         double cy) const {
    if (!(z > 0.0) || !(z < slab_depth_cutoff)) return 0.0;
    const bool in_slab = kind == GeometryKind::Bulk || z >= height;
    if (in_slab) {
        if (!window_half) return std::nullopt;
        return 4.0 * *window_half * *window_half;
    }
    if (kind == GeometryKind::Mesa) {
        const double h = 0.5 * mesa_side;
        if (!window_half) return mesa_side * mesa_side;
        const double w = *window_half;
        return overlap_1d(-h, h, cx - w, cx + w) * overlap_1d(-h, h, cy - w, cy + w);
    }
    const double r = pillar_radius_at(z);
    if (!window_half) return std::numbers::pi * r * r;
    const double w = *window_half;
    return disk_rect_area(r, cx - w, cx + w, cy - w, cy + w);
}

bool contains(const DeviceGeometry& g, const Point3& p) {
    if (!(p.z > 0.0) || !(p.z < g.slab_depth_cutoff)) return false;
    switch (g.kind) {
        case GeometryKind::Bulk:
            return true;
        case GeometryKind::Mesa: {
            if (p.z >= g.height) return true;
            const double h = 0.5 * g.mesa_side;
            return std::abs(p.x) < h && std::abs(p.y) < h;
        }
        case GeometryKind::TaperedPillar: {
            if (p.z >= g.height) return true;
            const double r = g.pillar_radius_at(p.z);
            return p.x * p.x + p.y * p.y < r * r;
        }
    }
    return false;
}

double DopedLayer::areal_density_ppm_nm() const { return units::per_cm2_to_ppm_nm(areal_density_per_cm2); }

DopedLayer DopedLayer::from_ppm_nm(double depth, double thickness, double ppm_nm) {
    return DopedLayer{depth, thickness, units::ppm_nm_to_per_cm2(ppm_nm)};
}

void DopedLayer::validate_for(const DeviceGeometry& geom) const {
    require_positive(depth, "layer depth");
    require_positive(thickness, "layer thickness");
    if (!(areal_density_per_cm2 >= 0.0) || !std::isfinite(areal_density_per_cm2))
        throw InvalidInput("layer areal density must be non-negative");
    if (z_min() <= 0.0) throw InvalidInput("doped layer extends above the top surface");
    const double floor = geom.kind == GeometryKind::Bulk ? geom.slab_depth_cutoff : geom.height;
    if (z_max() >= floor) throw InvalidInput("doped layer lies outside the device");
}

double expected_nitrogen_count(const DeviceGeometry& geom, const DopedLayer& layer,
                               std::optional<SamplingWindow> window, double density_scale) {
    geom.validate();
    layer.validate_for(geom);
    if (density_scale < 0.0) throw InvalidInput("density_scale must be non-negative");
    std::optional<double> half;
    double cx = 0.0, cy = 0.0;
    if (window) {
        require_positive(window->half_width, "sampling window half-width");
        half = window->half_width;
        cx = window->center_x;
        cy = window->center_y;
    }
    const auto area = geom.cross_section_area(layer.depth, half, cx, cy);
    if (!area) throw InvalidInput("bulk geometry needs a lateral sampling window for the nitrogen layer");
    return units::per_cm2_to_per_nm2(layer.areal_density_per_cm2) * density_scale * *area;
}

NitrogenEnsemble sample_nitrogen(const DeviceGeometry& geom, const DopedLayer& layer, std::uint64_t rng_seed,
                                 std::optional<SamplingWindow> window, double density_scale) {
    const double mean = expected_nitrogen_count(geom, layer, window, density_scale);
    NitrogenEnsemble out;
    if (mean <= 0.0) return out;

    auto eng = rng::make_engine(rng_seed);
    const auto count = std::poisson_distribution<std::int64_t>(mean)(eng);

    // Lateral bounding box of the solid within the slab, clipped to the window.
    double bx0, bx1, by0, by1;
    switch (geom.kind) {
        case GeometryKind::TaperedPillar: {
            const double r = geom.pillar_radius_at(std::min(layer.z_max(), geom.height));
            bx0 = by0 = -r;
            bx1 = by1 = r;
            break;
        }
        case GeometryKind::Mesa:
            bx0 = by0 = -0.5 * geom.mesa_side;
            bx1 = by1 = 0.5 * geom.mesa_side;
            break;
        case GeometryKind::Bulk:
        default:
            bx0 = by0 = -INFINITY;
            bx1 = by1 = INFINITY;
            break;
    }
    if (window) {
        bx0 = std::max(bx0, window->center_x - window->half_width);
        bx1 = std::min(bx1, window->center_x + window->half_width);
        by0 = std::max(by0, window->center_y - window->half_width);
        by1 = std::min(by1, window->center_y + window->half_width);
    }

    out.positions.reserve(static_cast<std::size_t>(count));
    std::uniform_real_distribution<double> ux(bx0, bx1), uy(by0, by1), uz(layer.z_min(), layer.z_max());
    while (static_cast<std::int64_t>(out.positions.size()) < count) {
        const Point3 p{ux(eng), uy(eng), uz(eng)};
        if (contains(geom, p)) out.positions.push_back(p);
    }
    out.consumed.assign(out.positions.size(), 0);
    return out;
}

NitrogenEnsemble sample_nitrogen(const DeviceGeometry& geom, const std::vector<DopedLayer>& layers,
                                 std::uint64_t rng_seed, std::optional<SamplingWindow> window,
                                 double density_scale) {
    NitrogenEnsemble out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto part = sample_nitrogen(geom, layers[i], rng::derive(rng_seed, {i}), window, density_scale);
        out.positions.insert(out.positions.end(), part.positions.begin(), part.positions.end());
    }
    out.consumed.assign(out.positions.size(), 0);
    return out;
}

namespace presets {
DeviceGeometry pillar_480nm() { return DeviceGeometry::pillar(480.0, 850.0, 1414.0, 2000.0); }
DeviceGeometry pillar_280nm() { return DeviceGeometry::pillar(280.0, 610.0, 1414.0, 2000.0); }
DeviceGeometry mesa_20um() { return DeviceGeometry::mesa(20000.0, 1414.0, 2000.0); }
DeviceGeometry bulk() { return DeviceGeometry::bulk(2000.0); }
DopedLayer delta_layer() { return DopedLayer{53.0, 3.66, 1.736e12}; }
DopedLayer interface_layer() { return DopedLayer::from_ppm_nm(154.0, 3.66, 5.2); }
}  // namespace presets

}  // namespace nvform
