#include "nvform/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "nvform/csv.hpp"

namespace nvform::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::size_t line_at(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Reads one JSON object, remembering which keys were consumed so the rest can be reported.
class Section {
public:
    Section(const json& obj, std::string path, std::string_view text) : obj_(obj), path_(std::move(path)), text_(text) {
        if (!obj_.is_object()) fail_here("must be a JSON object");
    }

    bool has(const char* key) const { return obj_.contains(key); }

    [[noreturn]] void fail(const char* key, const std::string& what) const {
        throw ConfigError(fmt::format("config {}{}{}: {}{}", path_, path_.empty() ? "" : ".", key, what, where(key)));
    }

    double number(const char* key, std::optional<double> fallback = std::nullopt) {
        const json* v = take(key);
        if (!v) return require(key, fallback);
        if (!v->is_number()) fail(key, "expects a number");
        const double d = v->get<double>();
        if (!std::isfinite(d)) fail(key, "must be finite");
        return d;
    }

    std::optional<double> maybe_number(const char* key) {
        if (!has(key) || obj_.at(key).is_null()) {
            take(key);
            return std::nullopt;
        }
        return number(key);
    }

    std::int64_t integer(const char* key, std::optional<std::int64_t> fallback = std::nullopt) {
        const json* v = take(key);
        if (!v) return require(key, fallback);
        if (v->is_number_integer()) return v->get<std::int64_t>();
        if (v->is_number_float()) {
            const double d = v->get<double>();
            if (std::floor(d) == d && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
        }
        fail(key, "expects an integer");
    }

    std::uint64_t seed(const char* key, std::uint64_t fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
        fail(key, "expects a non-negative integer");
    }

    bool boolean(const char* key, bool fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_boolean()) fail(key, "expects true or false");
        return v->get<bool>();
    }

    std::string string(const char* key, std::optional<std::string> fallback = std::nullopt) {
        const json* v = take(key);
        if (!v) return require(key, fallback);
        if (!v->is_string()) fail(key, "expects a string");
        return v->get<std::string>();
    }

    const json* raw(const char* key) { return take(key); }

    Section child(const char* key) {
        const json* v = take(key);
        if (!v) fail(key, "is required");
        return Section(*v, qualified(key), text_);
    }

    std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string_view text() const { return text_; }

    void finish() const {
        for (const auto& item : obj_.items())
            if (!used_.count(item.key())) {
                const auto k = item.key();
                throw ConfigError(fmt::format("config {}: unknown key '{}'{}", path_.empty() ? "(top level)" : path_, k,
                                              where(k.c_str())));
            }
    }

private:
    const json* take(const char* key) {
        used_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    template <class T>
    T require(const char* key, const std::optional<T>& fallback) const {
        if (!fallback) fail(key, "is required");
        return *fallback;
    }

    std::string where(const char* key) const {
        const auto pos = text_.find(fmt::format("\"{}\"", key));
        return pos == std::string_view::npos ? std::string() : fmt::format(" (line {})", line_at(text_, pos));
    }

    [[noreturn]] void fail_here(const std::string& what) const {
        throw ConfigError(fmt::format("config {}: {}", path_.empty() ? "(top level)" : path_, what));
    }

    const json& obj_;
    std::string path_;
    std::string_view text_;
    std::set<std::string> used_;
};

template <class Fn>
void checked(Section& s, const char* key, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidInput& e) {
        s.fail(key, e.what());
    }
}

DeviceGeometry parse_geometry(Section g) {
    const auto kind = g.string("kind");
    DeviceGeometry geom;
    if (kind == "pillar") {
        geom = DeviceGeometry::pillar(g.number("top_diameter_nm"), g.number("bottom_diameter_nm"), g.number("height_nm"),
                                      g.number("slab_depth_cutoff_nm", 2000.0));
    } else if (kind == "mesa") {
        geom = DeviceGeometry::mesa(g.number("side_nm"), g.number("height_nm"), g.number("slab_depth_cutoff_nm", 2000.0));
    } else if (kind == "bulk") {
        geom = DeviceGeometry::bulk(g.number("slab_depth_cutoff_nm", 2000.0));
    } else {
        g.fail("kind", fmt::format("'{}' is not one of pillar, mesa, bulk", kind));
    }
    g.finish();
    return geom;
}

DopedLayer parse_layer(Section l) {
    const double depth = l.number("depth_nm"), thickness = l.number("thickness_nm");
    const bool per_cm2 = l.has("areal_density_per_cm2"), ppm = l.has("areal_density_ppm_nm");
    if (per_cm2 == ppm) l.fail("areal_density_per_cm2", "give exactly one of areal_density_per_cm2 or areal_density_ppm_nm");
    DopedLayer layer = per_cm2 ? DopedLayer{depth, thickness, l.number("areal_density_per_cm2")}
                               : DopedLayer::from_ppm_nm(depth, thickness, l.number("areal_density_ppm_nm"));
    l.finish();
    return layer;
}

SimulationConfig parse_simulation(Section& top) {
    SimulationConfig sim;
    {
        auto g = top.child("geometry");
        checked(top, "geometry", [&] {
            sim.geometry = parse_geometry(std::move(g));
            sim.geometry.validate();
        });
    }
    if (const json* layers = top.raw("layers")) {
        if (!layers->is_array() || layers->empty()) top.fail("layers", "expects a non-empty array of layer objects");
        sim.layers.clear();
        for (std::size_t i = 0; i < layers->size(); ++i) {
            const auto path = fmt::format("layers[{}]", i);
            Section l((*layers)[i], path, top.text());
            sim.layers.push_back(parse_layer(std::move(l)));
            checked(top, "layers", [&] { sim.layers.back().validate_for(sim.geometry); });
        }
    }
    if (top.has("nitrogen")) {
        auto n = top.child("nitrogen");
        sim.nitrogen_density_scale = n.number("density_scale", 1.0);
        if (sim.nitrogen_density_scale < 0.0) n.fail("density_scale", "must be non-negative");
        sim.nitrogen_window_half_width = n.maybe_number("window_half_width_nm");
        n.finish();
    }
    if (top.has("beam")) {
        auto b = top.child("beam");
        sim.beam.spot_diameter = b.number("spot_fwhm_nm", 20.0);
        sim.beam.vacancies_per_electron_per_um = b.number("vacancies_per_electron_per_um", 8.5e-5);
        sim.beam.alpha = b.number("alpha", 0.024);
        sim.beam.depth_cutoff = b.number("depth_cutoff_nm", 1000.0);
        const json* dose = b.raw("dose_pC");
        if (!dose) b.fail("dose_pC", "is required");
        sim.doses.clear();
        if (dose->is_number()) {
            sim.doses.push_back(dose->get<double>());
        } else if (dose->is_array() && !dose->empty()) {
            for (const auto& d : *dose) {
                if (!d.is_number()) b.fail("dose_pC", "ladder entries must be numbers");
                sim.doses.push_back(d.get<double>());
            }
        } else {
            b.fail("dose_pC", "expects a number or a non-empty array of numbers");
        }
        if (const json* t = b.raw("target_nm")) {
            if (!t->is_array() || t->size() != 2 || !(*t)[0].is_number() || !(*t)[1].is_number())
                b.fail("target_nm", "expects [x, y]");
            sim.target_x = (*t)[0].get<double>();
            sim.target_y = (*t)[1].get<double>();
        }
        for (double d : sim.doses) {
            BeamParams probe = sim.beam;
            probe.dose_pC = d;
            checked(b, "dose_pC", [&] { probe.validate(); });
        }
        b.finish();
    }
    if (top.has("lattice")) {
        auto l = top.child("lattice");
        sim.lattice.cell_size = l.number("cell_size_nm", 1.0);
        sim.lattice.anneal_time = l.number("anneal_time_s", 660.0);
        const bool by_d = l.has("diffusion_constant_nm2_per_s"), by_n = l.has("n_jumps");
        if (by_d && by_n) l.fail("n_jumps", "give diffusion_constant_nm2_per_s or n_jumps, not both");
        if (by_n)
            sim.lattice.diffusion_constant =
                diffusion_constant_from_jumps(l.number("n_jumps"), sim.lattice.cell_size, sim.lattice.anneal_time);
        else
            sim.lattice.diffusion_constant = l.number("diffusion_constant_nm2_per_s", 17.0);
        sim.lattice.jumps_per_step = l.integer("jumps_per_step", 1);
        sim.lattice.unit_cell_volume = l.number("unit_cell_volume_nm3", units::diamond_unit_cell_volume_nm3);
        sim.lattice.top_surface_absorbing = l.boolean("top_surface_absorbing", true);
        checked(l, "cell_size_nm", [&] {
            sim.lattice.validate();
            capture_probability(sim.lattice);
        });
        l.finish();
    }
    if (top.has("export")) {
        auto e = top.child("export");
        sim.export_vacancies = e.boolean("vacancy_positions", false);
        e.finish();
    }
    checked(top, "geometry", [&] { sim.scenario_for(sim.doses.front(), "check").validate(); });
    return sim;
}

DistributionConfig parse_distribution(Section& parent, const char* key, DistributionConfig fallback) {
    const json* v = parent.raw(key);
    if (!v) return fallback;
    DistributionConfig d;
    if (v->is_number()) {
        d.kind = DistributionConfig::Kind::Point;
        d.value = v->get<double>();
        return d;
    }
    Section s(*v, parent.qualified(key), parent.text());
    if (s.has("file")) {
        d.kind = DistributionConfig::Kind::File;
        d.file = s.string("file");
        d.column = s.string("column", std::string(key));
    } else {
        d.kind = DistributionConfig::Kind::Gaussian;
        d.mean = s.number("mean");
        d.sigma = s.number("sigma");
        d.lower = s.maybe_number("lower");
        d.upper = s.maybe_number("upper");
    }
    s.finish();
    return d;
}

SensitivityConfig parse_sensitivity(Section s) {
    SensitivityConfig c;
    c.samples = s.integer("samples", c.samples);
    if (c.samples < 1) s.fail("samples", "must be >= 1");
    c.threshold_nT_per_sqrtHz = s.number("threshold_nT_per_sqrtHz", c.threshold_nT_per_sqrtHz);
    c.readout_window_ns = s.number("readout_window_ns", c.readout_window_ns);
    c.fixed_two_tau_us = s.maybe_number("two_tau_us");
    c.histogram_bins = static_cast<int>(s.integer("histogram_bins", c.histogram_bins));
    c.cdf_points = static_cast<int>(s.integer("cdf_points", c.cdf_points));
    if (c.histogram_bins < 1) s.fail("histogram_bins", "must be >= 1");
    if (c.cdf_points < 2) s.fail("cdf_points", "must be >= 2");
    c.t2_us = parse_distribution(s, "t2_us", c.t2_us);
    c.contrast = parse_distribution(s, "contrast", c.contrast);
    c.pl_sat_cps = parse_distribution(s, "pl_sat_cps", c.pl_sat_cps);
    if (s.has("joint_samples_file")) c.joint_samples_file = s.string("joint_samples_file");
    c.nv_depth_nm = s.number("nv_depth_nm", c.nv_depth_nm);
    c.dipole_kappa = s.number("dipole_kappa", c.dipole_kappa);
    if (!(c.threshold_nT_per_sqrtHz > 0.0)) s.fail("threshold_nT_per_sqrtHz", "must be positive");
    if (!(c.nv_depth_nm > 0.0)) s.fail("nv_depth_nm", "must be positive");
    if (!(c.dipole_kappa > 0.0)) s.fail("dipole_kappa", "must be positive");
    s.finish();
    return c;
}

std::array<std::int64_t, 5> parse_counts(Section& s, const char* key) {
    const json* v = s.raw(key);
    if (!v || !v->is_array() || v->size() != 5) s.fail(key, "expects five counts [n0, n1, n2, n3, n4]");
    std::array<std::int64_t, 5> out{};
    for (std::size_t i = 0; i < 5; ++i) {
        if (!(*v)[i].is_number_integer() || (*v)[i].get<std::int64_t>() < 0) s.fail(key, "counts must be non-negative integers");
        out[i] = (*v)[i].get<std::int64_t>();
    }
    return out;
}

MleConfig parse_mle(Section s) {
    MleConfig m;
    m.histogram = parse_counts(s, "histogram");
    if (s.has("control_histogram")) m.control = parse_counts(s, "control_histogram");
    m.systematic_sets = static_cast<int>(s.integer("systematic_sets", 0));
    if (m.systematic_sets < 0) s.fail("systematic_sets", "must be >= 0");
    s.finish();
    return m;
}

ojson distribution_json(const DistributionConfig& d) {
    switch (d.kind) {
        case DistributionConfig::Kind::Point:
            return d.value;
        case DistributionConfig::Kind::Gaussian: {
            ojson j{{"mean", d.mean}, {"sigma", d.sigma}};
            if (d.lower) j["lower"] = *d.lower;
            if (d.upper) j["upper"] = *d.upper;
            return j;
        }
        case DistributionConfig::Kind::File:
            return ojson{{"file", d.file}, {"column", d.column}};
    }
    return {};
}

ParamDistribution to_distribution(const DistributionConfig& d, double lo, double hi, const std::filesystem::path& base) {
    switch (d.kind) {
        case DistributionConfig::Kind::Point:
            return PointDist{d.value};
        case DistributionConfig::Kind::Gaussian:
            return TruncatedGaussian{d.mean, d.sigma, d.lower.value_or(lo), d.upper.value_or(hi)};
        case DistributionConfig::Kind::File: {
            std::ifstream in(base / d.file);
            if (!in) throw InvalidInput(fmt::format("cannot open sample file '{}'", (base / d.file).string()));
            return Empirical{read_sample_column_csv(in, d.column.c_str())};
        }
    }
    return PointDist{};
}

}  // namespace

Scenario SimulationConfig::scenario_for(double dose_pC, const std::string& name) const {
    Scenario s;
    s.name = name;
    s.geometry = geometry;
    s.layers = layers;
    s.beam = beam;
    s.beam.dose_pC = dose_pC;
    s.lattice = lattice;
    s.target = {target_x, target_y, 0.0};
    s.nitrogen_density_scale = nitrogen_density_scale;
    s.nitrogen_window_half_width = nitrogen_window_half_width;
    return s;
}

YieldSpec SensitivityConfig::yield_spec(const std::filesystem::path& base_dir) const {
    const double inf = std::numeric_limits<double>::infinity();
    YieldSpec y;
    y.t2_us = to_distribution(t2_us, 0.0, inf, base_dir);
    y.contrast = to_distribution(contrast, 0.0, 1.0, base_dir);
    y.pl_sat_cps = to_distribution(pl_sat_cps, 0.0, inf, base_dir);
    if (joint_samples_file) {
        std::ifstream in(base_dir / *joint_samples_file);
        if (!in) throw InvalidInput(fmt::format("cannot open joint sample file '{}'", (base_dir / *joint_samples_file).string()));
        y.joint = read_joint_samples_csv(in);
    }
    y.readout_window_ns = readout_window_ns;
    if (fixed_two_tau_us) {
        y.tau_policy = TauPolicy::Fixed;
        y.fixed_two_tau_us = *fixed_two_tau_us;
    }
    return y;
}

RunConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON (line {}): {}", line_at(text, e.byte ? e.byte - 1 : 0), e.what()));
    }
    Section top(root, "", text);
    RunConfig cfg;
    cfg.scenario = top.string("scenario", cfg.scenario);
    cfg.master_seed = top.seed("master_seed", cfg.master_seed);
    cfg.trials = top.integer("trials", cfg.trials);
    if (cfg.trials < 1) top.fail("trials", "must be >= 1");
    const auto threads = top.integer("threads", 1);
    if (threads < 1 || threads > 1024) top.fail("threads", "must lie in 1..1024");
    cfg.threads = static_cast<unsigned>(threads);
    if (top.has("output_dir")) cfg.output_dir = top.string("output_dir");
    if (top.has("geometry")) cfg.simulation = parse_simulation(top);
    if (top.has("sensitivity")) cfg.sensitivity = parse_sensitivity(top.child("sensitivity"));
    if (top.has("mle")) cfg.mle = parse_mle(top.child("mle"));
    top.finish();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput(fmt::format("cannot open config file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig cfg;
    try {
        cfg = parse_config(ss.str());
    } catch (const InvalidInput& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    return cfg;
}

ojson to_json(const RunConfig& cfg) {
    ojson j;
    j["scenario"] = cfg.scenario;
    j["master_seed"] = cfg.master_seed;
    j["trials"] = cfg.trials;
    j["threads"] = cfg.threads;
    if (cfg.output_dir) j["output_dir"] = *cfg.output_dir;
    if (const auto& s = cfg.simulation) {
        const auto& g = s->geometry;
        switch (g.kind) {
            case GeometryKind::TaperedPillar:
                j["geometry"] = {{"kind", "pillar"},
                                 {"top_diameter_nm", g.top_diameter},
                                 {"bottom_diameter_nm", g.bottom_diameter},
                                 {"height_nm", g.height},
                                 {"slab_depth_cutoff_nm", g.slab_depth_cutoff}};
                break;
            case GeometryKind::Mesa:
                j["geometry"] = {{"kind", "mesa"},
                                 {"side_nm", g.mesa_side},
                                 {"height_nm", g.height},
                                 {"slab_depth_cutoff_nm", g.slab_depth_cutoff}};
                break;
            case GeometryKind::Bulk:
                j["geometry"] = {{"kind", "bulk"}, {"slab_depth_cutoff_nm", g.slab_depth_cutoff}};
                break;
        }
        ojson layers = ojson::array();
        for (const auto& l : s->layers)
            layers.push_back({{"depth_nm", l.depth}, {"thickness_nm", l.thickness}, {"areal_density_per_cm2", l.areal_density_per_cm2}});
        j["layers"] = layers;
        j["nitrogen"] = {{"density_scale", s->nitrogen_density_scale}};
        if (s->nitrogen_window_half_width) j["nitrogen"]["window_half_width_nm"] = *s->nitrogen_window_half_width;
        ojson dose = s->doses.size() == 1 ? ojson(s->doses.front()) : ojson(s->doses);
        j["beam"] = {{"spot_fwhm_nm", s->beam.spot_diameter},
                     {"dose_pC", dose},
                     {"vacancies_per_electron_per_um", s->beam.vacancies_per_electron_per_um},
                     {"alpha", s->beam.alpha},
                     {"depth_cutoff_nm", s->beam.depth_cutoff},
                     {"target_nm", {s->target_x, s->target_y}}};
        j["lattice"] = {{"cell_size_nm", s->lattice.cell_size},
                        {"anneal_time_s", s->lattice.anneal_time},
                        {"diffusion_constant_nm2_per_s", s->lattice.diffusion_constant},
                        {"jumps_per_step", s->lattice.jumps_per_step},
                        {"unit_cell_volume_nm3", s->lattice.unit_cell_volume},
                        {"top_surface_absorbing", s->lattice.top_surface_absorbing}};
        j["export"] = {{"vacancy_positions", s->export_vacancies}};
    }
    if (const auto& s = cfg.sensitivity) {
        ojson o{{"samples", s->samples},
                {"threshold_nT_per_sqrtHz", s->threshold_nT_per_sqrtHz},
                {"readout_window_ns", s->readout_window_ns}};
        if (s->fixed_two_tau_us) o["two_tau_us"] = *s->fixed_two_tau_us;
        o["histogram_bins"] = s->histogram_bins;
        o["cdf_points"] = s->cdf_points;
        o["t2_us"] = distribution_json(s->t2_us);
        o["contrast"] = distribution_json(s->contrast);
        o["pl_sat_cps"] = distribution_json(s->pl_sat_cps);
        if (s->joint_samples_file) o["joint_samples_file"] = *s->joint_samples_file;
        o["nv_depth_nm"] = s->nv_depth_nm;
        o["dipole_kappa"] = s->dipole_kappa;
        j["sensitivity"] = o;
    }
    if (const auto& m = cfg.mle) {
        ojson o{{"histogram", m->histogram}};
        if (m->control) o["control_histogram"] = *m->control;
        o["systematic_sets"] = m->systematic_sets;
        j["mle"] = o;
    }
    return j;
}

std::string serialize(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace nvform::cli
