#include "nvform/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "nvform/errors.hpp"
#include "nvform/parallel.hpp"
#include "nvform/rng.hpp"

namespace nvform {

std::int64_t LatticeConfig::total_jumps() const {
    return static_cast<std::int64_t>(std::llround(jumps_from_diffusion_constant(diffusion_constant, cell_size, anneal_time)));
}

void LatticeConfig::validate() const {
    if (!(cell_size > 0.0)) throw InvalidInput("lattice cell_size must be positive");
    if (!(anneal_time > 0.0)) throw InvalidInput("anneal_time must be positive");
    if (!(diffusion_constant >= 0.0) || !std::isfinite(diffusion_constant))
        throw InvalidInput("diffusion_constant must be non-negative");
    if (jumps_per_step < 1) throw InvalidInput("jumps_per_step must be >= 1");
    if (!(unit_cell_volume > 0.0)) throw InvalidInput("unit_cell_volume must be positive");
}

double diffusion_constant_from_jumps(double n_jumps, double cell_size, double anneal_time) {
    return cell_size * cell_size * n_jumps / (6.0 * anneal_time);
}

double jumps_from_diffusion_constant(double diffusion_constant, double cell_size, double anneal_time) {
    return 6.0 * diffusion_constant * anneal_time / (cell_size * cell_size);
}

double capture_probability(const LatticeConfig& cfg) {
    if (!(cfg.cell_size > 0.0) || !(cfg.unit_cell_volume > 0.0))
        throw InvalidInput("capture_probability needs positive cell size and unit-cell volume");
    const double r = cfg.cell_size * cfg.cell_size * cfg.cell_size / cfg.unit_cell_volume;
    const double p = (16.0 * r) / ((8.0 * r) * (8.0 * r) / 2.0);
    if (p > 1.0)
        throw InvalidInput("coarse-grained cell too small: capture probability " + std::to_string(p) + " exceeds 1");
    return p;
}

namespace {

constexpr std::int64_t key_offset = std::int64_t{1} << 20;
constexpr std::int64_t key_limit = key_offset - 1;

std::uint64_t cell_key(std::int64_t i, std::int64_t j, std::int64_t k) {
    return (static_cast<std::uint64_t>(i + key_offset) << 42) | (static_cast<std::uint64_t>(j + key_offset) << 21) |
           static_cast<std::uint64_t>(k + key_offset);
}

std::int64_t cell_index(double coord, double a) { return static_cast<std::int64_t>(std::floor(coord / a)); }

// Vacancy on the lattice: integer cell plus a fixed sub-cell offset, so that
// positions are exact multiples of a away from the start.
struct Walker {
    std::int64_t i, j, k;
    double fx, fy, fz;
};

Point3 position(const Walker& w, double a) { return {w.i * a + w.fx, w.j * a + w.fy, w.k * a + w.fz}; }

// Nitrogen indices bucketed by coarse cell.
class NitrogenCells {
public:
    NitrogenCells(const NitrogenEnsemble& n, double a) {
        order_.resize(n.size());
        std::iota(order_.begin(), order_.end(), 0u);
        std::vector<std::uint64_t> keys(n.size());
        for (std::size_t m = 0; m < n.size(); ++m) {
            const auto& p = n.positions[m];
            const auto i = cell_index(p.x, a), j = cell_index(p.y, a), k = cell_index(p.z, a);
            if (std::max({std::abs(i), std::abs(j), std::abs(k)}) > key_limit)
                throw InvalidInput("nitrogen position outside the addressable lattice");
            keys[m] = cell_key(i, j, k);
            k_min_ = std::min(k_min_, k);
            k_max_ = std::max(k_max_, k);
        }
        std::stable_sort(order_.begin(), order_.end(), [&](auto l, auto r) { return keys[l] < keys[r]; });
        buckets_.reserve(n.size());
        for (std::size_t s = 0; s < order_.size();) {
            std::size_t e = s;
            while (e < order_.size() && keys[order_[e]] == keys[order_[s]]) ++e;
            buckets_.emplace(keys[order_[s]], Span{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(e - s)});
            s = e;
        }
    }

    bool may_hold(std::int64_t k) const { return k >= k_min_ && k <= k_max_; }

    // Indices into the ensemble, or empty.
    std::pair<const std::uint32_t*, std::size_t> find(std::int64_t i, std::int64_t j, std::int64_t k) const {
        if (std::max(std::abs(i), std::abs(j)) > key_limit) return {nullptr, 0};
        const auto it = buckets_.find(cell_key(i, j, k));
        if (it == buckets_.end()) return {nullptr, 0};
        return {order_.data() + it->second.start, it->second.count};
    }

private:
    struct Span {
        std::uint32_t start;
        std::uint32_t count;
    };
    std::vector<std::uint32_t> order_;
    std::unordered_map<std::uint64_t, Span> buckets_;
    std::int64_t k_min_ = std::numeric_limits<std::int64_t>::max();
    std::int64_t k_max_ = std::numeric_limits<std::int64_t>::min();
};

}  // namespace

AnnealOutcome run_anneal(const DeviceGeometry& geom, NitrogenEnsemble& nitrogen, const VacancyEnsemble& vacancies,
                         const LatticeConfig& cfg, std::uint64_t rng_seed) {
    geom.validate();
    cfg.validate();
    if (nitrogen.consumed.size() != nitrogen.positions.size()) nitrogen.consumed.assign(nitrogen.positions.size(), 0);

    const double a = cfg.cell_size;
    const double p_cap = capture_probability(cfg);
    const std::int64_t n_total = cfg.total_jumps();

    AnnealOutcome out;
    out.n_initial_vacancies = static_cast<std::int64_t>(vacancies.positions.size());

    std::vector<Walker> walkers;
    walkers.reserve(vacancies.positions.size());
    for (const auto& p : vacancies.positions) {
        if (!contains(geom, p)) throw InvalidInput("vacancy initially outside the device geometry");
        Walker w;
        w.i = cell_index(p.x, a);
        w.j = cell_index(p.y, a);
        w.k = cell_index(p.z, a);
        w.fx = p.x - w.i * a;
        w.fy = p.y - w.j * a;
        w.fz = p.z - w.k * a;
        walkers.push_back(w);
    }

    const NitrogenCells cells(nitrogen, a);
    auto eng = rng::make_engine(rng_seed);
    rng::BoundedDraw direction(6), orientation(4);
    std::vector<std::uint8_t> alive(walkers.size(), 1);

    // Returns true when the walker formed an NV.
    auto try_capture = [&](const Walker& w, std::int64_t step) {
        if (!cells.may_hold(w.k)) return false;
        const auto [idx, count] = cells.find(w.i, w.j, w.k);
        for (std::size_t m = 0; m < count; ++m) {
            const auto n = idx[m];
            if (nitrogen.consumed[n]) continue;
            if (rng::uniform01(eng) < p_cap) {
                nitrogen.consumed[n] = 1;
                out.nv_records.push_back({nitrogen.positions[n], static_cast<int>(orientation(eng)), step});
                return true;
            }
        }
        return false;
    };

    std::vector<std::size_t> active;
    active.reserve(walkers.size());
    for (std::size_t v = 0; v < walkers.size(); ++v) {
        if (try_capture(walkers[v], 0))
            alive[v] = 0;
        else
            active.push_back(v);
    }

    const bool top_absorbs = cfg.top_surface_absorbing;
    std::int64_t done = 0;
    while (done < n_total && !active.empty()) {
        const std::int64_t block = std::min(cfg.jumps_per_step, n_total - done);
        for (const auto v : active) {
            Walker& w = walkers[v];
            for (std::int64_t b = 0; b < block; ++b) {
                const auto d = direction(eng);
                std::int64_t* axis = d < 2 ? &w.i : (d < 4 ? &w.j : &w.k);
                const std::int64_t step = (d & 1u) ? 1 : -1;
                *axis += step;
                const Point3 p = position(w, a);
                if (contains(geom, p)) continue;
                if (!top_absorbs && p.z <= 0.0) {
                    *axis -= step;
                    continue;
                }
                alive[v] = 0;
                ++out.n_absorbed_boundary;
                break;
            }
            if (alive[v] && try_capture(w, done + block)) alive[v] = 0;
        }
        std::erase_if(active, [&](std::size_t v) { return !alive[v]; });
        done += block;
    }

    out.n_surviving = static_cast<std::int64_t>(active.size());
    out.surviving_positions.reserve(active.size());
    for (const auto v : active) out.surviving_positions.push_back(position(walkers[v], a));
    return out;
}

void Scenario::validate() const {
    geometry.validate();
    for (const auto& layer : layers) layer.validate_for(geometry);
    beam.validate();
    lattice.validate();
    if (nitrogen_density_scale < 0.0) throw InvalidInput("nitrogen_density_scale must be non-negative");
    if (nitrogen_window_half_width && !(*nitrogen_window_half_width > 0.0))
        throw InvalidInput("nitrogen window half-width must be positive");
    if (geometry.kind == GeometryKind::Bulk && !nitrogen_window_half_width)
        throw InvalidInput("bulk scenario needs nitrogen_window_half_width");
    if (target.z != 0.0) throw InvalidInput("beam target must lie on the top surface (z = 0)");
    if (!contains(geometry, Point3{target.x, target.y, 1e-9}))
        throw InvalidInput("beam target is outside the device top face");
}

std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t index) {
    return rng::derive(seed, {rng::stream::trial, index});
}

AnnealOutcome simulate_trial(const Scenario& s, std::uint64_t seed) {
    std::optional<SamplingWindow> window;
    if (s.nitrogen_window_half_width) window = SamplingWindow{*s.nitrogen_window_half_width, s.target.x, s.target.y};
    auto nitrogen =
        sample_nitrogen(s.geometry, s.layers, rng::derive(seed, {rng::stream::nitrogen}), window, s.nitrogen_density_scale);
    const auto vacancies = generate_vacancies(s.beam, s.geometry, s.target, rng::derive(seed, {rng::stream::vacancies}));
    return run_anneal(s.geometry, nitrogen, vacancies, s.lattice, rng::derive(seed, {rng::stream::walk}));
}

EnsembleSummary summarize(const std::vector<AnnealOutcome>& outcomes) {
    EnsembleSummary s;
    s.n_trials = static_cast<std::int64_t>(outcomes.size());
    if (outcomes.empty()) return s;
    double sum = 0.0;
    for (const auto& o : outcomes) sum += static_cast<double>(o.nv_records.size());
    s.mean_nv = sum / static_cast<double>(outcomes.size());
    if (outcomes.size() > 1) {
        double ss = 0.0;
        for (const auto& o : outcomes) {
            const double d = static_cast<double>(o.nv_records.size()) - s.mean_nv;
            ss += d * d;
        }
        const double n = static_cast<double>(outcomes.size());
        s.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return s;
}

EnsembleResult simulate_ensemble(const Scenario& scenario, std::int64_t n_trials, std::uint64_t seed,
                                 unsigned threads) {
    if (n_trials < 1) throw InvalidInput("n_trials must be >= 1");
    scenario.validate();
    EnsembleResult r;
    r.outcomes.resize(static_cast<std::size_t>(n_trials));
    parallel_for(r.outcomes.size(), threads,
                 [&](std::size_t t) { r.outcomes[t] = simulate_trial(scenario, trial_seed(seed, t)); });
    r.summary = summarize(r.outcomes);
    return r;
}

}  // namespace nvform
