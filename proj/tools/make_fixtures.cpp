// Regenerates the synthetic inputs under data/fixtures.
//   make_fixtures <output-dir> [seed]

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <fmt/ostream.h>

#include "nvform/estimators.hpp"
#include "nvform/localization.hpp"
#include "nvform/photonics.hpp"
#include "nvform/rng.hpp"

namespace fs = std::filesystem;
using namespace nvform;

namespace {

std::ofstream create(const fs::path& p) {
    std::ofstream os(p);
    if (!os) {
        std::cerr << "cannot write " << p << "\n";
        std::exit(2);
    }
    return os;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_fixtures <output-dir> [seed]\n";
        return 2;
    }
    const fs::path dir = argv[1];
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 20240611;
    fs::create_directories(dir);

    const SyntheticMesaSpec spec;
    const auto mesa = render_synthetic_mesa(spec, rng::derive(seed, {1}));
    {
        auto os = create(dir / "mesa_image.txt");
        write_image(os, mesa.image);
        auto ts = create(dir / "mesa_targets.csv");
        ts << "x_nm,y_nm\n";
        for (const auto& t : mesa.targets) fmt::print(ts, "{:.3f},{:.3f}\n", t.x, t.y);
    }

    // Registration markers: design grid, detected with per-axis scatter sigma_sys.
    {
        auto eng = rng::make_engine(rng::derive(seed, {2}));
        std::normal_distribution<double> noise(0.0, spec.sigma_sys);
        auto os = create(dir / "calibration.csv");
        os << "detected_x_nm,detected_y_nm,design_x_nm,design_y_nm\n";
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                const double x = 5000.0 * i, y = 4000.0 * j;
                fmt::print(os, "{:.3f},{:.3f},{:.3f},{:.3f}\n", x + noise(eng), y + noise(eng), x, y);
            }
    }

    {
        const auto h = sample_histogram(2.0, 30, rng::derive(seed, {3}));
        auto os = create(dir / "orientation_histogram.csv");
        os << "l,count\n";
        for (int l = 0; l <= 4; ++l) fmt::print(os, "{},{}\n", l, h.counts[static_cast<std::size_t>(l)]);
    }

    {
        auto os = create(dir / "efficiency_map_480nm.csv");
        write_efficiency_map_csv(os, synthetic_efficiency_map(480.0, 0.6, 180.0));
    }

    // Saturation curve with PL_sat 1.056 Mcps, knee near 1 mW, 2% multiplicative noise.
    {
        auto eng = rng::make_engine(rng::derive(seed, {4}));
        std::normal_distribution<double> noise(0.0, 0.02);
        auto os = create(dir / "saturation.csv");
        os << "P_mW,PL_cps\n";
        for (double p : {0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0}) {
            const double pl = saturation_model(p, 1.056e6, 1.1e6, 1.5e4);
            fmt::print(os, "{},{:.1f}\n", p, pl * (1.0 + noise(eng)));
        }
    }
    std::cout << "fixtures written to " << dir << "\n";
    return 0;
}
