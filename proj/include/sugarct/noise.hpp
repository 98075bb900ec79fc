#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "grid.hpp"

namespace sugarct {

enum class NoiseKind { gaussian, poisson_counts };

inline NoiseKind parse_noise_kind(const std::string& s)
{
    if (s == "gaussian") return NoiseKind::gaussian;
    if (s == "poisson-counts" || s == "poisson_counts" || s == "poisson") return NoiseKind::poisson_counts;
    throw InvalidArgument("unknown noise kind '" + s + "' (expected gaussian or poisson-counts)");
}
inline std::string to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "poisson-counts"; }

struct NoiseResult {
    Sinogram sinogram;
    /// Detector readings that drew zero counts and were raised to one.
    std::size_t clamped = 0;
};

/// gaussian: adds N(0, level^2) per element.
/// poisson-counts: counts ~ Poisson(level * exp(-p)), p' = log(level / counts).
inline NoiseResult add_noise(const Sinogram& s, NoiseKind kind, double level, std::uint64_t seed)
{
    detail::require(std::isfinite(level) && level >= 0.0, "add_noise: level must be >= 0");
    NoiseResult out{s, 0};
    std::mt19937_64 rng(seed);
    auto& v = out.sinogram.data.values;
    if (kind == NoiseKind::gaussian) {
        if (level == 0.0) return out;
        std::normal_distribution<double> n(0.0, level);
        for (double& e : v) e += n(rng);
        return out;
    }
    detail::require(level > 0.0, "add_noise: poisson-counts needs a positive incident intensity");
    for (double& e : v) {
        std::poisson_distribution<std::int64_t> p(std::max(level * std::exp(-e), 1e-300));
        auto counts = p(rng);
        if (counts <= 0) {
            counts = 1;
            ++out.clamped;
        }
        e = std::log(level / static_cast<double>(counts));
    }
    return out;
}

} // namespace sugarct
