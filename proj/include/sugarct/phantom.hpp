#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "grid.hpp"

namespace sugarct {

/// Ellipse in normalized image coordinates: the image spans [-1, 1] on both axes,
/// x to the right and y up. Angle is counterclockwise in degrees.
struct Ellipse {
    double intensity;
    double semi_x;
    double semi_y;
    double center_x;
    double center_y;
    double angle_deg;
};

/// The ten-ellipse head phantom with the high-contrast intensity table, whose values lie in [0, 1].
/// The lateral pair (entries 2, 3) and the small lower inserts (7, 9) are not mirror images,
/// so the phantom is only left-right symmetric above and outside them.
inline const std::array<Ellipse, 10>& shepp_logan_ellipses()
{
    static const std::array<Ellipse, 10> table{{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    }};
    return table;
}

/// Rasterizes ellipses by averaging `supersample`^2 point samples per pixel.
/// Sample coordinates are formed from integers so mirrored samples are exact negatives.
inline Grid render_ellipses(std::span<const Ellipse> ellipses, std::size_t n, std::size_t supersample = 4)
{
    Grid out(n, n);
    const auto total = static_cast<long>(n * supersample);
    std::vector<double> coord(static_cast<std::size_t>(total));
    for (long m = 0; m < total; ++m)
        coord[static_cast<std::size_t>(m)] = static_cast<double>(2 * m + 1 - total) / static_cast<double>(total);

    const double inv = 1.0 / static_cast<double>(supersample * supersample);
    for (const Ellipse& e : ellipses) {
        const double phi = e.angle_deg * std::numbers::pi / 180.0;
        const double cp = std::cos(phi), sp = std::sin(phi);
        const double ia2 = 1.0 / (e.semi_x * e.semi_x), ib2 = 1.0 / (e.semi_y * e.semi_y);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                int hits = 0;
                for (std::size_t j = 0; j < supersample; ++j) {
                    // row 0 is the top: flip the sample index so y increases upward
                    const double y = -coord[r * supersample + j];
                    for (std::size_t k = 0; k < supersample; ++k) {
                        const double x = coord[c * supersample + k];
                        const double dx = x - e.center_x, dy = y - e.center_y;
                        const double u = dx * cp + dy * sp;
                        const double v = -dx * sp + dy * cp;
                        if (u * u * ia2 + v * v * ib2 <= 1.0) ++hits;
                    }
                }
                if (hits) out(r, c) += e.intensity * static_cast<double>(hits) * inv;
            }
        }
    }
    return out;
}

inline Image shepp_logan(std::size_t n, double pixel_size_mm = 1.0)
{
    detail::require(n >= 16, "shepp_logan: n must be >= 16");
    const auto& table = shepp_logan_ellipses();
    Grid g = render_ellipses(table, n);
    for (double& v : g.values) v = std::clamp(v, 0.0, 1.0);
    return Image(std::move(g), pixel_size_mm);
}

enum class PhantomKind { shepp_logan, random_ellipses };

inline PhantomKind parse_phantom_kind(const std::string& s)
{
    if (s == "shepp_logan" || s == "shepp-logan") return PhantomKind::shepp_logan;
    if (s == "random_ellipses" || s == "random-ellipses") return PhantomKind::random_ellipses;
    throw InvalidArgument("unknown phantom kind '" + s + "' (expected shepp_logan or random_ellipses)");
}
inline std::string to_string(PhantomKind k) { return k == PhantomKind::shepp_logan ? "shepp_logan" : "random_ellipses"; }

struct PhantomSpec {
    PhantomKind kind = PhantomKind::random_ellipses;
    std::size_t n = 64;
    std::uint64_t seed = 0;
    std::size_t n_ellipses = 6;
    double intensity_min = 0.1;
    double intensity_max = 0.6;
    double clip_min = 0.0;
    double clip_max = 1.0;

    void validate() const
    {
        detail::require(n >= 16, "phantom: n must be >= 16");
        detail::require(std::isfinite(intensity_min) && std::isfinite(intensity_max) && intensity_min <= intensity_max,
                        "phantom: intensity range must be finite and ordered");
        detail::require(std::isfinite(clip_min) && std::isfinite(clip_max) && clip_min <= clip_max,
                        "phantom: clip range must be finite and ordered");
    }
};

/// Ellipses drawn for a random phantom: centers inside radius 0.6, semi-axes in [0.06, 0.35],
/// uniform orientation and intensity. Depends only on the seed and the other PhantomSpec fields.
inline std::vector<Ellipse> random_ellipses(const PhantomSpec& spec)
{
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Ellipse> out;
    out.reserve(spec.n_ellipses);
    for (std::size_t i = 0; i < spec.n_ellipses; ++i) {
        const double rad = 0.6 * std::sqrt(unit(rng));
        const double ang = 2.0 * std::numbers::pi * unit(rng);
        Ellipse e{};
        e.center_x = rad * std::cos(ang);
        e.center_y = rad * std::sin(ang);
        e.semi_x = 0.06 + 0.29 * unit(rng);
        e.semi_y = 0.06 + 0.29 * unit(rng);
        e.angle_deg = 180.0 * unit(rng);
        e.intensity = spec.intensity_min + (spec.intensity_max - spec.intensity_min) * unit(rng);
        out.push_back(e);
    }
    return out;
}

inline Image random_ellipse_phantom(const PhantomSpec& spec, double pixel_size_mm = 1.0)
{
    spec.validate();
    const auto ellipses = random_ellipses(spec);
    Grid g = render_ellipses(ellipses, spec.n);
    for (double& v : g.values) v = std::clamp(v, spec.clip_min, spec.clip_max);
    return Image(std::move(g), pixel_size_mm);
}

inline Image make_phantom(const PhantomSpec& spec, double pixel_size_mm = 1.0)
{
    if (spec.kind == PhantomKind::shepp_logan) return shepp_logan(spec.n, pixel_size_mm);
    return random_ellipse_phantom(spec, pixel_size_mm);
}

/// Averages non-overlapping factor x factor blocks.
inline Image block_average(const Image& x, std::size_t factor)
{
    detail::require(factor >= 1 && x.n() % factor == 0, "block_average: size must be divisible by factor");
    const std::size_t m = x.n() / factor;
    Image out(m, x.pixel_size_mm * static_cast<double>(factor));
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t r = 0; r < x.n(); ++r)
        for (std::size_t c = 0; c < x.n(); ++c) out(r / factor, c / factor) += x(r, c) * inv;
    return out;
}

} // namespace sugarct
