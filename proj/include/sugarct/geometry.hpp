#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace sugarct {

/// Fan-beam acquisition with a curved (equiangular) detector arc centred on the source.
///
/// Detector cell i sits at fan angle
///     gamma_i = detector_angular_offset_rad + (i - (n_detectors - 1) / 2) * pitch / SDD
/// measured counterclockwise from the central ray. View angles are source angles,
/// counterclockwise from +x.
struct FanBeamGeometry {
    double source_to_detector_mm = 0.0;
    double source_to_isocenter_mm = 0.0;
    std::size_t n_detectors = 0;
    double detector_pitch_mm = 0.0;
    double detector_angular_offset_rad = 0.0;
    std::vector<double> view_angles_rad;
    std::size_t image_n = 0;
    double pixel_size_mm = 0.0;
    /// Index stride used by the last subsample_views call, 1 otherwise.
    std::size_t view_stride = 1;

    std::size_t n_views() const noexcept { return view_angles_rad.size(); }
    double angular_pitch_rad() const noexcept { return detector_pitch_mm / source_to_detector_mm; }

    double detector_angle(std::size_t i) const noexcept
    {
        return detector_angular_offset_rad +
               (static_cast<double>(i) - 0.5 * static_cast<double>(n_detectors - 1)) * angular_pitch_rad();
    }

    /// Half opening angle of the fan, edge of outermost cell to the central ray (ignores offset).
    double fan_half_angle_rad() const noexcept
    {
        return 0.5 * static_cast<double>(n_detectors) * angular_pitch_rad();
    }

    double fov_radius_mm() const noexcept { return 0.5 * static_cast<double>(image_n) * pixel_size_mm; }

    /// Angular weight per view used by analytic reconstruction.
    double view_step_rad() const noexcept
    {
        if (view_angles_rad.size() < 2) return 2.0 * std::numbers::pi;
        return (view_angles_rad.back() - view_angles_rad.front()) /
               static_cast<double>(view_angles_rad.size() - 1);
    }

    bool operator==(const FanBeamGeometry&) const = default;

    /// Throws InvalidArgument naming the first violated invariant.
    void validate() const
    {
        using detail::require;
        require(std::isfinite(source_to_isocenter_mm) && source_to_isocenter_mm > 0.0,
                "geometry: source_to_isocenter_mm must be positive");
        require(std::isfinite(source_to_detector_mm) && source_to_detector_mm > source_to_isocenter_mm,
                "geometry: source_to_detector_mm must exceed source_to_isocenter_mm");
        require(n_detectors >= 1, "geometry: n_detectors must be >= 1");
        require(image_n >= 2, "geometry: image_n must be >= 2");
        require(std::isfinite(detector_pitch_mm) && detector_pitch_mm > 0.0, "geometry: detector pitch must be positive");
        require(std::isfinite(pixel_size_mm) && pixel_size_mm > 0.0, "geometry: pixel size must be positive");
        require(std::isfinite(detector_angular_offset_rad), "geometry: detector offset must be finite");
        require(!view_angles_rad.empty(), "geometry: at least one view angle required");
        for (std::size_t i = 0; i < view_angles_rad.size(); ++i) {
            require(std::isfinite(view_angles_rad[i]), "geometry: view angles must be finite");
            if (i > 0)
                require(view_angles_rad[i] > view_angles_rad[i - 1], "geometry: view angles must be strictly increasing");
        }
        require(fov_radius_mm() < source_to_isocenter_mm, "geometry: image field of view must not contain the source");
    }
};

/// Uniformly spaced source angles starting at 0. A 360 degree arc is treated as periodic
/// (step = arc / n); shorter arcs include both endpoints (step = arc / (n - 1)).
inline std::vector<double> uniform_view_angles(std::size_t n_views, double arc_deg)
{
    detail::require(n_views >= 1, "uniform_view_angles: n_views must be >= 1");
    detail::require(arc_deg > 0.0 && arc_deg <= 360.0, "uniform_view_angles: arc must be in (0, 360]");
    const double arc = arc_deg * std::numbers::pi / 180.0;
    const bool full = arc_deg >= 360.0;
    const double step = full ? arc / static_cast<double>(n_views)
                             : (n_views > 1 ? arc / static_cast<double>(n_views - 1) : 0.0);
    std::vector<double> angles(n_views);
    for (std::size_t i = 0; i < n_views; ++i) angles[i] = step * static_cast<double>(i);
    return angles;
}

namespace clinical_scanner {
inline constexpr double source_to_detector_mm = 1085.6;
inline constexpr double source_to_isocenter_mm = 595.0;
inline constexpr std::size_t n_detectors = 736;
inline constexpr double detector_pitch_mm = 1.2858;
inline constexpr double detector_offset_rad = 0.0013;
inline constexpr std::size_t n_views = 946;
inline constexpr double arc_deg = 151.875;
inline constexpr std::size_t image_n = 512;
inline constexpr double pixel_size_mm = 0.9;
inline constexpr std::size_t few_view_count = 36;
} // namespace clinical_scanner

/// Full-scale clinical scanner: 946 limited-angle views over 151.875 degrees.
inline FanBeamGeometry make_clinical_geometry()
{
    namespace p = clinical_scanner;
    FanBeamGeometry g;
    g.source_to_detector_mm = p::source_to_detector_mm;
    g.source_to_isocenter_mm = p::source_to_isocenter_mm;
    g.n_detectors = p::n_detectors;
    g.detector_pitch_mm = p::detector_pitch_mm;
    g.detector_angular_offset_rad = p::detector_offset_rad;
    g.view_angles_rad = uniform_view_angles(p::n_views, p::arc_deg);
    g.image_n = p::image_n;
    g.pixel_size_mm = p::pixel_size_mm;
    return g;
}

/// Keeps `keep` views at indices 0, s, 2s, ... with s = floor(total / keep).
inline FanBeamGeometry subsample_views(const FanBeamGeometry& g, std::size_t keep)
{
    const std::size_t total = g.view_angles_rad.size();
    if (keep < 1 || keep > total)
        throw InvalidArgument("subsample_views: keep=" + std::to_string(keep) + " outside [1, " +
                              std::to_string(total) + "]");
    const std::size_t stride = total / keep;
    FanBeamGeometry out = g;
    out.view_angles_rad.resize(keep);
    for (std::size_t i = 0; i < keep; ++i) out.view_angles_rad[i] = g.view_angles_rad[i * stride];
    out.view_stride = g.view_stride * stride;
    return out;
}

/// Scaled-down scanner for desk experiments. Pixel size and detector pitch match the
/// clinical scanner while source distances shrink with image_n / 512, so the SDD/SID
/// ratio and the relative field of view are preserved. The detector count is the
/// scaled clinical count, grown if needed until the fan covers the inscribed circle.
inline FanBeamGeometry make_desk_geometry(std::size_t image_n, std::size_t n_views, double arc_deg)
{
    namespace p = clinical_scanner;
    detail::require(image_n >= 16, "make_desk_geometry: image_n must be >= 16");
    detail::require(n_views >= 1, "make_desk_geometry: n_views must be >= 1");
    detail::require(arc_deg > 0.0 && arc_deg <= 360.0, "make_desk_geometry: arc_deg must be in (0, 360]");

    const double s = static_cast<double>(image_n) / static_cast<double>(p::image_n);
    FanBeamGeometry g;
    g.source_to_detector_mm = p::source_to_detector_mm * s;
    g.source_to_isocenter_mm = p::source_to_isocenter_mm * s;
    g.detector_pitch_mm = p::detector_pitch_mm;
    g.detector_angular_offset_rad = 0.0;
    g.image_n = image_n;
    g.pixel_size_mm = p::pixel_size_mm;
    g.n_detectors = static_cast<std::size_t>(std::ceil(static_cast<double>(p::n_detectors) * s));
    const double needed = std::asin(g.fov_radius_mm() / g.source_to_isocenter_mm);
    while (g.fan_half_angle_rad() - 0.5 * g.angular_pitch_rad() < needed) ++g.n_detectors;
    g.view_angles_rad = uniform_view_angles(n_views, arc_deg);
    g.validate();
    return g;
}

/// Same scanner and field of view, reconstructed on a coarser (or finer) pixel grid.
inline FanBeamGeometry with_image_size(const FanBeamGeometry& g, std::size_t image_n)
{
    detail::require(image_n >= 2, "with_image_size: image_n must be >= 2");
    FanBeamGeometry out = g;
    out.pixel_size_mm = g.pixel_size_mm * static_cast<double>(g.image_n) / static_cast<double>(image_n);
    out.image_n = image_n;
    return out;
}

} // namespace sugarct
