#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"
#include "sparse.hpp"

namespace sugarct {

namespace detail {

inline void require_image_matches(const Image& x, const FanBeamGeometry& g, const char* op)
{
    if (x.n() != g.image_n || x.data.cols != g.image_n)
        throw InvalidArgument(std::string(op) + ": image is " + std::to_string(x.data.rows) + "x" +
                              std::to_string(x.data.cols) + ", geometry expects " + std::to_string(g.image_n));
}

inline void require_sinogram_matches(const Sinogram& s, const FanBeamGeometry& g, const char* op)
{
    if (s.n_views() != g.n_views() || s.n_detectors() != g.n_detectors)
        throw InvalidArgument(std::string(op) + ": sinogram is " + std::to_string(s.n_views()) + "x" +
                              std::to_string(s.n_detectors()) + ", geometry expects " +
                              std::to_string(g.n_views()) + "x" + std::to_string(g.n_detectors));
}

/// Visits every (pixel, weight) pair of the Joseph interpolation along one ray.
/// The same traversal drives the forward projector and its transpose, which keeps
/// them exact adjoints of each other.
template <class Visit>
void joseph_ray(const FanBeamGeometry& g, double sx, double sy, double dx, double dy, Visit&& visit)
{
    const std::size_t n = g.image_n;
    const double ps = g.pixel_size_mm;
    const double half = 0.5 * static_cast<double>(n - 1);
    const long last = static_cast<long>(n) - 1;

    if (std::abs(dx) >= std::abs(dy)) {
        const double step = ps / std::abs(dx);
        for (std::size_t c = 0; c < n; ++c) {
            const double x = (static_cast<double>(c) - half) * ps;
            const double t = (x - sx) / dx;
            const double y = sy + t * dy;
            const double fr = half - y / ps;
            const double f0 = std::floor(fr);
            const long r0 = static_cast<long>(f0);
            const double w = fr - f0;
            if (r0 >= 0 && r0 <= last) visit(static_cast<std::size_t>(r0) * n + c, (1.0 - w) * step);
            if (r0 + 1 >= 0 && r0 + 1 <= last) visit(static_cast<std::size_t>(r0 + 1) * n + c, w * step);
        }
    } else {
        const double step = ps / std::abs(dy);
        for (std::size_t r = 0; r < n; ++r) {
            const double y = (half - static_cast<double>(r)) * ps;
            const double t = (y - sy) / dy;
            const double x = sx + t * dx;
            const double fc = x / ps + half;
            const double f0 = std::floor(fc);
            const long c0 = static_cast<long>(f0);
            const double w = fc - f0;
            if (c0 >= 0 && c0 <= last) visit(r * n + static_cast<std::size_t>(c0), (1.0 - w) * step);
            if (c0 + 1 >= 0 && c0 + 1 <= last) visit(r * n + static_cast<std::size_t>(c0 + 1), w * step);
        }
    }
}

template <class Visit>
void for_each_ray(const FanBeamGeometry& g, Visit&& visit)
{
    const double R = g.source_to_isocenter_mm;
    for (std::size_t v = 0; v < g.n_views(); ++v) {
        const double beta = g.view_angles_rad[v];
        const double sx = R * std::cos(beta);
        const double sy = R * std::sin(beta);
        for (std::size_t d = 0; d < g.n_detectors; ++d) {
            const double theta = beta + std::numbers::pi + g.detector_angle(d);
            visit(v, d, sx, sy, std::cos(theta), std::sin(theta));
        }
    }
}

} // namespace detail

/// Line integrals (mm x 1/mm) along every source-to-detector ray, Joseph interpolation
/// along the dominant axis. Pixels outside the grid are zero.
inline Sinogram forward_project(const Image& x, const FanBeamGeometry& g)
{
    detail::require_image_matches(x, g, "forward_project");
    Sinogram out(g.n_views(), g.n_detectors);
    const double* img = x.data.values.data();
    detail::for_each_ray(g, [&](std::size_t v, std::size_t d, double sx, double sy, double dx, double dy) {
        double sum = 0.0;
        detail::joseph_ray(g, sx, sy, dx, dy, [&](std::size_t idx, double w) { sum += w * img[idx]; });
        out(v, d) = sum;
    });
    return out;
}

/// Exact transpose of forward_project.
inline Image backproject(const Sinogram& s, const FanBeamGeometry& g)
{
    detail::require_sinogram_matches(s, g, "backproject");
    Image out(g.image_n, g.pixel_size_mm);
    double* img = out.data.values.data();
    detail::for_each_ray(g, [&](std::size_t v, std::size_t d, double sx, double sy, double dx, double dy) {
        const double val = s(v, d);
        if (val == 0.0) return;
        detail::joseph_ray(g, sx, sy, dx, dy, [&](std::size_t idx, double w) { img[idx] += w * val; });
    });
    return out;
}

/// Interpolation weights of forward_project as a sparse matrix (rays x pixels).
inline SparseRows assemble_projection_matrix(const FanBeamGeometry& g)
{
    SparseRowsBuilder b(g.n_views() * g.n_detectors, g.image_n * g.image_n);
    detail::for_each_ray(g, [&](std::size_t, std::size_t, double sx, double sy, double dx, double dy) {
        detail::joseph_ray(g, sx, sy, dx, dy, [&](std::size_t idx, double w) { b.add(idx, w); });
        b.end_row();
    });
    return b.finish();
}

/// Caches are built only below this many estimated nonzeros (about 12 bytes each).
inline constexpr std::size_t kMaxCachedWeights = 40'000'000;

/// The system matrix A as an operator object: apply() = A, adjoint() = A^T.
/// Small geometries cache the interpolation weights; results are identical either way
/// up to summation order of exactly the same products.
class FanBeamProjector {
public:
    using domain_type = Image;
    using range_type = Sinogram;

    explicit FanBeamProjector(FanBeamGeometry g) : geometry_(std::move(g))
    {
        geometry_.validate();
        const std::size_t estimate = 2 * geometry_.n_views() * geometry_.n_detectors * geometry_.image_n;
        if (estimate <= kMaxCachedWeights)
            matrix_ = std::make_shared<const SparseRows>(assemble_projection_matrix(geometry_));
    }

    const FanBeamGeometry& geometry() const noexcept { return geometry_; }

    Sinogram apply(const Image& x) const
    {
        if (!matrix_) return forward_project(x, geometry_);
        detail::require_image_matches(x, geometry_, "forward_project");
        Sinogram out = zero_range();
        matrix_->multiply(x.data.span(), out.data.span());
        return out;
    }

    Image adjoint(const Sinogram& s) const
    {
        if (!matrix_) return backproject(s, geometry_);
        detail::require_sinogram_matches(s, geometry_, "backproject");
        Image out = zero_domain();
        matrix_->multiply_transpose_add(s.data.span(), out.data.span());
        return out;
    }

    Image zero_domain() const { return Image(geometry_.image_n, geometry_.pixel_size_mm); }
    Sinogram zero_range() const { return Sinogram(geometry_.n_views(), geometry_.n_detectors); }

private:
    FanBeamGeometry geometry_;
    std::shared_ptr<const SparseRows> matrix_;
};

} // namespace sugarct
