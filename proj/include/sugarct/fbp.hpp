#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"
#include "projector.hpp"

namespace sugarct {

enum class FilterKind { ramp, hann };

inline FilterKind parse_filter_kind(const std::string& s)
{
    if (s == "ramp") return FilterKind::ramp;
    if (s == "hann") return FilterKind::hann;
    throw InvalidArgument("unknown filter kind '" + s + "' (expected ramp or hann)");
}

inline std::string to_string(FilterKind k) { return k == FilterKind::ramp ? "ramp" : "hann"; }

namespace detail {

// The FFTW planner is not re-entrant.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

inline std::size_t next_pow2(std::size_t v)
{
    std::size_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

/// Pixel-driven fan-beam backprojection traversal, pixel-major. For each pixel and view,
/// reports the detector cells bracketing the ray through the pixel centre together with
/// the linear interpolation weights already multiplied by d_beta / L^2.
template <class Visit>
void for_each_fbp_sample(const FanBeamGeometry& g, Visit&& visit)
{
    const std::size_t n = g.image_n;
    const std::size_t nd = g.n_detectors;
    const std::size_t nv = g.n_views();
    const double ps = g.pixel_size_mm;
    const double half = 0.5 * static_cast<double>(n - 1);
    const double dhalf = 0.5 * static_cast<double>(nd - 1);
    const double dgamma = g.angular_pitch_rad();
    const double dbeta = g.view_step_rad();
    const double R = g.source_to_isocenter_mm;
    std::vector<double> cb(nv), sb(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        cb[v] = std::cos(g.view_angles_rad[v]);
        sb[v] = std::sin(g.view_angles_rad[v]);
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double y = (half - static_cast<double>(r)) * ps;
        for (std::size_t c = 0; c < n; ++c) {
            const double x = (static_cast<double>(c) - half) * ps;
            const std::size_t pix = r * n + c;
            for (std::size_t v = 0; v < nv; ++v) {
                const double vx = x - R * cb[v], vy = y - R * sb[v];
                // central ray direction is (-cos beta, -sin beta)
                const double along = -cb[v] * vx - sb[v] * vy;
                const double across = -cb[v] * vy + sb[v] * vx;
                const double gamma = std::atan2(across, along);
                const double s = (gamma - g.detector_angular_offset_rad) / dgamma + dhalf;
                if (!(s >= 0.0 && s <= static_cast<double>(nd - 1))) continue;
                const double scale = dbeta / (vx * vx + vy * vy);
                const auto i0 = static_cast<std::size_t>(s);
                const double u = s - static_cast<double>(i0);
                if (i0 + 1 < nd) {
                    visit(pix, v * nd + i0, (1.0 - u) * scale);
                    visit(pix, v * nd + i0 + 1, u * scale);
                } else {
                    visit(pix, v * nd + i0, scale);
                }
            }
        }
    }
}

/// Backprojection weights as a sparse matrix (pixels x sinogram entries).
inline SparseRows assemble_fbp_backprojection(const FanBeamGeometry& g)
{
    SparseRowsBuilder b(g.image_n * g.image_n, g.n_views() * g.n_detectors);
    std::size_t current = 0;
    for_each_fbp_sample(g, [&](std::size_t pix, std::size_t idx, double w) {
        while (current < pix) {
            b.end_row();
            ++current;
        }
        b.add(idx, w);
    });
    while (current < g.image_n * g.image_n) {
        b.end_row();
        ++current;
    }
    return b.finish();
}

} // namespace detail

/// Fan-beam filtered backprojection for an equiangular detector.
///
/// Each view is weighted by SID * cos(gamma), convolved with the fan-beam ramp kernel
/// g(k) = 1/2 (k dgamma / sin(k dgamma))^2 h(k dgamma) through a zero-padded FFT, then
/// backprojected with 1/L^2 distance weighting. The operator is linear; transpose()
/// applies its exact algebraic transpose (the convolution kernel is symmetric, so the
/// filtering step is self-adjoint). Not safe for concurrent use: filtering shares FFT buffers.
class FbpOperator {
public:
    FbpOperator(FanBeamGeometry g, FilterKind kind) : geometry_(std::move(g)), kind_(kind)
    {
        geometry_.validate();
        if (geometry_.n_views() < 2) throw InvalidArgument("fbp: at least 2 views are required");
        const std::size_t nd = geometry_.n_detectors;
        padded_ = detail::next_pow2(2 * nd);
        real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * padded_)));
        spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (padded_ / 2 + 1))));
        {
            std::lock_guard lock(detail::fftw_planner_mutex());
            forward_plan_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(padded_), real_.get(), spec_.get(), FFTW_ESTIMATE));
            inverse_plan_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(padded_), spec_.get(), real_.get(), FFTW_ESTIMATE));
        }
        build_response();
        weights_.resize(nd);
        for (std::size_t i = 0; i < nd; ++i)
            weights_[i] = geometry_.source_to_isocenter_mm * std::cos(geometry_.detector_angle(i));
        if (2 * geometry_.n_views() * geometry_.image_n * geometry_.image_n <= kMaxCachedWeights)
            matrix_ = std::make_shared<const SparseRows>(detail::assemble_fbp_backprojection(geometry_));
    }

    FbpOperator(const FbpOperator&) = delete;
    FbpOperator& operator=(const FbpOperator&) = delete;
    FbpOperator(FbpOperator&&) noexcept = default;
    FbpOperator& operator=(FbpOperator&&) noexcept = default;

    const FanBeamGeometry& geometry() const noexcept { return geometry_; }
    FilterKind filter() const noexcept { return kind_; }

    /// Weighted and filtered projections (before backprojection).
    Sinogram filter_projections(const Sinogram& s) const
    {
        detail::require_sinogram_matches(s, geometry_, "fbp");
        Sinogram q = s;
        for (std::size_t v = 0; v < q.n_views(); ++v) {
            double* row = &q(v, 0);
            for (std::size_t i = 0; i < geometry_.n_detectors; ++i) row[i] *= weights_[i];
            convolve_row(row);
        }
        return q;
    }

    Image apply(const Sinogram& s) const
    {
        const Sinogram q = filter_projections(s);
        Image out(geometry_.image_n, geometry_.pixel_size_mm);
        if (matrix_) {
            matrix_->multiply(q.data.span(), out.data.span());
            return out;
        }
        double* img = out.data.values.data();
        const double* qv = q.data.values.data();
        detail::for_each_fbp_sample(geometry_, [&](std::size_t pix, std::size_t idx, double w) { img[pix] += w * qv[idx]; });
        return out;
    }

    Sinogram transpose(const Image& x) const
    {
        detail::require_image_matches(x, geometry_, "fbp transpose");
        Sinogram q(geometry_.n_views(), geometry_.n_detectors);
        const std::size_t nd = geometry_.n_detectors;
        if (matrix_) {
            matrix_->multiply_transpose_add(x.data.span(), q.data.span());
        } else {
            double* qv = q.data.values.data();
            const double* img = x.data.values.data();
            detail::for_each_fbp_sample(geometry_, [&](std::size_t pix, std::size_t idx, double w) { qv[idx] += w * img[pix]; });
        }
        for (std::size_t v = 0; v < q.n_views(); ++v) {
            double* row = &q(v, 0);
            convolve_row(row);
            for (std::size_t i = 0; i < nd; ++i) row[i] *= weights_[i];
        }
        return q;
    }

    /// Real frequency response of the (apodized) fan kernel, including the dgamma factor.
    const std::vector<double>& response() const noexcept { return response_; }

private:
    void build_response()
    {
        const std::size_t nd = geometry_.n_detectors;
        const double dg = geometry_.angular_pitch_rad();
        double* k = real_.get();
        std::fill(k, k + padded_, 0.0);
        k[0] = 0.125 / (dg * dg);
        for (std::size_t j = 1; j < nd; j += 2) {
            const double s = std::sin(static_cast<double>(j) * dg);
            const double val = -0.5 / (std::numbers::pi * std::numbers::pi * s * s);
            k[j] = val;
            k[padded_ - j] = val;
        }
        fftw_execute(forward_plan_.get());
        response_.resize(padded_ / 2 + 1);
        for (std::size_t f = 0; f < response_.size(); ++f) {
            double h = spec_.get()[f][0] * dg;
            if (kind_ == FilterKind::hann)
                h *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * static_cast<double>(f) / static_cast<double>(padded_)));
            response_[f] = h / static_cast<double>(padded_);
        }
    }

    void convolve_row(double* row) const
    {
        const std::size_t nd = geometry_.n_detectors;
        double* buf = real_.get();
        std::copy(row, row + nd, buf);
        std::fill(buf + nd, buf + padded_, 0.0);
        fftw_execute(forward_plan_.get());
        fftw_complex* sp = spec_.get();
        for (std::size_t f = 0; f < response_.size(); ++f) {
            sp[f][0] *= response_[f];
            sp[f][1] *= response_[f];
        }
        fftw_execute(inverse_plan_.get());
        std::copy(buf, buf + nd, row);
    }

    FanBeamGeometry geometry_;
    FilterKind kind_;
    std::size_t padded_ = 0;
    std::unique_ptr<double, detail::FftwFree> real_;
    std::unique_ptr<fftw_complex, detail::FftwFree> spec_;
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> forward_plan_;
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> inverse_plan_;
    std::vector<double> response_;
    std::vector<double> weights_;
    std::shared_ptr<const SparseRows> matrix_;
};

inline Image fbp(const Sinogram& s, const FanBeamGeometry& g, FilterKind filter = FilterKind::ramp)
{
    return FbpOperator(g, filter).apply(s);
}

} // namespace sugarct
