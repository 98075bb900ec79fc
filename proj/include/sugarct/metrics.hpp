#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "grid.hpp"

namespace sugarct {

/// Returned by psnr() when the images are identical.
inline constexpr double kPsnrCapDb = 300.0;

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
};

inline double mse(const Image& x, const Image& ref)
{
    vec::require_same(x.data, ref.data, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double d = x.data.values[i] - ref.data.values[i];
        s += d * d;
    }
    return s / static_cast<double>(x.data.size());
}

/// 10 log10(peak^2 / MSE) with peak = max(ref).
inline double psnr(const Image& x, const Image& ref)
{
    const double m = mse(x, ref);
    if (m == 0.0) return kPsnrCapDb;
    const double peak = vec::max_value(ref.data.span());
    detail::require(peak > 0.0, "psnr: reference peak must be positive");
    return 10.0 * std::log10(peak * peak / m);
}

namespace detail {

inline std::vector<double> gaussian_window_1d(std::size_t size, double sigma)
{
    std::vector<double> w(size);
    const double c = 0.5 * static_cast<double>(size - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable 'valid' filtering: output is (n - size + 1)^2.
inline Grid filter_valid(const Grid& in, const std::vector<double>& w)
{
    const std::size_t k = w.size();
    const std::size_t outr = in.rows - k + 1, outc = in.cols - k + 1;
    Grid tmp(in.rows, outc);
    for (std::size_t r = 0; r < in.rows; ++r)
        for (std::size_t c = 0; c < outc; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += w[j] * in(r, c + j);
            tmp(r, c) = s;
        }
    Grid out(outr, outc);
    for (std::size_t r = 0; r < outr; ++r)
        for (std::size_t c = 0; c < outc; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += w[j] * tmp(r + j, c);
            out(r, c) = s;
        }
    return out;
}

} // namespace detail

/// Mean structural similarity over all fully-contained 11x11 Gaussian windows (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range max(ref) - min(ref).
inline double ssim(const Image& x, const Image& ref)
{
    constexpr std::size_t kWindow = 11;
    vec::require_same(x.data, ref.data, "ssim");
    detail::require(x.data.rows >= kWindow && x.data.cols >= kWindow, "ssim: image smaller than the 11x11 window");

    double range = vec::max_value(ref.data.span()) - vec::min_value(ref.data.span());
    if (range <= 0.0) range = 1.0;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    const auto w = detail::gaussian_window_1d(kWindow, 1.5);
    Grid xx = x.data, yy = ref.data, xy = x.data;
    for (std::size_t i = 0; i < xx.size(); ++i) {
        xx.values[i] = x.data.values[i] * x.data.values[i];
        yy.values[i] = ref.data.values[i] * ref.data.values[i];
        xy.values[i] = x.data.values[i] * ref.data.values[i];
    }
    const Grid mx = detail::filter_valid(x.data, w);
    const Grid my = detail::filter_valid(ref.data, w);
    const Grid sxx = detail::filter_valid(xx, w);
    const Grid syy = detail::filter_valid(yy, w);
    const Grid sxy = detail::filter_valid(xy, w);

    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double ux = mx.values[i], uy = my.values[i];
        const double vx = sxx.values[i] - ux * ux;
        const double vy = syy.values[i] - uy * uy;
        const double cov = sxy.values[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

inline MetricReport evaluate(const Image& x, const Image& ref)
{
    return {psnr(x, ref), ssim(x, ref), mse(x, ref)};
}

} // namespace sugarct
