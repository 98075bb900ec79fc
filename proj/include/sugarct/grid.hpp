#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace sugarct {

/// Dense row-major 2D array of doubles. Shared storage for images and sinograms.
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    std::size_t size() const noexcept { return values.size(); }
    double& operator()(std::size_t r, std::size_t c) noexcept { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }

    std::span<double> span() noexcept { return values; }
    std::span<const double> span() const noexcept { return values; }

    bool same_shape(const Grid& o) const noexcept { return rows == o.rows && cols == o.cols; }
    bool operator==(const Grid&) const = default;
};

/// Attenuation map on an n x n pixel grid. Row 0 is the top of the image (largest y).
struct Image {
    Grid data;
    double pixel_size_mm = 1.0;

    Image() = default;
    Image(std::size_t n, double pixel_mm, double fill = 0.0) : data(n, n, fill), pixel_size_mm(pixel_mm) {}
    Image(Grid g, double pixel_mm) : data(std::move(g)), pixel_size_mm(pixel_mm) {}

    std::size_t n() const noexcept { return data.rows; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data(r, c); }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data(r, c); }
    bool operator==(const Image&) const = default;
};

/// Line-integral measurements, one row per view and one column per detector cell.
struct Sinogram {
    Grid data;

    Sinogram() = default;
    Sinogram(std::size_t n_views, std::size_t n_detectors, double fill = 0.0)
        : data(n_views, n_detectors, fill) {}
    explicit Sinogram(Grid g) : data(std::move(g)) {}

    std::size_t n_views() const noexcept { return data.rows; }
    std::size_t n_detectors() const noexcept { return data.cols; }
    double& operator()(std::size_t v, std::size_t d) noexcept { return data(v, d); }
    double operator()(std::size_t v, std::size_t d) const noexcept { return data(v, d); }
    bool operator==(const Sinogram&) const = default;
};

// Vector-space helpers over the flat storage. Loops run in index order so that
// results are reproducible bit for bit.
namespace vec {

inline void require_same(const Grid& a, const Grid& b, const char* what)
{
    if (!a.same_shape(b))
        throw InvalidArgument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                              std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                              std::to_string(b.cols) + ")");
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm1(std::span<const double> a)
{
    double s = 0.0;
    for (double v : a) s += std::abs(v);
    return s;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::span<double> x, double alpha)
{
    for (double& v : x) v *= alpha;
}

inline bool all_finite(std::span<const double> a)
{
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline double max_value(std::span<const double> a) { return *std::max_element(a.begin(), a.end()); }
inline double min_value(std::span<const double> a) { return *std::min_element(a.begin(), a.end()); }

} // namespace vec

inline double dot(const Grid& a, const Grid& b)
{
    vec::require_same(a, b, "dot");
    return vec::dot(a.span(), b.span());
}
inline double norm2(const Grid& a) { return vec::norm2(a.span()); }

inline Grid operator+(Grid a, const Grid& b)
{
    vec::require_same(a, b, "add");
    vec::axpy(1.0, b.span(), a.span());
    return a;
}
inline Grid operator-(Grid a, const Grid& b)
{
    vec::require_same(a, b, "subtract");
    vec::axpy(-1.0, b.span(), a.span());
    return a;
}
inline Grid operator*(double s, Grid a)
{
    vec::scale(a.span(), s);
    return a;
}

inline Image operator+(Image a, const Image& b) { return {std::move(a.data) + b.data, a.pixel_size_mm}; }
inline Image operator-(Image a, const Image& b) { return {std::move(a.data) - b.data, a.pixel_size_mm}; }
inline Image operator*(double s, Image a) { return {s * std::move(a.data), a.pixel_size_mm}; }
inline Sinogram operator+(Sinogram a, const Sinogram& b) { return Sinogram(std::move(a.data) + b.data); }
inline Sinogram operator-(Sinogram a, const Sinogram& b) { return Sinogram(std::move(a.data) - b.data); }
inline Sinogram operator*(double s, Sinogram a) { return Sinogram(s * std::move(a.data)); }

inline double dot(const Image& a, const Image& b) { return dot(a.data, b.data); }
inline double dot(const Sinogram& a, const Sinogram& b) { return dot(a.data, b.data); }
inline double norm2(const Image& a) { return norm2(a.data); }
inline double norm2(const Sinogram& a) { return norm2(a.data); }

} // namespace sugarct
