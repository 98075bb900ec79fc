#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grid.hpp"

namespace sugarct {

/// Output of a sparsifying transform: named 2D bands.
struct CoefficientSet {
    std::vector<std::string> names;
    std::vector<Grid> bands;

    std::size_t total_size() const noexcept
    {
        std::size_t s = 0;
        for (const auto& b : bands) s += b.size();
        return s;
    }

    bool same_layout(const CoefficientSet& o) const noexcept
    {
        if (names != o.names || bands.size() != o.bands.size()) return false;
        for (std::size_t i = 0; i < bands.size(); ++i)
            if (!bands[i].same_shape(o.bands[i])) return false;
        return true;
    }

    bool operator==(const CoefficientSet&) const = default;
};

inline double dot(const CoefficientSet& a, const CoefficientSet& b)
{
    detail::require(a.same_layout(b), "dot: coefficient layouts differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.bands.size(); ++i) s += dot(a.bands[i], b.bands[i]);
    return s;
}

inline double norm2(const CoefficientSet& c) { return std::sqrt(dot(c, c)); }

inline double norm1(const CoefficientSet& c)
{
    double s = 0.0;
    for (const auto& b : c.bands) s += vec::norm1(b.span());
    return s;
}

// ---------------------------------------------------------------------------
// Soft thresholding

/// g_tau(u) = 0 for |u| <= tau, u - sgn(u) tau otherwise.
inline double soft_threshold(double u, double tau) noexcept
{
    if (u > tau) return u - tau;
    if (u < -tau) return u + tau;
    return 0.0;
}

inline void soft_threshold_inplace(std::span<double> u, double tau)
{
    detail::require(tau >= 0.0, "soft_threshold: tau must be nonnegative");
    for (double& v : u) v = soft_threshold(v, tau);
}

inline std::vector<double> soft_threshold(std::span<const double> u, double tau)
{
    std::vector<double> out(u.begin(), u.end());
    soft_threshold_inplace(out, tau);
    return out;
}

inline void soft_threshold_inplace(CoefficientSet& c, double tau)
{
    for (auto& b : c.bands) soft_threshold_inplace(b.span(), tau);
}

// ---------------------------------------------------------------------------
// Orthonormal Haar wavelet

namespace detail {

inline void haar_split(const Grid& in, Grid& ll, Grid& hl, Grid& lh, Grid& hh)
{
    const std::size_t m = in.rows / 2;
    ll = Grid(m, m), hl = Grid(m, m), lh = Grid(m, m), hh = Grid(m, m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const double a = in(2 * r, 2 * c), b = in(2 * r, 2 * c + 1);
            const double d = in(2 * r + 1, 2 * c), e = in(2 * r + 1, 2 * c + 1);
            ll(r, c) = 0.5 * (a + b + d + e);
            hl(r, c) = 0.5 * (a - b + d - e);
            lh(r, c) = 0.5 * (a + b - d - e);
            hh(r, c) = 0.5 * (a - b - d + e);
        }
}

inline Grid haar_merge(const Grid& ll, const Grid& hl, const Grid& lh, const Grid& hh)
{
    const std::size_t m = ll.rows;
    Grid out(2 * m, 2 * m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const double s = ll(r, c), h = hl(r, c), v = lh(r, c), d = hh(r, c);
            out(2 * r, 2 * c) = 0.5 * (s + h + v + d);
            out(2 * r, 2 * c + 1) = 0.5 * (s - h + v - d);
            out(2 * r + 1, 2 * c) = 0.5 * (s + h - v - d);
            out(2 * r + 1, 2 * c + 1) = 0.5 * (s - h - v + d);
        }
    return out;
}

} // namespace detail

/// Multi-level orthonormal Haar decomposition. Bands are ordered
/// [h1, v1, d1, h2, v2, d2, ..., approx] with level 1 the finest.
inline CoefficientSet haar_forward(const Image& x, std::size_t levels)
{
    const std::size_t n = x.n();
    detail::require(levels >= 1, "haar_forward: levels must be >= 1");
    detail::require(x.data.rows == x.data.cols, "haar_forward: image must be square");
    detail::require(n % (std::size_t{1} << levels) == 0,
                    "haar_forward: image size " + std::to_string(n) + " not divisible by 2^" + std::to_string(levels));
    CoefficientSet out;
    Grid current = x.data;
    for (std::size_t l = 1; l <= levels; ++l) {
        Grid ll, hl, lh, hh;
        detail::haar_split(current, ll, hl, lh, hh);
        const std::string tag = std::to_string(l);
        out.names.insert(out.names.end(), {"h" + tag, "v" + tag, "d" + tag});
        out.bands.push_back(std::move(hl));
        out.bands.push_back(std::move(lh));
        out.bands.push_back(std::move(hh));
        current = std::move(ll);
    }
    out.names.push_back("approx");
    out.bands.push_back(std::move(current));
    return out;
}

/// Inverse (equivalently adjoint) of haar_forward.
inline Image haar_adjoint(const CoefficientSet& c, double pixel_size_mm = 1.0)
{
    const std::size_t nb = c.bands.size();
    detail::require(nb >= 4 && nb % 3 == 1 && c.names.size() == nb, "haar_adjoint: malformed coefficient set");
    const std::size_t levels = (nb - 1) / 3;
    Grid current = c.bands.back();
    for (std::size_t l = levels; l >= 1; --l) {
        const Grid& hl = c.bands[3 * (l - 1)];
        const Grid& lh = c.bands[3 * (l - 1) + 1];
        const Grid& hh = c.bands[3 * (l - 1) + 2];
        if (!(current.same_shape(hl) && current.same_shape(lh) && current.same_shape(hh) && current.rows == current.cols))
            throw InvalidArgument("haar_adjoint: band shapes inconsistent at level " + std::to_string(l));
        current = detail::haar_merge(current, hl, lh, hh);
    }
    return Image(std::move(current), pixel_size_mm);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient

/// Forward differences along x (columns) and y (rows); the difference across the far
/// edge is zero (replicated edge pixel).
inline CoefficientSet grad_forward(const Image& x)
{
    const std::size_t rows = x.data.rows, cols = x.data.cols;
    Grid dx(rows, cols), dy(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            if (c + 1 < cols) dx(r, c) = x(r, c + 1) - x(r, c);
            if (r + 1 < rows) dy(r, c) = x(r + 1, c) - x(r, c);
        }
    CoefficientSet out;
    out.names = {"dx", "dy"};
    out.bands.push_back(std::move(dx));
    out.bands.push_back(std::move(dy));
    return out;
}

/// Transpose of grad_forward (negative divergence).
inline Image grad_adjoint(const CoefficientSet& c, double pixel_size_mm = 1.0)
{
    detail::require(c.bands.size() == 2 && c.bands[0].same_shape(c.bands[1]), "grad_adjoint: expected two equal bands");
    const Grid& dx = c.bands[0];
    const Grid& dy = c.bands[1];
    const std::size_t rows = dx.rows, cols = dx.cols;
    Grid out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < cols; ++k) {
            double v = 0.0;
            if (k + 1 < cols) v -= dx(r, k);
            if (k >= 1) v += dx(r, k - 1);
            if (r + 1 < rows) v -= dy(r, k);
            if (r >= 1) v += dy(r - 1, k);
            out(r, k) = v;
        }
    return Image(std::move(out), pixel_size_mm);
}

// ---------------------------------------------------------------------------
// Transform selector

enum class TransformKind { identity, haar, gradient };

inline TransformKind parse_transform_kind(const std::string& s)
{
    if (s == "identity") return TransformKind::identity;
    if (s == "haar") return TransformKind::haar;
    if (s == "gradient") return TransformKind::gradient;
    throw InvalidArgument("unknown transform '" + s + "' (expected identity, haar or gradient)");
}

inline std::string to_string(TransformKind k)
{
    switch (k) {
    case TransformKind::identity: return "identity";
    case TransformKind::haar: return "haar";
    case TransformKind::gradient: return "gradient";
    }
    return "?";
}

/// Analytic sparsifying pair (H, H*).
struct SparsifyingTransform {
    TransformKind kind = TransformKind::haar;
    std::size_t levels = 2;

    /// True when H* H = I, in which case H* g_tau(H v) is the exact l1 proximal map.
    bool orthonormal() const noexcept { return kind != TransformKind::gradient; }

    CoefficientSet forward(const Image& x) const
    {
        switch (kind) {
        case TransformKind::identity: {
            CoefficientSet c;
            c.names = {"identity"};
            c.bands = {x.data};
            return c;
        }
        case TransformKind::haar: return haar_forward(x, levels);
        case TransformKind::gradient: return grad_forward(x);
        }
        return {};
    }

    Image adjoint(const CoefficientSet& c, double pixel_size_mm = 1.0) const
    {
        switch (kind) {
        case TransformKind::identity:
            detail::require(c.bands.size() == 1, "identity adjoint: expected one band");
            return Image(c.bands[0], pixel_size_mm);
        case TransformKind::haar: return haar_adjoint(c, pixel_size_mm);
        case TransformKind::gradient: return grad_adjoint(c, pixel_size_mm);
        }
        return {};
    }

    double l1(const Image& x) const { return norm1(forward(x)); }
};

} // namespace sugarct
