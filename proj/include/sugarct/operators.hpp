#pragma once

#include <concepts>
#include <cstdint>
#include <random>

#include "grid.hpp"

namespace sugarct {

/// A matrix-free linear map with its transpose.
template <class Op>
concept LinearOperator = requires(const Op& op, const typename Op::domain_type& x, const typename Op::range_type& y) {
    { op.apply(x) } -> std::convertible_to<typename Op::range_type>;
    { op.adjoint(y) } -> std::convertible_to<typename Op::domain_type>;
    { op.zero_domain() } -> std::convertible_to<typename Op::domain_type>;
};

/// A = I on images; turns the reconstruction solvers into denoisers.
class IdentityOperator {
public:
    using domain_type = Image;
    using range_type = Image;

    IdentityOperator(std::size_t n, double pixel_size_mm) : n_(n), pixel_(pixel_size_mm) {}

    Image apply(const Image& x) const { return x; }
    Image adjoint(const Image& y) const { return y; }
    Image zero_domain() const { return Image(n_, pixel_); }

private:
    std::size_t n_;
    double pixel_;
};

/// Deterministic pseudo-random image used to seed power iterations.
inline Image random_image(std::size_t n, double pixel_size_mm, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Image x(n, pixel_size_mm);
    for (double& v : x.data.values) v = u(rng);
    return x;
}

/// Largest eigenvalue of the symmetric positive semidefinite map `normal` (e.g. x -> A^T A x),
/// by power iteration from a fixed pseudo-random start. Returns the final Rayleigh quotient.
template <class NormalMap>
double power_iteration(NormalMap&& normal, Image start, int iterations = 50)
{
    double nrm = norm2(start);
    if (nrm == 0.0) return 0.0;
    vec::scale(start.data.span(), 1.0 / nrm);
    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Image w = normal(start);
        estimate = dot(start, w);
        nrm = norm2(w);
        if (nrm == 0.0) return 0.0;
        vec::scale(w.data.span(), 1.0 / nrm);
        start = std::move(w);
    }
    return estimate;
}

/// ||A^T A||_2 for a linear operator.
template <LinearOperator Op>
double normal_operator_norm(const Op& op, int iterations = 50)
{
    Image start = op.zero_domain();
    start = random_image(start.n(), start.pixel_size_mm, 0x5eed);
    return power_iteration([&](const Image& v) { return op.adjoint(op.apply(v)); }, std::move(start), iterations);
}

} // namespace sugarct
