#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fbp.hpp"
#include "operators.hpp"
#include "projector.hpp"
#include "transforms.hpp"

namespace sugarct {

struct SolverTrace {
    std::vector<double> objective;
    std::vector<double> data_fidelity;
    std::vector<double> residual;
};

enum class InitMode { zero, fbp };

inline InitMode parse_init_mode(const std::string& s)
{
    if (s == "zero") return InitMode::zero;
    if (s == "fbp") return InitMode::fbp;
    throw InvalidArgument("unknown x0 mode '" + s + "' (expected zero or fbp)");
}

struct SplitBregmanConfig {
    double lambda = 0.01;
    double lambda1 = 1.0;
    double eta = 1.0;
    std::size_t n_iters = 100;
    SparsifyingTransform transform{TransformKind::haar, 2};
    InitMode x0_mode = InitMode::zero;
    /// The shrinkage threshold is threshold_scale * lambda / lambda1 (2 in the classical
    /// derivation this solver follows), so the iteration minimizes the data term plus
    /// threshold_scale * lambda * ||Hx||_1.
    double threshold_scale = 2.0;
    /// Dual iterations for the z-step when H^T H != I (gradient transform).
    std::size_t prox_iters = 20;
    /// ||A^T A||_2; estimated by 50 power iterations when <= 0.
    double normal_norm = 0.0;

    double threshold() const noexcept { return threshold_scale * lambda / lambda1; }

    void validate() const
    {
        detail::require(std::isfinite(lambda) && lambda >= 0.0, "split-bregman: lambda must be >= 0");
        detail::require(std::isfinite(lambda1) && lambda1 > 0.0, "split-bregman: lambda1 must be > 0");
        detail::require(std::isfinite(eta) && eta > 0.0, "split-bregman: eta must be > 0");
        detail::require(n_iters >= 1, "split-bregman: n_iters must be >= 1");
        detail::require(threshold_scale >= 0.0, "split-bregman: threshold_scale must be >= 0");
    }
};

/// 1/2 ||y - A x||^2 + lambda ||H x||_1
template <LinearOperator Op>
double objective(const Op& op, const Image& x, const typename Op::range_type& y, const SparsifyingTransform& H,
                 double lambda)
{
    const auto r = op.apply(x) - y;
    const double fid = 0.5 * dot(r, r);
    return lambda == 0.0 ? fid : fid + lambda * H.l1(x);
}

inline double objective(const Image& x, const Sinogram& y, const FanBeamGeometry& g, const SparsifyingTransform& H,
                        double lambda)
{
    detail::require_image_matches(x, g, "objective");
    detail::require_sinogram_matches(y, g, "objective");
    return objective(FanBeamProjector(g), x, y, H, lambda);
}

/// Anisotropic TV proximal map argmin_z tau ||D z||_1 + 1/2 ||z - v||^2, solved in the dual
/// with accelerated projected gradient. The dual variable persists between calls so that
/// successive outer iterations warm start.
class TvProx {
public:
    explicit TvProx(std::size_t iterations) : iterations_(iterations) {}

    Image operator()(const Image& v, double tau)
    {
        const double ps = v.pixel_size_mm;
        if (tau == 0.0) return v;
        if (q_.bands.empty()) q_ = grad_forward(Image(v.n(), ps));
        CoefficientSet w = q_;
        CoefficientSet q_prev = q_;
        double t = 1.0;
        constexpr double kStep = 1.0 / 8.0; // ||D D^T|| <= 8
        for (std::size_t it = 0; it < iterations_; ++it) {
            const Image z = v - grad_adjoint(w, ps);
            const CoefficientSet g = grad_forward(z);
            CoefficientSet q_next = w;
            for (std::size_t b = 0; b < q_next.bands.size(); ++b) {
                auto& qb = q_next.bands[b].values;
                const auto& gb = g.bands[b].values;
                for (std::size_t i = 0; i < qb.size(); ++i) qb[i] = std::clamp(qb[i] + kStep * gb[i], -tau, tau);
            }
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            const double mom = (t - 1.0) / t_next;
            w = q_next;
            for (std::size_t b = 0; b < w.bands.size(); ++b) {
                auto& wb = w.bands[b].values;
                const auto& qn = q_next.bands[b].values;
                const auto& qp = q_prev.bands[b].values;
                for (std::size_t i = 0; i < wb.size(); ++i) wb[i] = qn[i] + mom * (qn[i] - qp[i]);
            }
            q_prev = std::move(q_next);
            t = t_next;
        }
        q_ = q_prev;
        return v - grad_adjoint(q_, ps);
    }

private:
    std::size_t iterations_;
    CoefficientSet q_;
};

/// Split-Bregman iterations for 1/2||y - Ax||^2 + lambda ||Hx||_1 with the relaxed
/// (inverse-free) x-step:
///   x <- x - a A^T(Ax - y) - b (x - z - f),   a = 1/L, b = lambda1/L, L = ||A^T A|| + lambda1
///   z <- H^* g_tau(H(x - f))                  (exact TV prox when H is the gradient)
///   f <- f - eta (x - z)
/// Starts from z = x0 and f = 0. Runs exactly cfg.n_iters iterations.
template <LinearOperator Op>
std::pair<Image, SolverTrace> split_bregman(const Op& op, const typename Op::range_type& y, Image x0,
                                            const SplitBregmanConfig& cfg)
{
    cfg.validate();
    const double normal = cfg.normal_norm > 0.0 ? cfg.normal_norm : normal_operator_norm(op);
    const double L = normal + cfg.lambda1;
    const double a = 1.0 / L;
    const double b = cfg.lambda1 / L;
    const double tau = cfg.threshold();
    const double ps = x0.pixel_size_mm;

    Image x = std::move(x0);
    Image z = x;
    Image f(x.n(), ps);
    TvProx tv(cfg.prox_iters);
    SolverTrace trace;

    auto r = op.apply(x) - y;
    const double initial = 0.5 * dot(r, r) + (cfg.lambda == 0.0 ? 0.0 : cfg.lambda * cfg.transform.l1(x));
    for (std::size_t k = 0; k < cfg.n_iters; ++k) {
        const Image grad = op.adjoint(r);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            x.data.values[i] += -a * grad.data.values[i] - b * (x.data.values[i] - z.data.values[i] - f.data.values[i]);

        const Image v = x - f;
        if (cfg.transform.orthonormal()) {
            CoefficientSet c = cfg.transform.forward(v);
            soft_threshold_inplace(c, tau);
            z = cfg.transform.adjoint(c, ps);
        } else {
            z = tv(v, tau);
        }
        for (std::size_t i = 0; i < f.data.size(); ++i)
            f.data.values[i] -= cfg.eta * (x.data.values[i] - z.data.values[i]);

        r = op.apply(x) - y;
        const double fid = 0.5 * dot(r, r);
        const double obj = cfg.lambda == 0.0 ? fid : fid + cfg.lambda * cfg.transform.l1(x);
        trace.data_fidelity.push_back(fid);
        trace.objective.push_back(obj);
        trace.residual.push_back(norm2(x - z));
        if (!std::isfinite(obj) || (initial > 0.0 && obj > 1e6 * initial))
            throw NumericalFailure("split-bregman diverged at iteration " + std::to_string(k), trace.objective);
    }
    return {std::move(x), std::move(trace)};
}

inline std::pair<Image, SolverTrace> split_bregman_recon(const Sinogram& y, const FanBeamGeometry& g,
                                                         const SplitBregmanConfig& cfg)
{
    detail::require_sinogram_matches(y, g, "split_bregman_recon");
    FanBeamProjector A(g);
    Image x0 = cfg.x0_mode == InitMode::fbp ? fbp(y, g) : A.zero_domain();
    return split_bregman(A, y, std::move(x0), cfg);
}

/// Chambolle-Pock primal-dual iterations for 1/2||Ax - y||^2 + lambda ||D x||_1 (anisotropic TV).
/// A is rescaled internally by nu = ||A|| / ||D|| (with y and lambda adjusted so the minimizer is
/// unchanged), then K = [A/nu; D] and sigma = tau = 1/||K||, so sigma tau ||K||^2 = 1.
template <LinearOperator Op>
std::pair<Image, SolverTrace> cppd_tv(const Op& op, const typename Op::range_type& y, double lambda,
                                      std::size_t n_iters, double normal_norm = 0.0)
{
    detail::require(n_iters >= 1, "cppd_tv: n_iters must be >= 1");
    detail::require(std::isfinite(lambda) && lambda >= 0.0, "cppd_tv: lambda must be >= 0");
    using Range = typename Op::range_type;
    const SparsifyingTransform D{TransformKind::gradient, 0};

    Image x = op.zero_domain();
    const double ps = x.pixel_size_mm;
    const double a_norm2 = normal_norm > 0.0 ? normal_norm : normal_operator_norm(op);
    const double d_norm2 =
        power_iteration([&](const Image& v) { return grad_adjoint(grad_forward(v), ps); },
                        random_image(x.n(), ps, 0x7e11), 50);
    const double nu = a_norm2 > 0.0 ? std::sqrt(a_norm2 / d_norm2) : 1.0;
    const double inv_nu = 1.0 / nu;
    const Range y_s = inv_nu * y;
    const double lambda_s = lambda / (nu * nu);

    const double k_norm = std::sqrt(power_iteration(
        [&](const Image& v) {
            Image w = (inv_nu * inv_nu) * op.adjoint(op.apply(v));
            return w + grad_adjoint(grad_forward(v), ps);
        },
        random_image(x.n(), ps, 0x5eed), 50));
    const double sigma = 1.0 / k_norm;
    const double tau = 1.0 / k_norm;

    Range p = 0.0 * y;
    CoefficientSet q = grad_forward(x);
    for (auto& band : q.bands) std::fill(band.values.begin(), band.values.end(), 0.0);
    Image xbar = x;
    SolverTrace trace;

    for (std::size_t k = 0; k < n_iters; ++k) {
        Range ax = inv_nu * op.apply(xbar);
        for (std::size_t i = 0; i < p.data.size(); ++i)
            p.data.values[i] = (p.data.values[i] + sigma * (ax.data.values[i] - y_s.data.values[i])) / (1.0 + sigma);
        const CoefficientSet dx = grad_forward(xbar);
        for (std::size_t b = 0; b < q.bands.size(); ++b) {
            auto& qb = q.bands[b].values;
            const auto& db = dx.bands[b].values;
            for (std::size_t i = 0; i < qb.size(); ++i) qb[i] = std::clamp(qb[i] + sigma * db[i], -lambda_s, lambda_s);
        }
        const Image at = inv_nu * op.adjoint(p);
        const Image dt = grad_adjoint(q, ps);
        Image x_new = x;
        for (std::size_t i = 0; i < x_new.data.size(); ++i)
            x_new.data.values[i] -= tau * (at.data.values[i] + dt.data.values[i]);
        for (std::size_t i = 0; i < xbar.data.size(); ++i)
            xbar.data.values[i] = 2.0 * x_new.data.values[i] - x.data.values[i];
        const double step = norm2(x_new - x);
        x = std::move(x_new);

        const auto r = op.apply(x) - y;
        const double fid = 0.5 * dot(r, r);
        const double obj = fid + lambda * D.l1(x);
        trace.data_fidelity.push_back(fid);
        trace.objective.push_back(obj);
        trace.residual.push_back(step);
        if (!std::isfinite(obj) || !vec::all_finite(x.data.span()))
            throw NumericalFailure("cppd-tv produced non-finite iterates at iteration " + std::to_string(k),
                                   trace.objective);
    }
    return {std::move(x), std::move(trace)};
}

inline std::pair<Image, SolverTrace> cppd_tv_recon(const Sinogram& y, const FanBeamGeometry& g, double lambda,
                                                   std::size_t n_iters)
{
    detail::require_sinogram_matches(y, g, "cppd_tv_recon");
    return cppd_tv(FanBeamProjector(g), y, lambda, n_iters);
}

} // namespace sugarct
