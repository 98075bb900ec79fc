#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "encoder_decoder.hpp"
#include "fbp.hpp"
#include "operators.hpp"
#include "projector.hpp"
#include "transforms.hpp"

namespace sugarct {

/// How A^T is realized inside the reconstruction module.
enum class AdjointMode { exact, fbp };

/// Which transform pair the deep-estimation module uses.
enum class DmKind { learned, haar, identity };

inline AdjointMode parse_adjoint_mode(const std::string& s)
{
    if (s == "exact") return AdjointMode::exact;
    if (s == "fbp") return AdjointMode::fbp;
    throw InvalidArgument("unknown adjoint mode '" + s + "' (expected exact or fbp)");
}
inline std::string to_string(AdjointMode m) { return m == AdjointMode::exact ? "exact" : "fbp"; }

inline DmKind parse_dm_kind(const std::string& s)
{
    if (s == "learned") return DmKind::learned;
    if (s == "haar") return DmKind::haar;
    if (s == "identity") return DmKind::identity;
    throw InvalidArgument("unknown transform pair '" + s + "' (expected learned, haar or identity)");
}
inline std::string to_string(DmKind k)
{
    switch (k) {
    case DmKind::learned: return "learned";
    case DmKind::haar: return "haar";
    case DmKind::identity: return "identity";
    }
    return "?";
}

struct SugarArchitecture {
    std::size_t n_blocks = 5;
    DmKind dm = DmKind::learned;
    EncoderDecoderShape network{};
    std::size_t haar_levels = 2;
    /// One (Q, Q*) shared by all blocks instead of one per block.
    bool shared_network = false;
    /// Apply g_eps explicitly inside DM; otherwise the network absorbs the shrinkage.
    bool use_threshold = false;
    AdjointMode adjoint = AdjointMode::fbp;
    FilterKind fbp_filter = FilterKind::ramp;

    static constexpr std::size_t kScalarsPerBlock = 4;

    std::size_t n_networks() const noexcept
    {
        if (dm != DmKind::learned) return 0;
        return shared_network ? 1 : n_blocks;
    }
    std::size_t scalar_count() const noexcept { return kScalarsPerBlock * n_blocks; }
    std::size_t param_count() const noexcept { return scalar_count() + n_networks() * network.param_count(); }

    bool operator==(const SugarArchitecture&) const = default;
};

/// Complete trainable state: per-block a, b, eta, eps followed by the encoder-decoder
/// weights, all in one flat vector so optimizers and serialization see a single array.
template <class Real>
struct SugarParams {
    SugarArchitecture arch;
    std::vector<Real> values;

    SugarParams() = default;
    explicit SugarParams(SugarArchitecture a) : arch(a), values(a.param_count(), Real(0)) {}

    std::size_t n_blocks() const noexcept { return arch.n_blocks; }

    Real& a(std::size_t k) { return values[4 * k]; }
    Real& b(std::size_t k) { return values[4 * k + 1]; }
    Real& eta(std::size_t k) { return values[4 * k + 2]; }
    Real& threshold(std::size_t k) { return values[4 * k + 3]; }
    Real a(std::size_t k) const { return values[4 * k]; }
    Real b(std::size_t k) const { return values[4 * k + 1]; }
    Real eta(std::size_t k) const { return values[4 * k + 2]; }
    Real threshold(std::size_t k) const { return values[4 * k + 3]; }

    std::size_t network_offset(std::size_t k) const noexcept
    {
        const std::size_t idx = arch.shared_network ? 0 : k;
        return arch.scalar_count() + idx * arch.network.param_count();
    }
    std::span<const Real> network(std::size_t k) const
    {
        return std::span<const Real>(values).subspan(network_offset(k), arch.network.param_count());
    }
    std::span<Real> network(std::size_t k)
    {
        return std::span<Real>(values).subspan(network_offset(k), arch.network.param_count());
    }

    void validate() const
    {
        detail::require(arch.n_blocks >= 1, "sugar: n_blocks must be >= 1");
        detail::require(values.size() == arch.param_count(), "sugar: parameter vector size does not match architecture");
        for (Real v : values) detail::require(std::isfinite(static_cast<double>(v)), "sugar: parameters must be finite");
        for (std::size_t k = 0; k < arch.n_blocks; ++k)
            detail::require(threshold(k) >= Real(0), "sugar: thresholds must be nonnegative");
    }

    template <class Other>
    SugarParams<Other> cast() const
    {
        SugarParams<Other> out(arch);
        for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<Other>(values[i]);
        return out;
    }
};

/// Iterates carried between blocks; f is the error-feedback variable.
struct SugarState {
    Image x, z, f;

    void validate() const
    {
        detail::require(x.data.same_shape(z.data) && x.data.same_shape(f.data), "sugar state: x, z, f must share a shape");
        detail::require(vec::all_finite(x.data.span()) && vec::all_finite(z.data.span()) && vec::all_finite(f.data.span()),
                        "sugar state: values must be finite");
    }
};

/// A together with the operator standing in for A^T in the reconstruction module.
class SugarOperators {
public:
    SugarOperators(const FanBeamGeometry& g, AdjointMode mode, FilterKind filter = FilterKind::ramp)
        : projector_(g), fbp_(std::make_unique<FbpOperator>(g, filter)), mode_(mode)
    {
    }

    const FanBeamGeometry& geometry() const noexcept { return projector_.geometry(); }
    const FanBeamProjector& projector() const noexcept { return projector_; }
    const FbpOperator& fbp() const noexcept { return *fbp_; }
    AdjointMode mode() const noexcept { return mode_; }

    /// B r, with B = A^T (exact) or the FBP operator.
    Image back(const Sinogram& r) const { return mode_ == AdjointMode::exact ? projector_.adjoint(r) : fbp_->apply(r); }
    /// B^T x
    Sinogram back_transpose(const Image& x) const
    {
        return mode_ == AdjointMode::exact ? projector_.apply(x) : fbp_->transpose(x);
    }

    /// x0 = FBP(y), z0 = x0, f0 = 0.
    SugarState default_init(const Sinogram& y) const
    {
        Image x0 = fbp_->apply(y);
        Image zero(x0.n(), x0.pixel_size_mm);
        return {x0, x0, zero};
    }

private:
    FanBeamProjector projector_;
    std::unique_ptr<FbpOperator> fbp_;
    AdjointMode mode_;
};

// ---------------------------------------------------------------------------
// Block modules

/// Reconstruction module: x - a B(Ax - y) - b (x - z - f). Writes B(Ax - y) to *grad_term.
inline Image rm_update(const SugarState& s, const Sinogram& y, const SugarOperators& ops, double a, double b,
                       Image* grad_term = nullptr)
{
    s.validate();
    detail::require_image_matches(s.x, ops.geometry(), "rm_update");
    detail::require_sinogram_matches(y, ops.geometry(), "rm_update");
    Image g = ops.back(ops.projector().apply(s.x) - y);
    Image out = s.x;
    auto& xv = out.data.values;
    for (std::size_t i = 0; i < xv.size(); ++i)
        xv[i] += -a * g.data.values[i] - b * (s.x.data.values[i] - s.z.data.values[i] - s.f.data.values[i]);
    if (grad_term) *grad_term = std::move(g);
    return out;
}

inline Image rm_update(const SugarState& s, const Sinogram& y, const FanBeamGeometry& g, double a, double b,
                       AdjointMode mode)
{
    return rm_update(s, y, SugarOperators(g, mode), a, b);
}

/// Error-correction module: f - eta (x - z).
inline Image em_update(const Image& f, const Image& x, const Image& z, double eta)
{
    vec::require_same(f.data, x.data, "em_update");
    vec::require_same(f.data, z.data, "em_update");
    Image out = f;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data.values[i] -= eta * (x.data.values[i] - z.data.values[i]);
    return out;
}

namespace detail {

template <class Real>
nn::Tensor<Real> to_tensor(const Image& x)
{
    nn::Tensor<Real> t(1, x.data.rows, x.data.cols);
    for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = static_cast<Real>(x.data.values[i]);
    return t;
}

template <class Real>
Image to_image(const nn::Tensor<Real>& t, double pixel_size_mm)
{
    Image x(t.h, pixel_size_mm);
    for (std::size_t i = 0; i < t.v.size(); ++i) x.data.values[i] = static_cast<double>(t.v[i]);
    return x;
}

inline SparsifyingTransform analytic_pair(const SugarArchitecture& arch)
{
    return arch.dm == DmKind::haar ? SparsifyingTransform{TransformKind::haar, arch.haar_levels}
                                   : SparsifyingTransform{TransformKind::identity, 0};
}

} // namespace detail

/// Intermediate values of one deep-estimation pass, kept for backpropagation.
template <class Real>
struct DmCache {
    EncoderDecoderCache<Real> net;
    CoefficientSet coeffs; // analytic pair: H u before thresholding
};

/// Deep-estimation module: z = Q*(g_eps(Q(x - f))). eps is applied only when the
/// architecture enables explicit thresholding.
template <class Real>
Image dm_update(const Image& x, const Image& f, const SugarArchitecture& arch, std::span<const Real> network,
                double threshold, DmCache<Real>* cache = nullptr)
{
    vec::require_same(x.data, f.data, "dm_update");
    detail::require(threshold >= 0.0, "dm_update: threshold must be nonnegative");
    const Image u = x - f;
    if (arch.dm == DmKind::learned) {
        const Real eps = arch.use_threshold ? static_cast<Real>(threshold) : Real(-1);
        auto out = encoder_decoder_forward<Real>(arch.network, network, detail::to_tensor<Real>(u), eps,
                                                 cache ? &cache->net : nullptr);
        return detail::to_image(out, x.pixel_size_mm);
    }
    const SparsifyingTransform H = detail::analytic_pair(arch);
    if (arch.dm == DmKind::haar)
        detail::require(u.n() % (std::size_t{1} << arch.haar_levels) == 0,
                        "dm_update: image size not divisible by 2^haar_levels");
    CoefficientSet c = H.forward(u);
    if (cache) cache->coeffs = c;
    if (arch.use_threshold) soft_threshold_inplace(c, threshold);
    return H.adjoint(c, x.pixel_size_mm);
}

template <class Real>
Image dm_update(const Image& x, const Image& f, const SugarParams<Real>& p, std::size_t block)
{
    return dm_update<Real>(x, f, p.arch, p.arch.dm == DmKind::learned ? p.network(block) : std::span<const Real>{},
                           static_cast<double>(p.threshold(block)));
}

// ---------------------------------------------------------------------------
// Unrolled network

template <class Real>
struct BlockCache {
    SugarState in;
    Image grad_term; // B(Ax - y)
    Image x1, z1;
    DmCache<Real> dm;
};

template <class Real>
struct ForwardCache {
    std::vector<BlockCache<Real>> blocks;
};

/// K blocks of RM -> DM -> EM.
template <class Real>
SugarState sugar_run(const Sinogram& y, const SugarOperators& ops, const SugarParams<Real>& p, SugarState state,
                     ForwardCache<Real>* cache = nullptr)
{
    p.validate();
    state.validate();
    detail::require_image_matches(state.x, ops.geometry(), "sugar_forward");
    if (cache) cache->blocks.assign(p.n_blocks(), {});
    for (std::size_t k = 0; k < p.n_blocks(); ++k) {
        BlockCache<Real>* bc = cache ? &cache->blocks[k] : nullptr;
        Image g;
        Image x1 = rm_update(state, y, ops, static_cast<double>(p.a(k)), static_cast<double>(p.b(k)), &g);
        Image z1 = dm_update<Real>(x1, state.f, p.arch,
                                   p.arch.dm == DmKind::learned ? p.network(k) : std::span<const Real>{},
                                   static_cast<double>(p.threshold(k)), bc ? &bc->dm : nullptr);
        Image f1 = em_update(state.f, x1, z1, static_cast<double>(p.eta(k)));
        if (bc) {
            bc->in = std::move(state);
            bc->grad_term = std::move(g);
            bc->x1 = x1;
            bc->z1 = z1;
        }
        state = SugarState{std::move(x1), std::move(z1), std::move(f1)};
    }
    return state;
}

template <class Real>
Image sugar_forward(const Sinogram& y, const SugarOperators& ops, const SugarParams<Real>& p, SugarState init)
{
    return sugar_run<Real>(y, ops, p, std::move(init)).x;
}

template <class Real>
Image sugar_forward(const Sinogram& y, const FanBeamGeometry& g, const SugarParams<Real>& p, SugarState init)
{
    SugarOperators ops(g, p.arch.adjoint, p.arch.fbp_filter);
    return sugar_forward<Real>(y, ops, p, std::move(init));
}

/// Backpropagates dLoss/dx_K through all blocks. Accumulates into grad (same layout as
/// p.values) and returns nothing else: the initial state is treated as a constant.
template <class Real>
void sugar_backward(const SugarOperators& ops, const SugarParams<Real>& p, const ForwardCache<Real>& cache,
                    const Image& grad_x_final, std::span<Real> grad)
{
    detail::require(grad.size() == p.values.size(), "sugar_backward: gradient size mismatch");
    const double ps = grad_x_final.pixel_size_mm;
    const std::size_t n = grad_x_final.n();
    Image gx = grad_x_final;
    Image gz(n, ps), gf(n, ps);
    const SparsifyingTransform H = detail::analytic_pair(p.arch);

    for (std::size_t k = p.n_blocks(); k-- > 0;) {
        const BlockCache<Real>& bc = cache.blocks[k];
        const double a = static_cast<double>(p.a(k));
        const double b = static_cast<double>(p.b(k));
        const double eta = static_cast<double>(p.eta(k));
        const double eps = static_cast<double>(p.threshold(k));
        const std::size_t N = gx.data.size();

        // EM: f1 = f - eta (x1 - z1)
        double g_eta = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double gfi = gf.data.values[i];
            g_eta -= gfi * (bc.x1.data.values[i] - bc.z1.data.values[i]);
            gx.data.values[i] -= eta * gfi;
            gz.data.values[i] += eta * gfi;
        }
        grad[4 * k + 2] += static_cast<Real>(g_eta);

        // DM: z1 = D(u), u = x1 - f
        Image gu;
        if (p.arch.dm == DmKind::learned) {
            const Real e = p.arch.use_threshold ? static_cast<Real>(eps) : Real(-1);
            Real g_eps = 0;
            const std::size_t off = p.network_offset(k);
            auto gnet = grad.subspan(off, p.arch.network.param_count());
            auto gt = encoder_decoder_backward<Real>(p.arch.network, p.network(k), bc.dm.net,
                                                     detail::to_tensor<Real>(gz), e, gnet, &g_eps);
            if (p.arch.use_threshold) grad[4 * k + 3] += g_eps;
            gu = detail::to_image(gt, ps);
        } else {
            CoefficientSet gc = H.forward(gz);
            if (p.arch.use_threshold) {
                double g_eps = 0.0;
                for (std::size_t bnd = 0; bnd < gc.bands.size(); ++bnd) {
                    auto& gv = gc.bands[bnd].values;
                    const auto& cv = bc.dm.coeffs.bands[bnd].values;
                    for (std::size_t i = 0; i < gv.size(); ++i) {
                        if (cv[i] > eps) {
                            g_eps -= gv[i];
                        } else if (cv[i] < -eps) {
                            g_eps += gv[i];
                        } else {
                            gv[i] = 0.0;
                        }
                    }
                }
                grad[4 * k + 3] += static_cast<Real>(g_eps);
            }
            gu = H.adjoint(gc, ps);
        }
        // gf currently holds dL/df1, which flows to f unchanged through EM
        for (std::size_t i = 0; i < N; ++i) {
            gx.data.values[i] += gu.data.values[i];
            gf.data.values[i] -= gu.data.values[i];
        }

        // RM: x1 = x - a B(Ax - y) - b (x - z - f)
        double g_a = 0.0, g_b = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double gxi = gx.data.values[i];
            g_a -= gxi * bc.grad_term.data.values[i];
            g_b -= gxi * (bc.in.x.data.values[i] - bc.in.z.data.values[i] - bc.in.f.data.values[i]);
        }
        grad[4 * k] += static_cast<Real>(g_a);
        grad[4 * k + 1] += static_cast<Real>(g_b);

        const Image through = ops.projector().adjoint(ops.back_transpose(gx));
        Image gx_in(n, ps), gz_in(n, ps);
        for (std::size_t i = 0; i < N; ++i) {
            const double gxi = gx.data.values[i];
            gx_in.data.values[i] = (1.0 - b) * gxi - a * through.data.values[i];
            gz_in.data.values[i] = b * gxi;
            gf.data.values[i] += b * gxi;
        }
        gx = std::move(gx_in);
        gz = std::move(gz_in);
    }
}

/// Spectral norm of the data-term operator B A used by the reconstruction module:
/// ||A^T A|| for the exact adjoint, ||FBP A|| for the FBP surrogate.
inline double reconstruction_operator_norm(const SugarOperators& ops, int iterations = 50)
{
    const auto& A = ops.projector();
    const Image start = random_image(ops.geometry().image_n, ops.geometry().pixel_size_mm, 0x5eed);
    if (ops.mode() == AdjointMode::exact) return normal_operator_norm(A, iterations);
    const double s2 = power_iteration(
        [&](const Image& v) { return A.adjoint(ops.back_transpose(ops.back(A.apply(v)))); }, start, iterations);
    return std::sqrt(s2);
}

struct SugarInitOptions {
    /// lambda1 as a multiple of the data-term operator norm.
    double lambda1_ratio = 0.5;
    std::uint64_t seed = 0;
    /// Start every decoder at Q*Q = I.
    bool zero_output = true;
};

/// Scalars from the split-Bregman step rule a = 1/(L + lambda1), b = lambda1/(L + lambda1)
/// with L the power-iteration norm of the data-term operator; eta = 1, eps = 0;
/// network weights drawn from a seeded generator.
template <class Real>
SugarParams<Real> init_sugar_params(const SugarOperators& ops, const SugarArchitecture& arch,
                                    const SugarInitOptions& opt = {})
{
    detail::require(arch.n_blocks >= 1, "init_sugar_params: n_blocks must be >= 1");
    detail::require(ops.mode() == arch.adjoint, "init_sugar_params: operator mode differs from architecture");
    const double L = reconstruction_operator_norm(ops);
    const double lambda1 = opt.lambda1_ratio * L;
    SugarParams<Real> p(arch);
    for (std::size_t k = 0; k < arch.n_blocks; ++k) {
        p.a(k) = static_cast<Real>(1.0 / (L + lambda1));
        p.b(k) = static_cast<Real>(lambda1 / (L + lambda1));
        p.eta(k) = Real(1);
        p.threshold(k) = Real(0);
    }
    std::mt19937_64 rng(opt.seed);
    for (std::size_t m = 0; m < arch.n_networks(); ++m)
        init_encoder_decoder<Real>(arch.network, p.network(m), rng, opt.zero_output);
    return p;
}

template <class Real>
SugarParams<Real> init_sugar_params(const FanBeamGeometry& g, const SugarArchitecture& arch,
                                    const SugarInitOptions& opt = {})
{
    return init_sugar_params<Real>(SugarOperators(g, arch.adjoint, arch.fbp_filter), arch, opt);
}

} // namespace sugarct
