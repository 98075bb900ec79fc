#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "phantom.hpp"
#include "sugar.hpp"
#include "train.hpp"

namespace sugarct {

/// Bilinear upsampling with pixel-centre alignment; samples outside the source grid
/// clamp to the border.
inline Image upsample(const Image& x, std::size_t factor)
{
    detail::require(factor >= 1, "upsample: factor must be >= 1");
    if (factor == 1) return x;
    const std::size_t n = x.n(), m = n * factor;
    Image out(m, x.pixel_size_mm / static_cast<double>(factor));
    const double f = static_cast<double>(factor);
    const double hi = static_cast<double>(n - 1);
    std::vector<std::size_t> i0(m), i1(m);
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double s = std::clamp((static_cast<double>(i) + 0.5) / f - 0.5, 0.0, hi);
        i0[i] = static_cast<std::size_t>(s);
        i1[i] = std::min(i0[i] + 1, n - 1);
        w[i] = s - static_cast<double>(i0[i]);
    }
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const double top = (1.0 - w[c]) * x(i0[r], i0[c]) + w[c] * x(i0[r], i1[c]);
            const double bot = (1.0 - w[c]) * x(i1[r], i0[c]) + w[c] * x(i1[r], i1[c]);
            out(r, c) = (1.0 - w[r]) * top + w[r] * bot;
        }
    return out;
}

inline std::size_t two_stage_factor(const FanBeamGeometry& g, std::size_t le_n)
{
    detail::require(le_n >= 2 && le_n <= g.image_n, "two-stage: le_n must be in [2, image_n]");
    detail::require(g.image_n % le_n == 0, "two-stage: image_n must be an integer multiple of le_n");
    return g.image_n / le_n;
}

/// Operators for both stages: the LE geometry keeps the physical field of view.
class TwoStageOperators {
public:
    TwoStageOperators(const FanBeamGeometry& g, std::size_t le_n, const SugarArchitecture& le_arch,
                      const SugarArchitecture& hr_arch)
        : factor_(two_stage_factor(g, le_n)),
          le_(with_image_size(g, le_n), le_arch.adjoint, le_arch.fbp_filter),
          hr_(g, hr_arch.adjoint, hr_arch.fbp_filter)
    {
    }

    std::size_t factor() const noexcept { return factor_; }
    const SugarOperators& le() const noexcept { return le_; }
    const SugarOperators& hr() const noexcept { return hr_; }

    /// HR starting point: x = z = upsampled LE image, f = 0.
    SugarState hr_init(const Image& le_image) const
    {
        Image up = upsample(le_image, factor_);
        up.pixel_size_mm = hr_.geometry().pixel_size_mm;
        Image zero(up.n(), up.pixel_size_mm);
        return {up, up, zero};
    }

private:
    std::size_t factor_;
    SugarOperators le_;
    SugarOperators hr_;
};

struct TwoStageOutput {
    Image le;        // LE reconstruction at le_n
    Image upsampled; // LE reconstruction upsampled to the HR grid
    Image hr;        // final output
};

template <class Real>
TwoStageOutput two_stage_run(const Sinogram& y, const TwoStageOperators& ops, const SugarParams<Real>& le_params,
                             const SugarParams<Real>& hr_params)
{
    TwoStageOutput out;
    out.le = sugar_forward<Real>(y, ops.le(), le_params, ops.le().default_init(y));
    SugarState init = ops.hr_init(out.le);
    out.upsampled = init.x;
    out.hr = sugar_forward<Real>(y, ops.hr(), hr_params, std::move(init));
    return out;
}

template <class Real>
Image two_stage_recon(const Sinogram& y, const FanBeamGeometry& g, const SugarParams<Real>& le_params,
                      const SugarParams<Real>& hr_params, std::size_t le_n)
{
    detail::require_sinogram_matches(y, g, "two_stage_recon");
    TwoStageOperators ops(g, le_n, le_params.arch, hr_params.arch);
    return two_stage_run<Real>(y, ops, le_params, hr_params).hr;
}

struct GroundTruthPair {
    Sinogram y;
    Image truth; // on the HR grid
};

template <class Real>
struct TwoStageTraining {
    TrainResult<Real> le;
    TrainResult<Real> hr;
};

/// Trains LE against block-averaged truths, then HR starting from the trained LE outputs.
template <class Real>
TwoStageTraining<Real> train_two_stage(const std::vector<GroundTruthPair>& data, const TwoStageOperators& ops,
                                       const TrainConfig& le_cfg, const TrainConfig& hr_cfg,
                                       SugarParams<Real> le_init, SugarParams<Real> hr_init)
{
    std::vector<TrainingSample> le_set;
    le_set.reserve(data.size());
    for (const auto& d : data) {
        Image t = block_average(d.truth, ops.factor());
        t.pixel_size_mm = ops.le().geometry().pixel_size_mm;
        le_set.push_back({d.y, std::move(t), std::nullopt});
    }
    TwoStageTraining<Real> out;
    out.le = train_sugar<Real>(le_set, ops.le(), le_cfg, std::move(le_init));

    std::vector<TrainingSample> hr_set;
    hr_set.reserve(data.size());
    for (const auto& d : data) {
        const Image le = sugar_forward<Real>(d.y, ops.le(), out.le.params, ops.le().default_init(d.y));
        hr_set.push_back({d.y, d.truth, ops.hr_init(le)});
    }
    out.hr = train_sugar<Real>(hr_set, ops.hr(), hr_cfg, std::move(hr_init));
    return out;
}

} // namespace sugarct
