#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "noise.hpp"
#include "phantom.hpp"
#include "solvers.hpp"
#include "two_stage.hpp"

// Shared plumbing for the desk-scale experiments driven by the CLI and the acceptance suite.
namespace sugarct {

struct NoiseSpec {
    bool enabled = false;
    NoiseKind kind = NoiseKind::gaussian;
    double level = 0.0;
};

struct CorpusSpec {
    std::size_t n_train = 180;
    std::size_t n_test = 20;
    PhantomSpec phantom{};
    NoiseSpec noise{};
    std::uint64_t seed = 0;
};

struct Corpus {
    std::vector<GroundTruthPair> train, test;
};

inline Sinogram simulate(const Image& x, const FanBeamGeometry& g, const NoiseSpec& noise, std::uint64_t seed)
{
    Sinogram y = forward_project(x, g);
    if (!noise.enabled) return y;
    return add_noise(y, noise.kind, noise.level, seed).sinogram;
}

/// Phantom i uses seed + i; its noise stream uses a second, disjoint seed sequence.
inline Corpus make_corpus(const FanBeamGeometry& g, const CorpusSpec& spec)
{
    detail::require(spec.n_train >= 1 && spec.n_test >= 1, "corpus: need at least one training and one test phantom");
    Corpus c;
    const std::size_t total = spec.n_train + spec.n_test;
    for (std::size_t i = 0; i < total; ++i) {
        PhantomSpec ps = spec.phantom;
        ps.n = g.image_n;
        ps.seed = spec.seed + i;
        Image x = make_phantom(ps, g.pixel_size_mm);
        Sinogram y = simulate(x, g, spec.noise, ~spec.seed - i);
        (i < spec.n_train ? c.train : c.test).push_back({std::move(y), std::move(x)});
    }
    return c;
}

struct SugarExperimentConfig {
    SugarArchitecture arch{};
    std::size_t le_n = 64;
    SugarInitOptions init{};
    TrainConfig le_train{};
    TrainConfig hr_train{};
};

template <class Real>
struct StagedModel {
    SugarParams<Real> le, hr;
    std::vector<double> le_loss, hr_loss;
};

template <class Real>
StagedModel<Real> untrained_staged(const TwoStageOperators& ops, const SugarExperimentConfig& cfg)
{
    StagedModel<Real> m;
    m.le = init_sugar_params<Real>(ops.le(), cfg.arch, cfg.init);
    SugarInitOptions hr_opt = cfg.init;
    hr_opt.seed = cfg.init.seed + 1;
    m.hr = init_sugar_params<Real>(ops.hr(), cfg.arch, hr_opt);
    return m;
}

template <class Real>
StagedModel<Real> train_staged(const std::vector<GroundTruthPair>& data, const TwoStageOperators& ops,
                               const SugarExperimentConfig& cfg)
{
    StagedModel<Real> m = untrained_staged<Real>(ops, cfg);
    auto r = train_two_stage<Real>(data, ops, cfg.le_train, cfg.hr_train, m.le, m.hr);
    m.le = std::move(r.le.params);
    m.hr = std::move(r.hr.params);
    m.le_loss = std::move(r.le.loss_history);
    m.hr_loss = std::move(r.hr.loss_history);
    return m;
}

/// Single-stage network on the HR grid with the same parameter and epoch budget as the
/// staged pair: twice the blocks, trained for the sum of both stages' epochs.
inline SugarExperimentConfig direct_budget(const SugarExperimentConfig& staged)
{
    SugarExperimentConfig d = staged;
    d.arch.n_blocks = 2 * staged.arch.n_blocks;
    d.hr_train.epochs = staged.le_train.epochs + staged.hr_train.epochs;
    return d;
}

template <class Real>
TrainResult<Real> train_direct(const std::vector<GroundTruthPair>& data, const SugarOperators& ops,
                               const SugarExperimentConfig& staged)
{
    const SugarExperimentConfig d = direct_budget(staged);
    std::vector<TrainingSample> set;
    set.reserve(data.size());
    for (const auto& p : data) set.push_back({p.y, p.truth, std::nullopt});
    return train_sugar<Real>(set, ops, d.hr_train, init_sugar_params<Real>(ops, d.arch, d.init));
}

/// Split-Bregman TV configured for the desk experiments: lambda1 a fixed fraction of
/// ||A^T A||, FBP start.
inline SplitBregmanConfig desk_sb_tv(double lambda, double normal_norm, std::size_t n_iters = 300)
{
    SplitBregmanConfig c;
    c.lambda = lambda;
    c.normal_norm = normal_norm;
    c.lambda1 = 0.1 * normal_norm;
    c.transform = {TransformKind::gradient, 0};
    c.x0_mode = InitMode::fbp;
    c.n_iters = n_iters;
    return c;
}

/// Picks the split-Bregman weight with the best mean PSNR on a tuning subset.
inline double tune_sb_lambda(const std::vector<GroundTruthPair>& tuning, const FanBeamProjector& A,
                             const std::vector<double>& candidates, double normal_norm, std::size_t n_iters = 300)
{
    detail::require(!candidates.empty(), "tune_sb_lambda: no candidates");
    double best = candidates.front(), best_psnr = -std::numeric_limits<double>::infinity();
    const FbpOperator F(A.geometry(), FilterKind::ramp);
    for (double lam : candidates) {
        const auto cfg = desk_sb_tv(lam, normal_norm, n_iters);
        double sum = 0.0;
        for (const auto& p : tuning) sum += psnr(split_bregman(A, p.y, F.apply(p.y), cfg).first, p.truth);
        if (sum > best_psnr) {
            best_psnr = sum;
            best = lam;
        }
    }
    return best;
}

} // namespace sugarct
